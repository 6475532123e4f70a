use serde::{Deserialize, Serialize};

use super::MetricError;

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn new(tp: u64, fn_: u64, tn: u64, fp: u64) -> Self {
        BinaryCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Metrics whose quotient is undefined are `None`, never zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(c: &BinaryCounts) -> ConfusionMetrics {
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    ConfusionMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        sensitivity,
        specificity: ratio(c.tn, c.tn + c.fp),
        precision,
        f1,
    }
}

/// Support-weighted mean of per-class F1 values.
pub fn weighted_f1(per_class: &[(f64, u64)]) -> Result<f64, MetricError> {
    let total: u64 = per_class.iter().map(|(_, s)| s).sum();
    if total == 0 {
        return Err(MetricError::InvalidInput("all class supports are zero".into()));
    }
    Ok(per_class.iter().map(|(f, s)| f * *s as f64).sum::<f64>() / total as f64)
}

/// K×K confusion table, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub support: u64,
    pub counts: BinaryCounts,
    pub metrics: ConfusionMetrics,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    /// Builds the table from class-index pairs.
    pub fn from_predictions(classes: Vec<String>, truth: &[usize], predicted: &[usize]) -> Result<Self, MetricError> {
        if truth.len() != predicted.len() {
            return Err(MetricError::LengthMismatch {
                left: truth.len(),
                right: predicted.len(),
            });
        }
        let mut m = ConfusionMatrix::new(classes);
        let k = m.classes.len();
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(MetricError::InvalidInput(format!("class index {} out of range", t.max(p))));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn one_vs_rest(&self, k: usize) -> BinaryCounts {
        let tp = self.counts[k][k];
        let fn_ = self.support(k) - tp;
        let fp = self.counts.iter().map(|row| row[k]).sum::<u64>() - tp;
        BinaryCounts {
            tp,
            fn_,
            fp,
            tn: self.total() - tp - fn_ - fp,
        }
    }

    /// Overall accuracy: trace over total.
    pub fn accuracy(&self) -> Option<f64> {
        ratio((0..self.classes.len()).map(|k| self.counts[k][k]).sum(), self.total())
    }

    pub fn per_class(&self) -> Vec<ClassReport> {
        (0..self.classes.len())
            .map(|k| {
                let counts = self.one_vs_rest(k);
                ClassReport {
                    class: self.classes[k].clone(),
                    support: self.support(k),
                    counts,
                    metrics: confusion_metrics(&counts),
                }
            })
            .collect()
    }

    /// Frequency-weighted F1; a class whose F1 is undefined contributes 0.
    pub fn weighted_f1(&self) -> Result<f64, MetricError> {
        let rows: Vec<_> = self
            .per_class()
            .iter()
            .map(|r| (r.metrics.f1.unwrap_or(0.0), r.support))
            .collect();
        weighted_f1(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_case() {
        let m = confusion_metrics(&BinaryCounts::new(8, 2, 9, 1));
        assert_eq!(m.sensitivity, Some(0.8));
        assert_eq!(m.specificity, Some(0.9));
        assert_eq!(m.accuracy, Some(0.85));
        assert_eq!(m.precision, Some(8.0 / 9.0));
        let (p, s) = (8.0 / 9.0, 0.8);
        assert!((m.f1.unwrap() - 2.0 * p * s / (p + s)).abs() < 1e-15);
        assert!((m.f1.unwrap() - 0.8421052631578947).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_undefined() {
        let m = confusion_metrics(&BinaryCounts::new(5, 0, 7, 0));
        for v in [m.accuracy, m.sensitivity, m.specificity, m.precision, m.f1] {
            assert_eq!(v, Some(1.0));
        }
        let m = confusion_metrics(&BinaryCounts::new(0, 3, 7, 0));
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.sensitivity, Some(0.0));
    }

    #[test]
    fn weighted_f1_examples() {
        let w = weighted_f1(&[(0.8, 64), (0.9, 161), (0.7, 140)]).unwrap();
        assert!((w - (0.8 * 64.0 + 0.9 * 161.0 + 0.7 * 140.0) / 365.0).abs() < 1e-15);
        assert!((w - 0.80575).abs() < 5e-6);
        assert_eq!(weighted_f1(&[(0.42, 9)]).unwrap(), 0.42);
        assert!((weighted_f1(&[(0.2, 5), (0.6, 5)]).unwrap() - 0.4).abs() < 1e-15);
        assert!(weighted_f1(&[(0.2, 0)]).is_err());
    }

    #[test]
    fn one_vs_rest_from_table() {
        let m = ConfusionMatrix::from_predictions(
            vec!["NH".into(), "IHD".into(), "NICM".into()],
            &[0, 0, 1, 1, 2, 2, 2],
            &[0, 1, 1, 1, 2, 0, 2],
        )
        .unwrap();
        assert_eq!(m.one_vs_rest(0), BinaryCounts::new(1, 1, 4, 1));
        assert_eq!(m.accuracy(), Some(5.0 / 7.0));
        for k in 0..3 {
            assert_eq!(m.one_vs_rest(k).total(), m.total());
        }
    }

    proptest! {
        #[test]
        fn accuracy_exact_and_f1_between(tp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50, fp in 0u64..50) {
            let c = BinaryCounts::new(tp, fn_, tn, fp);
            let m = confusion_metrics(&c);
            if c.total() > 0 {
                prop_assert_eq!(m.accuracy, Some((tp + tn) as f64 / c.total() as f64));
            }
            if let (Some(p), Some(s), Some(f)) = (m.precision, m.sensitivity, m.f1) {
                prop_assert!(f >= p.min(s) - 1e-12 && f <= p.max(s) + 1e-12);
            }
        }
    }
}
