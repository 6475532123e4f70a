use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Number of resamples; 0 disables the interval.
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 2000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocAuc {
    pub auc: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricError::InvalidInput("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// Mann–Whitney AUC computed from midranks: the fraction of (positive,
/// negative) pairs ranked correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    Ok(auc_unchecked(scores, labels, n_pos, n_neg))
}

fn auc_unchecked(scores: &[f64], labels: &[bool], n_pos: usize, n_neg: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the positive rank sum, kept integral so the count is exact.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the midrank (i + j + 2) / 2.
        let mid2 = (i + j + 2) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += mid2 * pos_in_tie;
        i = j + 1;
    }
    let np = n_pos as u128;
    let u2 = rank_sum2 - np * (np + 1);
    u2 as f64 / (2 * n_pos * n_neg) as f64
}

/// Value at quantile `q ∈ [0, 1]` of sorted data, linearly interpolated.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// AUC with a nonparametric percentile bootstrap interval. Resamples that
/// happen to contain a single class are redrawn.
pub fn roc_auc(scores: &[f64], labels: &[bool], cfg: &BootstrapConfig) -> Result<RocAuc, MetricError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(MetricError::InvalidInput(format!("confidence {} outside (0, 1)", cfg.confidence)));
    }
    let value = auc_unchecked(scores, labels, n_pos, n_neg);
    if cfg.resamples == 0 {
        return Ok(RocAuc {
            auc: value,
            ci_low: None,
            ci_high: None,
            n_pos,
            n_neg,
        });
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    let mut stats = Vec::with_capacity(cfg.resamples);
    while stats.len() < cfg.resamples {
        for k in 0..n {
            let j = rng.random_range(0..n);
            s[k] = scores[j];
            l[k] = labels[j];
        }
        let p = l.iter().filter(|&&x| x).count();
        if p == 0 || p == n {
            continue;
        }
        stats.push(auc_unchecked(&s, &l, p, n - p));
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.confidence) / 2.0;
    Ok(RocAuc {
        auc: value,
        ci_low: Some(percentile(&stats, alpha)),
        ci_high: Some(percentile(&stats, 1.0 - alpha)),
        n_pos,
        n_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC operating points for every distinct threshold, from the strictest.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, MetricError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (idx, &k) in order.iter().enumerate() {
        if labels[k] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = order.get(idx + 1).is_none_or(|&n| scores[n] != scores[k]);
        if last_of_tie {
            points.push(RocPoint {
                threshold: scores[k],
                fpr: fp as f64 / n_neg as f64,
                tpr: tp as f64 / n_pos as f64,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let (mut np, mut nn) = (0u64, 0u64);
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                nn += 1;
                continue;
            }
            np += 1;
            for (j, &lj) in labels.iter().enumerate() {
                if !lj {
                    twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        twice as f64 / (2 * np * nn) as f64
    }

    #[test]
    fn examples() {
        let s = [0.9, 0.8, 0.4, 0.7, 0.3, 0.2];
        let l = [true, true, true, false, false, false];
        assert_eq!(auc(&s, &l).unwrap(), 8.0 / 9.0);
        assert_eq!(auc(&[1.0, 2.0, 3.0, 4.0], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.5, 0.7], &[true, true]), Err(MetricError::SingleClass));
    }

    #[test]
    fn bootstrap_is_seeded_and_brackets_estimate() {
        let s: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let l: Vec<bool> = (0..40).map(|i| (i as f64 * 0.37).sin() + ((i * 7) % 5) as f64 * 0.2 > 0.3).collect();
        let cfg = BootstrapConfig {
            resamples: 500,
            ..Default::default()
        };
        let a = roc_auc(&s, &l, &cfg).unwrap();
        let b = roc_auc(&s, &l, &cfg).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = (a.ci_low.unwrap(), a.ci_high.unwrap());
        assert!(lo <= a.auc && a.auc <= hi, "{a:?}");
        let none = roc_auc(&s, &l, &BootstrapConfig { resamples: 0, ..cfg }).unwrap();
        assert_eq!(none.ci_low, None);
    }

    #[test]
    fn curve_ends_at_one_one() {
        let pts = roc_curve(&[0.9, 0.8, 0.4, 0.7, 0.3, 0.2], &[true, true, true, false, false, false]).unwrap();
        assert_eq!(pts.first().unwrap().fpr, 0.0);
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
    }

    proptest! {
        #[test]
        fn matches_pair_count(data in proptest::collection::vec((0u8..12, any::<bool>()), 2..60)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            if let Ok(a) = auc(&scores, &labels) {
                prop_assert_eq!(a, pair_oracle(&scores, &labels));
                let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
                prop_assert_eq!(a, auc(&warped, &labels).unwrap());
            }
        }
    }
}
