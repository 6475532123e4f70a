//! Confusion-matrix metrics, ROC AUC with a bootstrap interval, and
//! Bland-Altman agreement.
//!
//! `cargo run -p cardiac-core --example classification_metrics`

use cardiac_core::metrics::{bland_altman, confusion_metrics, roc_auc, BinaryCounts, BootstrapConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let m = confusion_metrics(&BinaryCounts::new(8, 2, 9, 1));
    println!("sensitivity {:?}", m.sensitivity);
    println!("specificity {:?}", m.specificity);
    println!("accuracy    {:?}", m.accuracy);
    println!("F1          {:?}", m.f1);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
    let scores: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + if l { 0.4 } else { 0.0 }).collect();
    let cfg = BootstrapConfig {
        resamples: 2000,
        confidence: 0.95,
        seed: 1,
    };
    let r = roc_auc(&scores, &labels, &cfg).unwrap();
    println!("\nAUC {:.3} ({:?} to {:?}), {} positives, {} negatives", r.auc, r.ci_low, r.ci_high, r.n_pos, r.n_neg);

    let s = bland_altman(&[10.0, 20.0, 30.0], &[12.0, 19.0, 33.0]).unwrap();
    println!("\nbias {:.4}, SD {:.4}, limits ({:.4}, {:.4}), r {:?}", s.bias, s.sd, s.loa_low, s.loa_high, s.pearson_r);
}
