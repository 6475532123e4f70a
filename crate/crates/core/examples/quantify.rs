//! Measure a phantom from its masks and compare with the analytic values.
//!
//! `cargo run -p cardiac-core --example quantify`

use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};
use cardiac_core::quantify::{quantify_study, StudyMasks};

fn main() {
    let spec = PhantomSpec::normal();
    let p = phantom_generate(&spec).expect("valid phantom");
    let measured = quantify_study(&StudyMasks {
        sax: p.sax_masks.clone(),
        ch4: p.ch4.as_ref().map(|(_, m)| m.clone()).unwrap_or_default(),
        heart_rate_bpm: spec.heart_rate_bpm,
        ..StudyMasks::default()
    })
    .expect("complete study");
    print!("{}", measured.table());

    println!("\nparameter      measured    analytic");
    for (name, m) in measured.iter() {
        if let Some(want) = p.analytic.value(name) {
            println!("{:<12} {:>10.2}  {:>10.2}", name.to_string(), m.value, want);
        }
    }
}
