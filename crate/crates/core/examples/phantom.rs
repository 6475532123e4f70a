//! Generate a synthetic study and print its closed-form measurements.
//!
//! `cargo run -p cardiac-core --example phantom [seed]`

use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};

fn main() {
    let spec = match std::env::args().nth(1) {
        Some(seed) => PhantomSpec::random(seed.parse().expect("seed must be an integer")),
        None => PhantomSpec::normal(),
    };
    let p = phantom_generate(&spec).expect("valid phantom");
    println!("SAX cine {:?} (phase, slice, row, col)", p.sax.dims());
    for (name, view) in [("2CH", &p.ch2), ("4CH", &p.ch4)] {
        if let Some((v, _)) = view {
            println!("{name} cine {:?}", v.dims());
        }
    }
    if let Some((v, _)) = &p.lge {
        println!("LGE {:?}", v.dims());
    }
    println!("ED phase {}, ES phase {}", p.ed_phase, p.es_phase);
    print!("{}", p.analytic.table());
}
