//! AHA 17-segment wall thickness and LGE burden, written as SVG.
//!
//! `cargo run -p cardiac-core --example bullseye [out.svg]`

use cardiac_core::aha17::analyze_segments;
use cardiac_core::backends::phantom::{phantom_generate, Bulge, LgeSector, PhantomSpec};

fn main() {
    let spec = PhantomSpec {
        bulge: Some(Bulge {
            theta0_deg: 110.0,
            theta1_deg: 230.0,
            thickness_mm: 16.0,
        }),
        lge: vec![LgeSector {
            slices: None,
            theta0_deg: 170.0,
            theta1_deg: 230.0,
        }],
        ..PhantomSpec::normal()
    };
    let p = phantom_generate(&spec).expect("valid phantom");
    let ed = &p.sax_masks[p.ed_phase];
    let lge = p.lge.as_ref().map(|(_, m)| m);
    let a = analyze_segments(ed, lge, None).expect("segmentable myocardium");
    println!("insertions {:?}", a.insertions);

    let thickness = a.thickness.mean.export();
    for s in &thickness.segments {
        println!("{:>2} {:<22} {:?}", s.id, s.name, s.value);
    }
    if let Some(burden) = &a.lge {
        println!("LGE burden {:?}", burden.bullseye.values);
    }
    let out = std::env::args().nth(1).unwrap_or_else(|| "bullseye.svg".into());
    std::fs::write(&out, thickness.to_svg()).expect("writable output");
    println!("wrote {out}");
}
