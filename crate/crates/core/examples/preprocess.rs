//! The standard preprocessing pipeline for each sequence, stored as JSON
//! and replayed.
//!
//! `cargo run -p cardiac-core --example preprocess`

use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};
use cardiac_core::preprocess::{CropSpec, PreprocessSpec};
use cardiac_core::volume::Spacing;

fn main() {
    let spec = PhantomSpec {
        phases: 25,
        ..PhantomSpec::normal()
    };
    let p = phantom_generate(&spec).expect("valid phantom");
    let (ch4, ch4_masks) = p.ch4.as_ref().expect("4CH view");
    let (lge, lge_mask) = p.lge.as_ref().expect("LGE view");
    let cases = [(&p.sax, &p.sax_masks[p.ed_phase]), (ch4, &ch4_masks[p.ed_phase]), (lge, lge_mask)];
    for (volume, mask) in cases {
        let s = volume.spacing();
        let pipeline = CropSpec::for_kind(volume.kind()).pipeline(Spacing::new(s.dz, 1.25, 1.25));
        let json = pipeline.to_json();
        let replayed = PreprocessSpec::from_json(&json).expect("round-trips");
        let out = replayed.run(volume, Some(mask)).expect("pipeline applies");
        println!("{} {:?} -> {:?}", volume.kind(), volume.dims(), out.volume.dims());
    }
    println!("\n{}", CropSpec::for_kind(p.sax.kind()).pipeline(Spacing::new(8.0, 1.25, 1.25)).to_json());
}
