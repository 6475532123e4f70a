//! Dice, Hausdorff and average surface distance between two masks.
//!
//! `cargo run -p cardiac-core --example segmentation_metrics`

use cardiac_core::metrics::{asd, dsc, evaluate_case, hausdorff};
use cardiac_core::volume::{FrameRef, LabelMask, SequenceKind, Spacing};
use ndarray::Array3;

fn sphere(n: usize, c: [f64; 3], r: f64, spacing: Spacing) -> LabelMask {
    let labels = Array3::from_shape_fn((n, n, n), |(z, y, x)| {
        let d = ((z as f64 - c[0]) * spacing.dz).hypot((y as f64 - c[1]) * spacing.dy).hypot((x as f64 - c[2]) * spacing.dx);
        u8::from(d <= r)
    });
    LabelMask::new(SequenceKind::SaxCine, labels, spacing, FrameRef::default()).expect("valid mask")
}

fn main() {
    let spacing = Spacing::new(2.0, 1.0, 1.0);
    let gt = sphere(32, [16.0, 16.0, 16.0], 10.0, spacing);
    let pred = sphere(32, [16.0, 17.0, 15.0], 9.0, spacing);

    println!("DSC  {:.4}", dsc(&pred, &gt, 1).unwrap());
    println!("HD   {:.3} mm", hausdorff(&pred, &gt, 1).unwrap());
    println!("ASD  {:.3} mm", asd(&pred, &gt, 1).unwrap());

    let record = evaluate_case("sphere", &pred, &gt, 1).unwrap();
    println!("{}", serde_json::to_string(&record).unwrap());
}
