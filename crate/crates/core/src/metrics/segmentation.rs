use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use super::edt::squared_distance_field;
use super::roc::percentile;
use super::MetricError;
use crate::volume::{LabelMask, Spacing};

/// Boundary voxels of one label: voxels carrying the label with at least one
/// face neighbour that does not. The volume border counts as background.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    pub voxels: Vec<[usize; 3]>,
    pub dims: [usize; 3],
    pub spacing: Spacing,
    /// The label has no voxels at all, as opposed to a label with no boundary.
    pub label_absent: bool,
}

impl SurfaceSet {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn to_mask(&self) -> Array3<bool> {
        let mut m = Array3::from_elem(self.dims, false);
        for v in &self.voxels {
            m[*v] = true;
        }
        m
    }
}

/// Surface of `label` in a raw label array.
pub fn surface_of(labels: &Array3<u8>, label: u8, spacing: Spacing) -> SurfaceSet {
    let (nz, ny, nx) = labels.dim();
    let inside = |z: isize, y: isize, x: isize| {
        z >= 0
            && y >= 0
            && x >= 0
            && (z as usize) < nz
            && (y as usize) < ny
            && (x as usize) < nx
            && labels[[z as usize, y as usize, x as usize]] == label
    };
    let mut voxels = Vec::new();
    let mut any = false;
    for ((z, y, x), &l) in labels.indexed_iter() {
        if l != label {
            continue;
        }
        any = true;
        let (zi, yi, xi) = (z as isize, y as isize, x as isize);
        let boundary = !inside(zi - 1, yi, xi)
            || !inside(zi + 1, yi, xi)
            || !inside(zi, yi - 1, xi)
            || !inside(zi, yi + 1, xi)
            || !inside(zi, yi, xi - 1)
            || !inside(zi, yi, xi + 1);
        if boundary {
            voxels.push([z, y, x]);
        }
    }
    SurfaceSet {
        voxels,
        dims: [nz, ny, nx],
        spacing,
        label_absent: !any,
    }
}

/// Surface of `label` in a mask; the label must belong to the mask schema.
pub fn surface_extract(mask: &LabelMask, label: u8) -> Result<SurfaceSet, MetricError> {
    check_label(mask, label)?;
    Ok(surface_of(mask.labels(), label, mask.spacing()))
}

fn check_label(mask: &LabelMask, label: u8) -> Result<(), MetricError> {
    if label == 0 || !mask.schema().contains(label) {
        return Err(MetricError::UnknownLabel(label));
    }
    Ok(())
}

fn check_pair(a: &LabelMask, b: &LabelMask, label: u8) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimMismatch {
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    if !a.spacing().approx_eq(&b.spacing()) {
        return Err(MetricError::SpacingMismatch);
    }
    check_label(a, label)?;
    check_label(b, label)
}

/// Dice coefficient on raw label arrays. Two empty sets score 1.
pub fn dsc_labels(a: &Array3<u8>, b: &Array3<u8>, label: u8) -> Result<f64, MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::DimMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    Zip::from(a).and(b).for_each(|&x, &y| {
        let (ia, ib) = (x == label, y == label);
        na += ia as u64;
        nb += ib as u64;
        both += (ia && ib) as u64;
    });
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok((2 * both) as f64 / (na + nb) as f64)
}

pub fn dsc(a: &LabelMask, b: &LabelMask, label: u8) -> Result<f64, MetricError> {
    check_pair(a, b, label)?;
    dsc_labels(a.labels(), b.labels(), label)
}

/// Distance in mm from each voxel of `from` to the nearest voxel of `to`.
fn directed(from: &SurfaceSet, to: &SurfaceSet) -> Vec<f64> {
    let field = squared_distance_field(&to.to_mask(), to.spacing);
    from.voxels.iter().map(|v| field[*v].sqrt()).collect()
}

fn nonempty_surfaces(a: &LabelMask, b: &LabelMask, label: u8) -> Result<(SurfaceSet, SurfaceSet), MetricError> {
    check_pair(a, b, label)?;
    let sa = surface_of(a.labels(), label, a.spacing());
    let sb = surface_of(b.labels(), label, b.spacing());
    if sa.is_empty() || sb.is_empty() {
        return Err(MetricError::UndefinedMetric(format!(
            "surface of label {label} is empty in {}",
            match (sa.is_empty(), sb.is_empty()) {
                (true, true) => "both masks",
                (true, false) => "the first mask",
                _ => "the second mask",
            }
        )));
    }
    Ok((sa, sb))
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance in mm: the larger of the two directed
/// max-min surface distances.
pub fn hausdorff(a: &LabelMask, b: &LabelMask, label: u8) -> Result<f64, MetricError> {
    let (sa, sb) = nonempty_surfaces(a, b, label)?;
    Ok(max(&directed(&sa, &sb)).max(max(&directed(&sb, &sa))))
}

/// Percentile Hausdorff distance (`q` in `[0, 100]`, e.g. 95) over the pooled
/// directed distances of both surfaces, linearly interpolated.
pub fn hausdorff_percentile(a: &LabelMask, b: &LabelMask, label: u8, q: f64) -> Result<f64, MetricError> {
    if !(0.0..=100.0).contains(&q) {
        return Err(MetricError::InvalidInput(format!("percentile {q} outside [0, 100]")));
    }
    let (sa, sb) = nonempty_surfaces(a, b, label)?;
    let mut all = directed(&sa, &sb);
    all.extend(directed(&sb, &sa));
    all.sort_by(f64::total_cmp);
    Ok(percentile(&all, q / 100.0))
}

/// Average surface distance in mm, one-directional: mean over ground-truth
/// surface voxels of the distance to the nearest predicted surface voxel.
pub fn asd(pred: &LabelMask, gt: &LabelMask, label: u8) -> Result<f64, MetricError> {
    let (sp, sg) = nonempty_surfaces(pred, gt, label)?;
    let d = directed(&sg, &sp);
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Per-case metric record as emitted by `seg-eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub case_id: String,
    pub label: u8,
    pub dsc: f64,
    /// Absent when either surface is empty.
    pub hd_mm: Option<f64>,
    pub asd_mm: Option<f64>,
}

/// All three headline metrics for one case; distance metrics computed from
/// one pair of distance fields.
pub fn evaluate_case(case_id: &str, pred: &LabelMask, gt: &LabelMask, label: u8) -> Result<SegmentationRecord, MetricError> {
    let dsc = dsc(pred, gt, label)?;
    let (hd_mm, asd_mm) = match nonempty_surfaces(pred, gt, label) {
        Ok((sp, sg)) => {
            let gp = directed(&sg, &sp);
            let pg = directed(&sp, &sg);
            let asd = gp.iter().sum::<f64>() / gp.len() as f64;
            (Some(max(&gp).max(max(&pg))), Some(asd))
        }
        Err(MetricError::UndefinedMetric(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(SegmentationRecord {
        case_id: case_id.to_string(),
        label,
        dsc,
        hd_mm,
        asd_mm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{FrameRef, SequenceKind};
    use proptest::prelude::*;

    fn mask(dims: (usize, usize, usize), voxels: &[[usize; 3]], spacing: Spacing) -> LabelMask {
        let mut l = Array3::zeros(dims);
        for v in voxels {
            l[*v] = 1;
        }
        LabelMask::new(SequenceKind::SaxCine, l, spacing, FrameRef::default()).unwrap()
    }

    fn iso() -> Spacing {
        Spacing::isotropic(1.0)
    }

    #[test]
    fn cube_surface_excludes_only_the_centre() {
        let mut l = Array3::zeros((5, 5, 5));
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    l[[z, y, x]] = 1;
                }
            }
        }
        let s = surface_of(&l, 1, iso());
        assert_eq!(s.len(), 26);
        assert!(!s.voxels.contains(&[2, 2, 2]));
    }

    #[test]
    fn single_voxel_and_absent_label() {
        let m = mask((3, 3, 3), &[[1, 1, 1]], iso());
        assert_eq!(surface_extract(&m, 1).unwrap().voxels, vec![[1, 1, 1]]);
        let s = surface_extract(&m, 2).unwrap();
        assert!(s.is_empty() && s.label_absent);
        assert_eq!(surface_extract(&m, 7), Err(MetricError::UnknownLabel(7)));
    }

    #[test]
    fn dsc_examples() {
        let a = mask((1, 1, 8), &[[0, 0, 0], [0, 0, 1], [0, 0, 2]], iso());
        let b = mask((1, 1, 8), &[[0, 0, 1], [0, 0, 2], [0, 0, 3], [0, 0, 4]], iso());
        assert_eq!(dsc(&a, &b, 1).unwrap(), 4.0 / 7.0);
        assert_eq!(dsc(&a, &a, 1).unwrap(), 1.0);
        let c = mask((1, 1, 8), &[[0, 0, 7]], iso());
        assert_eq!(dsc(&a, &c, 1).unwrap(), 0.0);
        let e = mask((1, 1, 8), &[], iso());
        assert_eq!(dsc(&e, &e, 1).unwrap(), 1.0);
        assert_eq!(dsc(&e, &a, 1).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_examples() {
        let a = mask((1, 4, 5), &[[0, 0, 0]], iso());
        let b = mask((1, 4, 5), &[[0, 3, 4]], iso());
        assert!((hausdorff(&a, &b, 1).unwrap() - 5.0).abs() < 1e-12);
        let a = mask((1, 1, 11), &[[0, 0, 0], [0, 0, 10]], iso());
        let b = mask((1, 1, 11), &[[0, 0, 0]], iso());
        assert_eq!(hausdorff(&a, &b, 1).unwrap(), 10.0);
        assert_eq!(hausdorff(&b, &a, 1).unwrap(), 10.0);
    }

    #[test]
    fn asd_is_directional() {
        let gt = mask((1, 1, 3), &[[0, 0, 0], [0, 0, 2]], iso());
        let pred = mask((1, 1, 3), &[[0, 0, 0]], iso());
        assert_eq!(asd(&pred, &gt, 1).unwrap(), 1.0);
        assert_eq!(asd(&gt, &pred, 1).unwrap(), 0.0);
        assert_eq!(asd(&gt, &gt, 1).unwrap(), 0.0);
    }

    #[test]
    fn empty_surface_is_undefined() {
        let a = mask((2, 2, 2), &[[0, 0, 0]], iso());
        let e = mask((2, 2, 2), &[], iso());
        assert!(matches!(hausdorff(&a, &e, 1), Err(MetricError::UndefinedMetric(_))));
        assert!(matches!(asd(&e, &a, 1), Err(MetricError::UndefinedMetric(_))));
        let r = evaluate_case("c", &a, &e, 1).unwrap();
        assert_eq!((r.dsc, r.hd_mm, r.asd_mm), (0.0, None, None));
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let a = mask((2, 2, 2), &[], iso());
        let b = mask((2, 2, 3), &[], iso());
        assert!(matches!(dsc(&a, &b, 1), Err(MetricError::DimMismatch { .. })));
    }

    #[test]
    fn percentile_variant_is_bounded_by_hausdorff() {
        let a = mask((1, 1, 11), &[[0, 0, 0], [0, 0, 10]], iso());
        let b = mask((1, 1, 11), &[[0, 0, 0]], iso());
        let hd = hausdorff(&a, &b, 1).unwrap();
        assert_eq!(hausdorff_percentile(&a, &b, 1, 100.0).unwrap(), hd);
        assert!(hausdorff_percentile(&a, &b, 1, 95.0).unwrap() <= hd);
    }

    fn random_mask() -> impl Strategy<Value = Array3<u8>> {
        proptest::collection::vec(prop::bool::weighted(0.3), 6 * 6 * 6)
            .prop_map(|b| Array3::from_shape_vec((6, 6, 6), b.into_iter().map(u8::from).collect()).unwrap())
    }

    fn padded(l: &Array3<u8>, off: [usize; 3]) -> LabelMask {
        let mut big = Array3::zeros((10, 10, 10));
        for ((z, y, x), &v) in l.indexed_iter() {
            big[[z + off[0], y + off[1], x + off[2]]] = v;
        }
        LabelMask::new(SequenceKind::SaxCine, big, Spacing::new(2.0, 1.0, 0.7), FrameRef::default()).unwrap()
    }

    proptest! {
        #[test]
        fn symmetry_translation_and_ordering(a in random_mask(), b in random_mask(), off in proptest::array::uniform3(0usize..4)) {
            let (ma, mb) = (padded(&a, [1, 1, 1]), padded(&b, [1, 1, 1]));
            let (ta, tb) = (padded(&a, off), padded(&b, off));
            prop_assert_eq!(dsc(&ma, &mb, 1).unwrap(), dsc(&mb, &ma, 1).unwrap());
            prop_assert_eq!(dsc(&ma, &mb, 1).unwrap(), dsc(&ta, &tb, 1).unwrap());
            if let (Ok(h), Ok(h2)) = (hausdorff(&ma, &mb, 1), hausdorff(&mb, &ma, 1)) {
                prop_assert_eq!(h, h2);
                prop_assert!((h - hausdorff(&ta, &tb, 1).unwrap()).abs() < 1e-9);
                let d = asd(&ma, &mb, 1).unwrap();
                prop_assert!((d - asd(&ta, &tb, 1).unwrap()).abs() < 1e-9);
                prop_assert!(h + 1e-12 >= d);
            }
        }
    }
}
