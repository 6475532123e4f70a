//! In-plane distance measurements on label slices.
//!
//! Pixels are represented by their centres in physical millimetres
//! `(row * dy, col * dx)`. A chord is measured as the span of pixel centres
//! lying within half a pixel of a line, plus one pixel for the two half-pixel
//! ends.

use serde::{Deserialize, Serialize};

use super::{QuantError, QuantFlag};
use crate::volume::{LabelMask, Structure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diameter {
    pub mm: f64,
    pub slice: usize,
    pub flags: Vec<QuantFlag>,
}

type Pt = [f64; 2];

fn slice_points(mask: &LabelMask, z: usize, labels: &[u8]) -> Vec<Pt> {
    let s = mask.spacing();
    mask.slice(z)
        .indexed_iter()
        .filter(|(_, l)| labels.contains(l))
        .map(|((y, x), _)| [y as f64 * s.dy, x as f64 * s.dx])
        .collect()
}

fn pixel_size(mask: &LabelMask) -> f64 {
    mask.spacing().dy.min(mask.spacing().dx)
}

fn centroid(pts: &[Pt]) -> Pt {
    let n = pts.len() as f64;
    let (sy, sx) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [sy / n, sx / n]
}

/// Unit vector `(y, x)` of the principal (largest-variance) axis.
fn principal_axis(pts: &[Pt]) -> Pt {
    let c = centroid(pts);
    let (mut syy, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dy, dx) = (p[0] - c[0], p[1] - c[1]);
        syy += dy * dy;
        sxx += dx * dx;
        sxy += dx * dy;
    }
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    [phi.sin(), phi.cos()]
}

fn dot(a: Pt, b: Pt) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: Pt, b: Pt) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: Pt, b: Pt) -> Pt {
    [a[0] - b[0], a[1] - b[1]]
}

/// Span along `u` of the points within half a pixel of the line through `c`.
fn span_on_line(pts: &[Pt], c: Pt, u: Pt, pixel: f64) -> Option<(f64, f64)> {
    let band = 0.5 * pixel + 1e-9;
    let mut range: Option<(f64, f64)> = None;
    for p in pts {
        let d = sub(*p, c);
        if cross(d, u).abs() <= band {
            let t = dot(d, u);
            range = Some(match range {
                None => (t, t),
                Some((lo, hi)) => (lo.min(t), hi.max(t)),
            });
        }
    }
    range
}

/// Longest chord through the centroid of a pixel set, searched in 0.5°
/// steps.
pub fn max_chord_through_centroid(pts: &[Pt], pixel: f64) -> f64 {
    let c = centroid(pts);
    (0..360)
        .filter_map(|k| {
            let th = (k as f64 * 0.5).to_radians();
            span_on_line(pts, c, [th.sin(), th.cos()], pixel).map(|(lo, hi)| hi - lo + pixel)
        })
        .fold(0.0, f64::max)
}

fn bearing_slices(mask: &LabelMask, label: u8) -> Vec<usize> {
    (0..mask.dims()[0])
        .filter(|&z| mask.slice(z).iter().any(|&l| l == label))
        .collect()
}

fn median_slice_chord(mask: &LabelMask, structure: Structure) -> Result<Diameter, QuantError> {
    let label = mask
        .label_of(structure)
        .ok_or_else(|| QuantError::MissingStructure(structure.to_string()))?;
    let slices = bearing_slices(mask, label);
    if slices.is_empty() {
        return Err(QuantError::MissingStructure(structure.to_string()));
    }
    // Lower median for an even count.
    let z = slices[(slices.len() - 1) / 2];
    let mm = max_chord_through_centroid(&slice_points(mask, z, &[label]), pixel_size(mask));
    let flags = if slices.len() < 3 { vec![QuantFlag::FewSlices] } else { vec![] };
    Ok(Diameter { mm, slice: z, flags })
}

/// LV end-diastolic diameter: longest cavity chord through the cavity
/// centroid on the median cavity-bearing slice of an ED short-axis mask.
pub fn lvedd(sax_ed: &LabelMask) -> Result<Diameter, QuantError> {
    median_slice_chord(sax_ed, Structure::LvCavity)
}

/// RV end-diastolic diameter, measured like [`lvedd`] on the RV label.
/// Always flagged experimental.
pub fn rvedd(sax_ed: &LabelMask) -> Result<Diameter, QuantError> {
    let mut d = median_slice_chord(sax_ed, Structure::Rv)?;
    d.flags.push(QuantFlag::Experimental);
    Ok(d)
}

fn largest_slice(mask: &LabelMask, label: u8) -> Option<usize> {
    (0..mask.dims()[0])
        .map(|z| (z, mask.slice(z).iter().filter(|&&l| l == label).count()))
        .filter(|(_, n)| *n > 0)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(z, _)| z)
}

/// Maximum extent perpendicular to the principal axis: pixels are binned
/// into one-pixel slabs along the long axis and the widest slab wins.
fn transverse_diameter(pts: &[Pt], pixel: f64) -> f64 {
    let c = centroid(pts);
    let u = principal_axis(pts);
    let v = [-u[1], u[0]];
    let mut slabs: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for p in pts {
        let d = sub(*p, c);
        let k = (dot(d, u) / pixel).round() as i64;
        let t = dot(d, v);
        let e = slabs.entry(k).or_insert((t, t));
        e.0 = e.0.min(t);
        e.1 = e.1.max(t);
    }
    slabs.values().map(|(lo, hi)| hi - lo + pixel).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrialDiameters {
    pub la: Option<Diameter>,
    pub ra: Option<Diameter>,
}

/// Transverse diameters of both atria on a four-chamber mask, each on the
/// slice where that atrium is largest. A missing atrium yields `None`.
pub fn atrial_diameters(ch4: &LabelMask) -> AtrialDiameters {
    let measure = |s: Structure| {
        let label = ch4.label_of(s)?;
        let z = largest_slice(ch4, label)?;
        Some(Diameter {
            mm: transverse_diameter(&slice_points(ch4, z, &[label]), pixel_size(ch4)),
            slice: z,
            flags: vec![],
        })
    };
    AtrialDiameters {
        la: measure(Structure::LeftAtrium),
        ra: measure(Structure::RightAtrium),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApexReading {
    pub mm: f64,
    pub slice: usize,
    pub flags: Vec<QuantFlag>,
}

/// Apical wall thickness on a four-chamber mask: along the cavity's long
/// axis, the distance from the last cavity pixel to the last myocardial
/// pixel beyond it. The apex is the end capped by myocardium; when both ends
/// are capped the narrower end of the cavity is taken.
pub fn apex_thickness(ch4: &LabelMask) -> Result<ApexReading, QuantError> {
    let cav = ch4
        .label_of(Structure::LvCavity)
        .ok_or_else(|| QuantError::MissingStructure("LV cavity".into()))?;
    let myo = ch4
        .label_of(Structure::LvMyocardium)
        .ok_or_else(|| QuantError::MissingStructure("LV myocardium".into()))?;
    let z = largest_slice(ch4, cav).ok_or_else(|| QuantError::MissingStructure("LV cavity".into()))?;
    let cavity = slice_points(ch4, z, &[cav]);
    let wall = slice_points(ch4, z, &[myo]);
    if wall.is_empty() {
        return Err(QuantError::MissingStructure("LV myocardium".into()));
    }
    let pixel = pixel_size(ch4);
    let c = centroid(&cavity);
    let u = principal_axis(&cavity);
    let band = 0.5 * pixel + 1e-9;
    let on_axis = |pts: &[Pt]| -> Vec<f64> {
        pts.iter()
            .map(|p| sub(*p, c))
            .filter(|d| cross(*d, u).abs() <= band)
            .map(|d| dot(d, u))
            .collect()
    };
    let cav_t = on_axis(&cavity);
    let lo = cav_t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cav_t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wall_t = on_axis(&wall);
    let beyond_hi = wall_t.iter().filter(|&&t| t > hi).map(|t| t - hi).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let beyond_lo = wall_t.iter().filter(|&&t| t < lo).map(|t| lo - t).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let mm = match (beyond_lo, beyond_hi) {
        (None, None) => None,
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (Some(a), Some(b)) => {
            let quarter = (hi - lo) / 4.0;
            let near = |end: f64| cavity.iter().filter(|p| (dot(sub(**p, c), u) - end).abs() <= quarter).count();
            Some(if near(lo) <= near(hi) { a } else { b })
        }
    };
    Ok(match mm {
        Some(mm) => ApexReading {
            mm,
            slice: z,
            flags: vec![],
        },
        None => ApexReading {
            mm: 0.0,
            slice: z,
            flags: vec![QuantFlag::ThinApex],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{FrameRef, SequenceKind, Spacing};
    use ndarray::Array3;

    fn ellipse_slice(n: usize, ry: f64, rx: f64, label: u8, into: &mut Array3<u8>, z: usize, cy: f64, cx: f64) {
        for y in 0..n {
            for x in 0..into.dim().2 {
                let d = ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2);
                if d <= 1.0 {
                    into[[z, y, x]] = label;
                }
            }
        }
    }

    fn sax(labels: Array3<u8>) -> LabelMask {
        LabelMask::new(SequenceKind::SaxCine, labels, Spacing::new(8.0, 1.0, 1.0), FrameRef::default()).unwrap()
    }

    #[test]
    fn disk_chord() {
        let mut l = Array3::zeros((3, 64, 64));
        for z in 0..3 {
            ellipse_slice(64, 25.0, 25.0, 1, &mut l, z, 31.3, 32.1);
        }
        let d = lvedd(&sax(l)).unwrap();
        assert!((d.mm - 50.0).abs() <= 1.0, "{}", d.mm);
        assert_eq!(d.slice, 1);
        assert!(d.flags.is_empty());
    }

    #[test]
    fn ellipse_chord_and_single_voxel() {
        let mut l = Array3::zeros((3, 64, 64));
        for z in 0..3 {
            ellipse_slice(64, 15.0, 25.0, 1, &mut l, z, 32.0, 31.6);
        }
        let d = lvedd(&sax(l)).unwrap();
        assert!((d.mm - 50.0).abs() <= 1.0, "{}", d.mm);
        let mut l = Array3::zeros((1, 5, 5));
        l[[0, 2, 2]] = 1;
        let m = LabelMask::new(SequenceKind::SaxCine, l, Spacing::new(8.0, 1.4, 1.25), FrameRef::default()).unwrap();
        let d = lvedd(&m).unwrap();
        assert_eq!(d.mm, 1.25);
        assert_eq!(d.flags, vec![QuantFlag::FewSlices]);
        assert!(lvedd(&m.empty_like()).is_err());
    }

    fn ch4(labels: Array3<u8>) -> LabelMask {
        LabelMask::new(SequenceKind::Ch4Cine, labels, Spacing::new(8.0, 1.0, 1.0), FrameRef::default()).unwrap()
    }

    #[test]
    fn atrial_ellipse_and_disk() {
        let mut l = Array3::zeros((1, 80, 80));
        ellipse_slice(80, 10.0, 20.0, 5, &mut l, 0, 20.0, 40.0);
        ellipse_slice(80, 12.0, 12.0, 6, &mut l, 0, 55.0, 40.0);
        let a = atrial_diameters(&ch4(l.clone()));
        assert!((a.la.unwrap().mm - 20.0).abs() <= 1.0);
        assert!((a.ra.unwrap().mm - 24.0).abs() <= 1.0);
        l.mapv_inplace(|v| if v == 6 { 0 } else { v });
        let a = atrial_diameters(&ch4(l));
        assert!(a.la.is_some() && a.ra.is_none());
    }

    #[test]
    fn rotated_atrium() {
        let mut l = Array3::zeros((1, 90, 90));
        let th = 35f64.to_radians();
        for y in 0..90 {
            for x in 0..90 {
                let (dy, dx) = (y as f64 - 45.0, x as f64 - 44.5);
                let a = dx * th.cos() + dy * th.sin();
                let b = -dx * th.sin() + dy * th.cos();
                if (a / 20.0).powi(2) + (b / 10.0).powi(2) <= 1.0 {
                    l[[0, y, x]] = 5;
                }
            }
        }
        let d = atrial_diameters(&ch4(l)).la.unwrap().mm;
        assert!((d - 20.0).abs() <= 1.0, "{d}");
    }

    fn capped_ventricle(cap: usize) -> Array3<u8> {
        // Cavity: rows 20..60, cols 30..50 with a rounded apex at the top;
        // myocardium wraps the sides and the apex, base left open.
        let mut l = Array3::zeros((1, 90, 80));
        for y in 20..60usize {
            for x in 22..58usize {
                let inner = (30..50).contains(&x);
                if inner {
                    l[[0, y, x]] = 1;
                } else {
                    l[[0, y, x]] = 2;
                }
            }
        }
        for y in (20 - cap)..20 {
            for x in 22..58 {
                l[[0, y, x]] = 2;
            }
        }
        l
    }

    #[test]
    fn axis_aligned_apex_cap() {
        let r = apex_thickness(&ch4(capped_ventricle(8))).unwrap();
        assert!((r.mm - 8.0).abs() < 1e-9, "{}", r.mm);
        let r = apex_thickness(&ch4(capped_ventricle(0))).unwrap();
        assert_eq!((r.mm, r.flags), (0.0, vec![QuantFlag::ThinApex]));
    }

    #[test]
    fn apex_needs_both_structures() {
        let mut l = capped_ventricle(5);
        l.mapv_inplace(|v| if v == 2 { 0 } else { v });
        assert!(apex_thickness(&ch4(l)).is_err());
    }
}
