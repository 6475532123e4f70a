use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::angles::{angular_offset, visual_angle_deg};
use super::{sector_of, AhaError, Ring};
use crate::volume::{LabelMask, Spacing, Structure};

/// Angular gaps up to this many 1° bins inside an adjacency arc are bridged.
const ARC_GAP_BINS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionSource {
    Detected,
    Landmark,
}

/// Direction of the ring frame in the visual frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSense {
    Ccw,
    Cw,
}

impl RotationSense {
    pub fn sign(self) -> f64 {
        match self {
            RotationSense::Ccw => 1.0,
            RotationSense::Cw => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RotationSense::Ccw => "ccw",
            RotationSense::Cw => "cw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Insertions {
    pub anterior_deg: f64,
    pub inferior_deg: Option<f64>,
    pub source: InsertionSource,
}

impl Insertions {
    pub fn landmark(anterior_deg: f64) -> Self {
        Insertions {
            anterior_deg: anterior_deg.rem_euclid(360.0),
            inferior_deg: None,
            source: InsertionSource::Landmark,
        }
    }

    pub fn anterior_rad(&self) -> f64 {
        self.anterior_deg.to_radians()
    }

    /// Sense of the shorter arc from the anterior to the inferior insertion;
    /// counterclockwise when the inferior one is unknown.
    pub fn sense(&self) -> RotationSense {
        match self.inferior_deg {
            Some(inf) if angular_offset(inf, self.anterior_deg, 1.0) > 180.0 => RotationSense::Cw,
            _ => RotationSense::Ccw,
        }
    }
}

/// Which end of the slice axis is the base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSplit {
    /// The end with more cavity-free myocardial slices is the apex; ties go
    /// to the larger end cavity, then to base-first.
    #[default]
    Auto,
    BaseFirst,
    ApexFirst,
}

/// Slice indices of each ring, in slice order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisThirds {
    pub basal: Vec<usize>,
    pub mid: Vec<usize>,
    pub apical: Vec<usize>,
    pub apex: Vec<usize>,
    pub base_first: bool,
}

impl AxisThirds {
    pub fn ring_of(&self, z: usize) -> Option<Ring> {
        [
            (&self.basal, Ring::Basal),
            (&self.mid, Ring::Mid),
            (&self.apical, Ring::Apical),
            (&self.apex, Ring::Apex),
        ]
        .into_iter()
        .find(|(v, _)| v.contains(&z))
        .map(|(_, r)| r)
    }
}

fn slice_has(mask: &LabelMask, z: usize, labels: &[u8]) -> bool {
    mask.slice(z).iter().any(|l| labels.contains(l))
}

fn slice_count(mask: &LabelMask, z: usize, label: u8) -> usize {
    mask.slice(z).iter().filter(|&&l| l == label).count()
}

fn cavity_label(mask: &LabelMask) -> Result<u8, AhaError> {
    mask.label_of(Structure::LvCavity)
        .ok_or_else(|| AhaError::Mismatch(format!("{} masks have no LV cavity", mask.kind())))
}

/// Splits the slice axis into rings. Cavity-bearing slices (first to last)
/// are divided into thirds with the remainder going to basal, then mid.
/// Myocardial slices beyond the apical end form the apex; beyond the basal
/// end they join the basal ring.
fn split_axis(mask: &LabelMask, split: AxisSplit) -> Result<AxisThirds, AhaError> {
    let cav = cavity_label(mask)?;
    let myo = mask.schema().myocardial_labels();
    let nz = mask.dims()[0];
    let cav_slices: Vec<usize> = (0..nz).filter(|&z| slice_count(mask, z, cav) > 0).collect();
    let (Some(&first), Some(&last)) = (cav_slices.first(), cav_slices.last()) else {
        return Err(AhaError::TooFewSlices(0));
    };
    let n = last - first + 1;
    if n < 3 {
        return Err(AhaError::TooFewSlices(n));
    }
    let before: Vec<usize> = (0..first).filter(|&z| slice_has(mask, z, &myo)).collect();
    let after: Vec<usize> = (last + 1..nz).filter(|&z| slice_has(mask, z, &myo)).collect();
    let base_first = match split {
        AxisSplit::BaseFirst => true,
        AxisSplit::ApexFirst => false,
        AxisSplit::Auto => match after.len().cmp(&before.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => slice_count(mask, first, cav) >= slice_count(mask, last, cav),
        },
    };
    let mut ordered: Vec<usize> = (first..=last).collect();
    let (mut beyond_base, mut beyond_apex) = (before, after);
    if !base_first {
        ordered.reverse();
        std::mem::swap(&mut beyond_base, &mut beyond_apex);
    }
    let nb = n / 3 + usize::from(n % 3 >= 1);
    let nm = n / 3 + usize::from(n % 3 == 2);
    let mut basal: Vec<usize> = beyond_base.into_iter().chain(ordered[..nb].iter().copied()).collect();
    let mut mid = ordered[nb..nb + nm].to_vec();
    let mut apical = ordered[nb + nm..].to_vec();
    let mut apex = beyond_apex;
    for v in [&mut basal, &mut mid, &mut apical, &mut apex] {
        v.sort_unstable();
    }
    Ok(AxisThirds {
        basal,
        mid,
        apical,
        apex,
        base_first,
    })
}

/// Cavity centroid `(row, col)` per slice in index units; slices without
/// cavity take the centroid of the nearest cavity-bearing slice.
fn slice_centroids(mask: &LabelMask, cav: u8) -> Vec<Option<[f64; 2]>> {
    let nz = mask.dims()[0];
    let own: Vec<Option<[f64; 2]>> = (0..nz)
        .map(|z| {
            let (mut n, mut sy, mut sx) = (0usize, 0.0, 0.0);
            for ((y, x), &l) in mask.slice(z).indexed_iter() {
                if l == cav {
                    n += 1;
                    sy += y as f64;
                    sx += x as f64;
                }
            }
            (n > 0).then(|| [sy / n as f64, sx / n as f64])
        })
        .collect();
    (0..nz)
        .map(|z| {
            own[z].or_else(|| {
                (0..nz)
                    .filter(|&k| own[k].is_some())
                    .min_by_key(|&k| k.abs_diff(z))
                    .and_then(|k| own[k])
            })
        })
        .collect()
}

/// Visual angle of voxel `(y, x)` about a centroid, in physical units.
pub(super) fn voxel_angle(y: usize, x: usize, c: [f64; 2], s: Spacing) -> f64 {
    visual_angle_deg((y as f64 - c[0]) * s.dy, (x as f64 - c[1]) * s.dx)
}

/// Occupied runs `(start_bin, length)` of a circular histogram after
/// bridging short gaps.
fn circular_arcs(occupied: &[bool; 360]) -> Vec<(usize, usize)> {
    // Runs `(value, start, len)` read from the first bin of an empty run, so
    // no run wraps; empty if the histogram is uniform.
    fn runs(occ: &[bool; 360]) -> Option<Vec<(bool, usize, usize)>> {
        let e = (0..360).find(|&i| !occ[i] && occ[(i + 359) % 360])?;
        let mut out: Vec<(bool, usize, usize)> = Vec::new();
        for i in 0..360 {
            let b = (e + i) % 360;
            match out.last_mut() {
                Some((v, _, len)) if *v == occ[b] => *len += 1,
                _ => out.push((occ[b], b, 1)),
            }
        }
        Some(out)
    }
    let mut occ = *occupied;
    if let Some(rs) = runs(&occ) {
        for (v, start, len) in rs {
            if !v && len <= ARC_GAP_BINS {
                for k in 0..len {
                    occ[(start + k) % 360] = true;
                }
            }
        }
    }
    match runs(&occ) {
        Some(rs) => rs.into_iter().filter(|r| r.0).map(|(_, s, l)| (s, l)).collect(),
        None if occ[0] => vec![(0, 360)],
        None => Vec::new(),
    }
}

/// Anterior and inferior RV insertion angles about the LV cavity centroid.
///
/// Myocardial voxels with an RV voxel among their 8 in-plane neighbours are
/// binned at 1° over the mid-ventricular slices. With two or more arcs the
/// insertions are the midpoints of the two widest; a single arc yields its
/// endpoints. The anterior insertion is the one met first counterclockwise
/// from image up. Without any adjacency, `landmark_deg` is used as the
/// anterior insertion.
pub fn locate_rv_insertions(mask: &LabelMask, landmark_deg: Option<f64>) -> Result<Insertions, AhaError> {
    let fallback = || landmark_deg.map(Insertions::landmark).ok_or(AhaError::NoInsertions);
    let rv = [Structure::Rv, Structure::RvCavity, Structure::RvMyocardium]
        .iter()
        .filter_map(|s| mask.label_of(*s))
        .collect::<Vec<u8>>();
    if rv.is_empty() {
        return fallback();
    }
    let cav = cavity_label(mask)?;
    let myo = mask.schema().myocardial_labels();
    let thirds = match split_axis(mask, AxisSplit::Auto) {
        Ok(t) => t,
        Err(_) => return fallback(),
    };
    let centroids = slice_centroids(mask, cav);
    let s = mask.spacing();
    let mut occupied = [false; 360];
    for &z in &thirds.mid {
        let Some(c) = centroids[z] else { continue };
        let sl = mask.slice(z);
        let (ny, nx) = sl.dim();
        for ((y, x), l) in sl.indexed_iter() {
            if !myo.contains(l) {
                continue;
            }
            let touches = (y.saturating_sub(1)..(y + 2).min(ny))
                .any(|yy| (x.saturating_sub(1)..(x + 2).min(nx)).any(|xx| rv.contains(&sl[[yy, xx]])));
            if touches {
                occupied[(voxel_angle(y, x, c, s).floor() as usize).min(359)] = true;
            }
        }
    }
    let mut arcs = circular_arcs(&occupied);
    if arcs.is_empty() || arcs[0].1 >= 360 {
        return fallback();
    }
    arcs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let (p, q) = if arcs.len() >= 2 {
        let mid = |(start, len): (usize, usize)| (start as f64 + len as f64 / 2.0).rem_euclid(360.0);
        (mid(arcs[0]), mid(arcs[1]))
    } else {
        let (start, len) = arcs[0];
        (start as f64, ((start + len) % 360) as f64)
    };
    let (ant, inf) = if angular_offset(p, 90.0, 1.0) <= angular_offset(q, 90.0, 1.0) {
        (p, q)
    } else {
        (q, p)
    };
    Ok(Insertions {
        anterior_deg: ant,
        inferior_deg: Some(inf),
        source: InsertionSource::Detected,
    })
}

/// Assignment of every myocardial voxel to one of the 17 segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLabeling {
    /// Segment id per voxel, 0 outside the myocardium.
    pub segments: Array3<u8>,
    pub spacing: Spacing,
    pub anterior_deg: f64,
    pub inferior_deg: Option<f64>,
    pub sense: RotationSense,
    pub thirds: AxisThirds,
    /// Cavity centroid `(row, col)` per slice, index units.
    pub centroids: Vec<Option<[f64; 2]>>,
    pub orientation: String,
}

impl SegmentLabeling {
    /// Anterior insertion in radians.
    pub fn insertion_angle(&self) -> f64 {
        self.anterior_deg.to_radians()
    }

    pub fn dims(&self) -> [usize; 3] {
        let s = self.segments.shape();
        [s[0], s[1], s[2]]
    }

    /// Ring offset of a visual angle.
    pub fn psi(&self, theta_deg: f64) -> f64 {
        angular_offset(theta_deg, self.anterior_deg, self.sense.sign())
    }

    /// Segment of a visual angle on slice `z`, if the slice is in a ring.
    pub fn segment_at(&self, z: usize, theta_deg: f64) -> Option<u8> {
        self.thirds.ring_of(z).map(|r| sector_of(r, self.psi(theta_deg)))
    }

    /// Voxel count per segment; index `i` is segment `i + 1`.
    pub fn segment_counts(&self) -> [usize; 17] {
        let mut n = [0usize; 17];
        for &s in self.segments.iter().filter(|&&s| s > 0) {
            n[usize::from(s) - 1] += 1;
        }
        n
    }
}

/// Partitions the myocardium of a short-axis mask into the 17 segments.
/// LGE voxels count as myocardium.
pub fn assign_segments(mask: &LabelMask, insertions: &Insertions, split: AxisSplit) -> Result<SegmentLabeling, AhaError> {
    let cav = cavity_label(mask)?;
    let myo = mask.schema().myocardial_labels();
    if !mask.labels().iter().any(|l| myo.contains(l)) {
        return Err(AhaError::EmptyMyocardium);
    }
    let thirds = split_axis(mask, split)?;
    let centroids = slice_centroids(mask, cav);
    let sense = insertions.sense();
    let s = mask.spacing();
    let mut labeling = SegmentLabeling {
        segments: Array3::zeros(mask.labels().raw_dim()),
        spacing: s,
        anterior_deg: insertions.anterior_deg,
        inferior_deg: insertions.inferior_deg,
        sense,
        orientation: format!(
            "{}-from-anterior-insertion/{}",
            sense.as_str(),
            if thirds.base_first { "base-first" } else { "apex-first" }
        ),
        thirds,
        centroids,
    };
    for ((z, y, x), l) in mask.labels().indexed_iter() {
        if !myo.contains(l) {
            continue;
        }
        let seg = match (labeling.thirds.ring_of(z), labeling.centroids[z]) {
            (Some(Ring::Apex), _) => 17,
            (Some(ring), Some(c)) => sector_of(ring, labeling.psi(voxel_angle(y, x, c, s))),
            // Myocardium on a slice outside every ring cannot occur: rings
            // cover all myocardial slices, and those have a centroid.
            _ => unreachable!("myocardial slice {z} outside the ring split"),
        };
        labeling.segments[[z, y, x]] = seg;
    }
    Ok(labeling)
}
