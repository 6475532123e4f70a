use serde::{Deserialize, Serialize};

use super::{AhaError, Bullseye17, Quantity, SegmentLabeling, Statistic};
use crate::volume::LabelMask;

/// Per-segment end-diastolic wall thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallThickness {
    pub mean: Bullseye17,
    pub max: Bullseye17,
    pub rays_cast: usize,
    /// Rays that never met myocardium; excluded from the statistics.
    pub rays_missed: usize,
}

impl WallThickness {
    pub fn coverage(&self) -> f64 {
        if self.rays_cast == 0 {
            0.0
        } else {
            (self.rays_cast - self.rays_missed) as f64 / self.rays_cast as f64
        }
    }
}

/// Radial myocardial thickness along one ray from `c` (index units) at
/// visual angle `theta`: the innermost entry/exit pair, in mm.
fn ray_thickness(mask: &LabelMask, z: usize, c: [f64; 2], theta_deg: f64, myo: &[u8]) -> Option<f64> {
    let s = mask.spacing();
    let sl = mask.slice(z);
    let (ny, nx) = sl.dim();
    let (sin, cos) = theta_deg.to_radians().sin_cos();
    let h = 0.05 * s.dy.min(s.dx);
    let inside = |t: f64| -> Option<bool> {
        let y = (c[0] - sin * t / s.dy).round();
        let x = (c[1] + cos * t / s.dx).round();
        if y < 0.0 || x < 0.0 || y >= ny as f64 || x >= nx as f64 {
            return None;
        }
        Some(myo.contains(&sl[[y as usize, x as usize]]))
    };
    let mut entry = None;
    let mut prev = 0.0;
    let mut t = 0.0;
    loop {
        match inside(t) {
            None => return entry.map(|e: f64| prev - e),
            Some(true) if entry.is_none() => entry = Some(if t == 0.0 { 0.0 } else { t - h / 2.0 }),
            Some(false) if entry.is_some() => return entry.map(|e| t - h / 2.0 - e),
            _ => {}
        }
        prev = t;
        t += h;
    }
}

/// Wall thickness per segment from rays cast at 1° steps (bin centres) out
/// of each slice's cavity centroid. The apex value is the extent of the
/// cavity-free apical cap along the slice axis.
pub fn segment_wall_thickness(labeling: &SegmentLabeling, ed_mask: &LabelMask) -> Result<WallThickness, AhaError> {
    if ed_mask.dims() != labeling.dims() {
        return Err(AhaError::Mismatch(format!("mask dims {:?} vs labeling {:?}", ed_mask.dims(), labeling.dims())));
    }
    let myo = ed_mask.schema().myocardial_labels();
    if !ed_mask.labels().iter().any(|l| myo.contains(l)) {
        return Err(AhaError::EmptyMyocardium);
    }
    let mut sum = [0.0f64; 17];
    let mut n = [0usize; 17];
    let mut max = [f64::NEG_INFINITY; 17];
    let (mut cast, mut missed) = (0, 0);
    let t = &labeling.thirds;
    for &z in t.basal.iter().chain(&t.mid).chain(&t.apical) {
        let Some(c) = labeling.centroids[z] else { continue };
        if !ed_mask.slice(z).iter().any(|l| myo.contains(l)) {
            continue;
        }
        for d in 0..360 {
            let theta = d as f64 + 0.5;
            cast += 1;
            let Some(w) = ray_thickness(ed_mask, z, c, theta, &myo) else {
                missed += 1;
                continue;
            };
            let seg = usize::from(labeling.segment_at(z, theta).expect("ring slice")) - 1;
            sum[seg] += w;
            n[seg] += 1;
            max[seg] = max[seg].max(w);
        }
    }
    let mut mean_v = [None; 17];
    let mut max_v = [None; 17];
    for i in 0..16 {
        if n[i] > 0 {
            mean_v[i] = Some(sum[i] / n[i] as f64);
            max_v[i] = Some(max[i]);
        }
    }
    if !t.apex.is_empty() {
        let cap = t.apex.len() as f64 * ed_mask.spacing().dz;
        mean_v[16] = Some(cap);
        max_v[16] = Some(cap);
    }
    Ok(WallThickness {
        mean: Bullseye17::new(Quantity::Lvedwt, Statistic::Mean, labeling.orientation.clone(), mean_v),
        max: Bullseye17::new(Quantity::Lvedwt, Statistic::Max, labeling.orientation.clone(), max_v),
        rays_cast: cast,
        rays_missed: missed,
    })
}
