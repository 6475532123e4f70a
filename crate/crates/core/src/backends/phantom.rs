//! Analytic cardiac phantoms with exact ground truth.
//!
//! The LV cavity is an ellipsoid (or an elliptic cylinder) whose long axis
//! runs along the slice axis, base at slice 0 and apex towards the last
//! slice. The myocardium is the region between the cavity and a confocal-free
//! outer surface offset by the wall thickness along every semi-axis, with the
//! basal cap of the outer surface removed so the base is open. A voxel
//! belongs to a region when its centre has normalized distance ≤ 1.
//!
//! Cavity centres sit exactly on voxel centres so every rasterized cross
//! section is point-symmetric and its centroid is the analytic centre.

use std::f64::consts::PI;

use ndarray::{Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::aha17::angles::{in_arc, visual_angle_deg};
use crate::quantify::{MeasurementSet, ParamName, PhaseTag, Source, MYOCARDIAL_DENSITY_G_PER_ML};
use crate::volume::{CineVolume, FrameRef, LabelMask, LabelSchema, SequenceKind, Spacing, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PhantomShape {
    Ellipsoid,
    /// Constant cross-section over `length_mm`, closed by a flat apical cap
    /// of wall thickness.
    Cylinder { length_mm: f64 },
}

/// RV region hugging the LV epicardium over a visual-angle arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvBlock {
    pub theta0_deg: f64,
    pub theta1_deg: f64,
    pub thickness_mm: f64,
}

/// Localized wall thickening over a visual-angle arc on cavity slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bulge {
    pub theta0_deg: f64,
    pub theta1_deg: f64,
    pub thickness_mm: f64,
}

/// Enhanced myocardium over a visual-angle arc, optionally restricted to a
/// half-open slice range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgeSector {
    pub slices: Option<[usize; 2]>,
    pub theta0_deg: f64,
    pub theta1_deg: f64,
}

/// Atrium in the four-chamber view, long axis vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atrium {
    pub long_mm: f64,
    pub short_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Views {
    pub ch2: bool,
    pub ch4: bool,
    pub lge: bool,
}

impl Default for Views {
    fn default() -> Self {
        Views {
            ch2: true,
            ch4: true,
            lge: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub shape: PhantomShape,
    /// Cavity semi-axes `(long, row, col)` in mm at end-diastole.
    pub ed_axes_mm: [f64; 3],
    pub es_axes_mm: [f64; 3],
    pub wall_mm: f64,
    pub spacing: Spacing,
    pub phases: usize,
    /// In-plane rotation applied to every angular feature and the cavity
    /// cross-section, counterclockwise in the visual frame.
    pub rotation_deg: f64,
    pub rv: Option<RvBlock>,
    pub bulge: Option<Bulge>,
    pub lge: Vec<LgeSector>,
    pub la: Option<Atrium>,
    pub ra: Option<Atrium>,
    pub noise_sd: f64,
    pub heart_rate_bpm: Option<f64>,
    pub seed: u64,
    pub views: Views,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            shape: PhantomShape::Ellipsoid,
            ed_axes_mm: [40.0, 25.0, 25.0],
            es_axes_mm: [34.0, 20.0, 20.0],
            wall_mm: 8.0,
            spacing: Spacing::isotropic(1.0),
            phases: 2,
            rotation_deg: 0.0,
            rv: Some(RvBlock {
                theta0_deg: 110.0,
                theta1_deg: 230.0,
                thickness_mm: 10.0,
            }),
            bulge: None,
            lge: Vec::new(),
            la: Some(Atrium {
                long_mm: 25.0,
                short_mm: 18.0,
            }),
            ra: Some(Atrium {
                long_mm: 24.0,
                short_mm: 17.0,
            }),
            noise_sd: 0.0,
            heart_rate_bpm: Some(70.0),
            seed: 0,
            views: Views::default(),
        }
    }
}

impl PhantomSpec {
    /// The default geometry with a normal ejection fraction (about 63%).
    pub fn normal() -> Self {
        PhantomSpec {
            es_axes_mm: [32.0, 17.0, 17.0],
            ..PhantomSpec::default()
        }
    }

    /// Randomized spec with cavity radii in 20–40 mm on a 1 mm grid.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| Uniform::new(lo, hi).unwrap().sample(rng);
        let ry = u(20.0, 32.0, &mut rng);
        let rx = u(20.0, 32.0, &mut rng);
        let long = u(ry.max(rx) * 1.15, 40.0f64.max(ry.max(rx) * 1.2), &mut rng);
        let shrink = u(0.78, 0.95, &mut rng);
        let es = [long * shrink.sqrt(), (ry * shrink).max(20.0), (rx * shrink).max(20.0)];
        let theta0 = u(95.0, 125.0, &mut rng);
        let la_short = u(14.0, 22.0, &mut rng);
        let ra_short = u(14.0, 22.0, &mut rng);
        PhantomSpec {
            ed_axes_mm: [long, ry, rx],
            es_axes_mm: [es[0].min(long), es[1].min(ry), es[2].min(rx)],
            wall_mm: u(6.0, 11.0, &mut rng),
            rv: Some(RvBlock {
                theta0_deg: theta0,
                theta1_deg: theta0 + u(100.0, 130.0, &mut rng),
                thickness_mm: u(6.0, 12.0, &mut rng),
            }),
            la: Some(Atrium {
                long_mm: la_short * u(1.3, 1.6, &mut rng),
                short_mm: la_short,
            }),
            ra: Some(Atrium {
                long_mm: ra_short * u(1.3, 1.6, &mut rng),
                short_mm: ra_short,
            }),
            heart_rate_bpm: Some(u(55.0, 95.0, &mut rng).round()),
            seed,
            ..PhantomSpec::default()
        }
    }

    /// Short-axis annulus for segmental analysis: circular cavity of radius
    /// `r`, wall `t`, cylinder long enough for nine cavity slices.
    pub fn annulus(r: f64, t: f64) -> Self {
        PhantomSpec {
            shape: PhantomShape::Cylinder { length_mm: 9.0 },
            ed_axes_mm: [4.5, r, r],
            es_axes_mm: [4.5, r, r],
            wall_mm: t,
            spacing: Spacing::new(1.0, 1.0, 1.0),
            la: None,
            ra: None,
            views: Views {
                ch2: false,
                ch4: false,
                lge: false,
            },
            ..PhantomSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::InvalidSpec(m));
        if !self.spacing.is_valid() {
            return bad("spacing must be positive".into());
        }
        if self.phases < 2 {
            return bad("phantom cines need at least 2 phases".into());
        }
        if self.ed_axes_mm.iter().chain(&self.es_axes_mm).any(|a| !(*a > 0.0)) {
            return bad("semi-axes must be positive".into());
        }
        if self.es_axes_mm.iter().zip(&self.ed_axes_mm).any(|(es, ed)| es > ed) {
            return bad("ES semi-axes must not exceed ED semi-axes".into());
        }
        if !(self.wall_mm > 0.0) {
            return bad("shell thickness must be positive".into());
        }
        if let PhantomShape::Cylinder { length_mm } = self.shape {
            if !(length_mm > 0.0) {
                return bad("cylinder length must be positive".into());
            }
        }
        if let Some(rv) = self.rv {
            if !(rv.thickness_mm > 0.0) {
                return bad("RV thickness must be positive".into());
            }
        }
        if let Some(b) = self.bulge {
            if !(b.thickness_mm > 0.0) {
                return bad("bulge thickness must be positive".into());
            }
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise level must be non-negative".into());
        }
        Ok(())
    }

    /// Analytic anterior and inferior RV insertion angles (visual frame).
    pub fn insertions_deg(&self) -> Option<(f64, f64)> {
        self.rv.map(|rv| {
            (
                (rv.theta0_deg + self.rotation_deg).rem_euclid(360.0),
                (rv.theta1_deg + self.rotation_deg).rem_euclid(360.0),
            )
        })
    }
}

/// Intensity level of each label per sequence kind. Background is index 0.
pub fn intensity_codebook(kind: SequenceKind) -> Vec<(u8, f32)> {
    let mut levels = vec![(0u8, 20.0f32)];
    let schema = LabelSchema::for_kind(kind);
    for &(label, s) in schema.entries() {
        let v = match (kind, s) {
            (SequenceKind::SaxLge, Structure::LvCavity) => 160.0,
            (SequenceKind::SaxLge, Structure::LvMyocardium) => 60.0,
            (_, Structure::Lge) => 250.0,
            (_, Structure::LvCavity) => 220.0,
            (_, Structure::LvMyocardium) => 90.0,
            (_, Structure::Rv) | (_, Structure::RvCavity) => 190.0,
            (_, Structure::RvMyocardium) => 115.0,
            (_, Structure::LeftAtrium) => 165.0,
            (_, Structure::RightAtrium) => 140.0,
        };
        levels.push((label, v));
    }
    levels
}

/// Inverse of [`intensity_codebook`]: nearest level wins.
pub fn decode_labels(volume: &CineVolume) -> Result<Vec<LabelMask>, BackendError> {
    let book = intensity_codebook(volume.kind());
    (0..volume.phases())
        .map(|p| {
            let labels = volume.phase(p).mapv(|v| {
                book.iter()
                    .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                    .map(|(l, _)| *l)
                    .unwrap_or(0)
            });
            LabelMask::new(volume.kind(), labels, volume.spacing(), FrameRef { study: None, phase: p })
                .map_err(BackendError::from)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub sax: CineVolume,
    pub sax_masks: Vec<LabelMask>,
    pub ch2: Option<(CineVolume, Vec<LabelMask>)>,
    pub ch4: Option<(CineVolume, Vec<LabelMask>)>,
    pub lge: Option<(CineVolume, LabelMask)>,
    pub analytic: MeasurementSet,
    pub ed_phase: usize,
    pub es_phase: usize,
}

/// Cavity scale along the long axis: `Some(s)` with the in-plane
/// cross-section scaled by `s`, or `None` outside the structure.
#[derive(Debug, Clone, Copy)]
struct Profile {
    shape: PhantomShape,
    long: f64,
    wall: f64,
}

impl Profile {
    /// `zl` is the long-axis coordinate in mm: for the ellipsoid measured from
    /// the cavity centre, for the cylinder from the basal cavity edge; apex
    /// towards positive values.
    fn cavity(&self, zl: f64) -> Option<f64> {
        match self.shape {
            PhantomShape::Ellipsoid => {
                let q = 1.0 - (zl / self.long).powi(2);
                (q >= 0.0).then(|| q.sqrt())
            }
            PhantomShape::Cylinder { length_mm } => (zl >= 0.0 && zl < length_mm).then_some(1.0),
        }
    }

    fn outer(&self, zl: f64) -> Option<f64> {
        match self.shape {
            PhantomShape::Ellipsoid => {
                let c = self.long + self.wall;
                let q = 1.0 - (zl / c).powi(2);
                (zl >= -self.long && q >= 0.0).then(|| q.sqrt())
            }
            PhantomShape::Cylinder { length_mm } => (zl >= 0.0 && zl < length_mm + self.wall).then_some(1.0),
        }
    }
}

/// Radius of an ellipse with semi-axes `(a_up, a_right)` rotated by `rot`
/// along visual direction `theta`.
fn ellipse_radius(a_up: f64, a_right: f64, theta_deg: f64, rot_deg: f64) -> f64 {
    let al = (theta_deg - rot_deg).to_radians();
    1.0 / ((al.cos() / a_right).powi(2) + (al.sin() / a_up).powi(2)).sqrt()
}

struct SaxGeometry {
    dims: [usize; 3],
    /// Centre indices `(slice, row, col)`; the slice index is the long-axis
    /// origin of [`Profile`].
    centre: [usize; 3],
}

fn sax_geometry(spec: &PhantomSpec) -> SaxGeometry {
    let s = spec.spacing;
    let [long, ay, ax] = spec.ed_axes_mm;
    let t = spec.wall_mm;
    let margin = 3usize;
    let bulge = spec.bulge.map_or(0.0, |b| b.thickness_mm);
    let rv = spec.rv.map_or(0.0, |r| r.thickness_mm);
    let ext_y = ay.max(ax) + t.max(bulge) + rv;
    let half_r = (ext_y / s.dy).ceil() as usize + margin;
    let half_c = (ext_y / s.dx).ceil() as usize + margin;
    let (nz, cz) = match spec.shape {
        PhantomShape::Ellipsoid => {
            let below = (long / s.dz).ceil() as usize + margin;
            let above = ((long + t) / s.dz).ceil() as usize + margin;
            (below + above + 1, below)
        }
        PhantomShape::Cylinder { length_mm } => {
            let n = ((length_mm + t) / s.dz).ceil() as usize;
            (n + 2 * margin, margin)
        }
    };
    SaxGeometry {
        dims: [nz, 2 * half_r + 1, 2 * half_c + 1],
        centre: [cz, half_r, half_c],
    }
}

fn long_coord(spec: &PhantomSpec, z: usize, cz: usize) -> f64 {
    match spec.shape {
        // Slice centres relative to the cavity centre.
        PhantomShape::Ellipsoid => (z as f64 - cz as f64) * spec.spacing.dz,
        // Slice k covers the centre (k + 0.5) dz from the basal edge.
        PhantomShape::Cylinder { .. } => (z as f64 - cz as f64 + 0.5) * spec.spacing.dz,
    }
}

/// Short-axis labels of one phase. `with_rv` adds the RV block; `lge` marks
/// enhanced myocardium with the LGE label (3) instead.
fn sax_labels(spec: &PhantomSpec, geo: &SaxGeometry, axes: [f64; 3], with_rv: bool, lge: bool) -> Array3<u8> {
    let s = spec.spacing;
    let [_, ay, ax] = axes;
    let t = spec.wall_mm;
    let rot = spec.rotation_deg;
    let profile = Profile {
        shape: spec.shape,
        long: axes[0],
        wall: t,
    };
    let [cz, cy, cx] = geo.centre;
    let mut out = Array3::zeros(geo.dims);
    for z in 0..geo.dims[0] {
        let zl = long_coord(spec, z, cz);
        let cav = profile.cavity(zl);
        let outer = profile.outer(zl);
        if outer.is_none() {
            continue;
        }
        for y in 0..geo.dims[1] {
            for x in 0..geo.dims[2] {
                let dy = (y as f64 - cy as f64) * s.dy;
                let dx = (x as f64 - cx as f64) * s.dx;
                let rho = (dy * dy + dx * dx).sqrt();
                let theta = visual_angle_deg(dy, dx);
                let r_cav = cav.map(|k| k * ellipse_radius(ay, ax, theta, rot));
                let r_out = outer.map(|k| k * ellipse_radius(ay + t, ax + t, theta, rot));
                let r_bulge = match (spec.bulge, r_cav) {
                    (Some(b), Some(rc)) if in_arc(theta, b.theta0_deg + rot, b.theta1_deg - b.theta0_deg) => Some(rc + b.thickness_mm),
                    _ => None,
                };
                let in_cav = cav.is_some_and(|k| {
                    let (u, v) = rotate(dy, dx, rot);
                    (u / ay).powi(2) + (v / ax).powi(2) <= k * k
                });
                let in_outer = outer.is_some_and(|k| {
                    let (u, v) = rotate(dy, dx, rot);
                    (u / (ay + t)).powi(2) + (v / (ax + t)).powi(2) <= k * k
                }) || r_bulge.is_some_and(|rb| rho <= rb);
                let label = if in_cav {
                    1
                } else if in_outer {
                    let enhanced = lge
                        && spec.lge.iter().any(|sec| {
                            sec.slices.is_none_or(|[a, b]| z >= a && z < b)
                                && in_arc(theta, sec.theta0_deg + rot, sec.theta1_deg - sec.theta0_deg)
                        });
                    if enhanced {
                        3
                    } else {
                        2
                    }
                } else if with_rv && cav.is_some() {
                    match spec.rv {
                        Some(rv) if in_arc(theta, rv.theta0_deg + rot, rv.theta1_deg - rv.theta0_deg) => {
                            let edge = r_bulge.unwrap_or(0.0).max(r_out.unwrap_or(0.0));
                            if rho > edge && rho <= edge + rv.thickness_mm {
                                3
                            } else {
                                0
                            }
                        }
                        _ => 0,
                    }
                } else {
                    0
                };
                out[[z, y, x]] = label;
            }
        }
    }
    out
}

/// Offsets expressed in the cavity's own frame: `(up, right)` after undoing
/// the in-plane rotation.
fn rotate(dy: f64, dx: f64, rot_deg: f64) -> (f64, f64) {
    let up = -dy;
    let (s, c) = rot_deg.to_radians().sin_cos();
    let right = dx * c + up * s;
    let up_r = -dx * s + up * c;
    (up_r, right)
}

fn axes_at(spec: &PhantomSpec, p: usize) -> [f64; 3] {
    let w = (1.0 - (2.0 * PI * p as f64 / spec.phases as f64).cos()) / 2.0;
    let mut a = [0.0; 3];
    for i in 0..3 {
        a[i] = spec.ed_axes_mm[i] + w * (spec.es_axes_mm[i] - spec.ed_axes_mm[i]);
    }
    a
}

fn render(kind: SequenceKind, labels: &[Array3<u8>], spec: &PhantomSpec, spacing: Spacing, rng: &mut ChaCha8Rng) -> Result<CineVolume, BackendError> {
    let book = intensity_codebook(kind);
    let [z, y, x] = {
        let s = labels[0].shape();
        [s[0], s[1], s[2]]
    };
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).map_err(|e| BackendError::InvalidSpec(e.to_string()))?;
    let mut data = Array4::<f32>::zeros((labels.len(), z, y, x));
    for (p, l) in labels.iter().enumerate() {
        for ((zz, yy, xx), &lab) in l.indexed_iter() {
            let base = book.iter().find(|(k, _)| *k == lab).map_or(0.0, |(_, v)| *v);
            let n = if spec.noise_sd > 0.0 { noise.sample(rng) as f32 } else { 0.0 };
            data[[p, zz, yy, xx]] = base + n;
        }
    }
    let interval = spec.heart_rate_bpm.map(|hr| 60000.0 / hr / labels.len() as f64);
    Ok(CineVolume::new(kind, data, spacing)?
        .with_heart_rate(spec.heart_rate_bpm)
        .with_phase_interval(if labels.len() > 1 { interval } else { None }))
}

fn masks(kind: SequenceKind, labels: Vec<Array3<u8>>, spacing: Spacing) -> Result<Vec<LabelMask>, BackendError> {
    labels
        .into_iter()
        .enumerate()
        .map(|(p, l)| Ok(LabelMask::new(kind, l, spacing, FrameRef { study: None, phase: p })?))
        .collect()
}

/// Long-axis view labels: the LV section with apex at the top and open base;
/// for the four-chamber view also RV, LA and RA.
fn long_axis_labels(spec: &PhantomSpec, axes: [f64; 3], four_chamber: bool) -> Array3<u8> {
    let s = spec.spacing;
    let [long, ay, ax] = axes;
    let [long_ed, ay_ed, ax_ed] = spec.ed_axes_mm;
    let t = spec.wall_mm;
    // 4CH shows the septal-lateral width, 2CH the anterior-inferior one.
    let (w, w_ed) = if four_chamber { (ax, ax_ed) } else { (ay, ay_ed) };
    let rv_w = 0.6 * w_ed;
    let rv_t = 3.0;
    let gap = 4.0;
    let la = spec.la.filter(|_| four_chamber);
    let ra = spec.ra.filter(|_| four_chamber);
    let atrium_h = la.iter().chain(ra.iter()).map(|a| 2.0 * a.long_mm).fold(0.0, f64::max);
    let lv_cx_mm = if four_chamber {
        let shorts = la.map_or(0.0, |a| a.short_mm) + ra.map_or(0.0, |a| a.short_mm);
        (2.0 * (rv_w + rv_t) + w_ed + t + gap).max(shorts + 2.0 * gap) + w_ed + t + gap
    } else {
        w_ed + t + gap
    };
    let rv_cx_mm = lv_cx_mm - (w_ed + t + gap + rv_w + rv_t);
    let apex_top_mm = gap + long_ed + t;
    let rows_mm = apex_top_mm + long_ed + gap + atrium_h + gap;
    let cols_mm = lv_cx_mm + w_ed + t + gap;
    let nr = (rows_mm / s.dy).ceil() as usize + 1;
    let nc = (cols_mm / s.dx).ceil() as usize + 1;
    // Snap the LV centre to a pixel centre.
    let cy = (apex_top_mm / s.dy).round() * s.dy;
    let cx = (lv_cx_mm / s.dx).round() * s.dx;
    let rcx = (rv_cx_mm / s.dx).round() * s.dx;
    let base_mm = cy + long_ed;
    let mut out = Array3::zeros((1, nr, nc));
    for y in 0..nr {
        for x in 0..nc {
            let py = y as f64 * s.dy;
            let px = x as f64 * s.dx;
            let (vy, vx) = (py - cy, px - cx);
            let in_cav = (vy / long).powi(2) + (vx / w).powi(2) <= 1.0;
            let in_out = (vy / (long + t)).powi(2) + (vx / (w + t)).powi(2) <= 1.0 && vy <= long;
            let mut label = if in_cav {
                1
            } else if in_out {
                2
            } else {
                0
            };
            if four_chamber && label == 0 {
                let (ry, rx) = (py - (cy + 0.2 * long_ed), px - rcx);
                let rl = 0.8 * long_ed;
                if (ry / rl).powi(2) + (rx / rv_w).powi(2) <= 1.0 {
                    label = 3;
                } else if (ry / (rl + rv_t)).powi(2) + (rx / (rv_w + rv_t)).powi(2) <= 1.0 && ry <= rl {
                    label = 4;
                }
                let atria = [(la, cx, 5u8), (ra, rcx, 6u8)];
                for (atrium, acx, lab) in atria {
                    if let Some(a) = atrium {
                        let acy = base_mm + gap + a.long_mm;
                        if ((py - acy) / a.long_mm).powi(2) + ((px - acx) / a.short_mm).powi(2) <= 1.0 {
                            label = lab;
                        }
                    }
                }
            }
            out[[0, y, x]] = label;
        }
    }
    out
}

fn analytic(spec: &PhantomSpec) -> MeasurementSet {
    let [c, b, a] = spec.ed_axes_mm;
    let [ce, be, ae] = spec.es_axes_mm;
    let t = spec.wall_mm;
    let (edv, esv, myo) = match spec.shape {
        PhantomShape::Ellipsoid => {
            let edv = 4.0 / 3.0 * PI * a * b * c;
            let esv = 4.0 / 3.0 * PI * ae * be * ce;
            let (aa, bb, cc) = (a + t, b + t, c + t);
            let cap = PI * aa * bb * t * t * (3.0 * cc - t) / (3.0 * cc * cc);
            (edv, esv, 4.0 / 3.0 * PI * aa * bb * cc - cap - edv)
        }
        PhantomShape::Cylinder { length_mm } => {
            let edv = PI * a * b * length_mm;
            let esv = PI * ae * be * length_mm;
            let outer = PI * (a + t) * (b + t);
            (edv, esv, outer * (length_mm + t) - edv)
        }
    };
    let mut m = MeasurementSet::new();
    m.insert(ParamName::Lvedv, edv / 1000.0, Source::Sax, PhaseTag::Ed, vec![]);
    m.insert(ParamName::Lvesv, esv / 1000.0, Source::Sax, PhaseTag::Es, vec![]);
    let sv = (edv - esv) / 1000.0;
    m.insert(ParamName::Sv, sv, Source::Sax, PhaseTag::Static, vec![]);
    m.insert(ParamName::Lvef, 100.0 * (edv - esv) / edv, Source::Sax, PhaseTag::Static, vec![]);
    if let Some(hr) = spec.heart_rate_bpm {
        m.insert(ParamName::Co, sv * hr / 1000.0, Source::Sax, PhaseTag::Static, vec![]);
    }
    m.insert(ParamName::Lvm, myo / 1000.0 * MYOCARDIAL_DENSITY_G_PER_ML, Source::Sax, PhaseTag::Ed, vec![]);
    m.insert(ParamName::Lvedd, 2.0 * a.max(b), Source::Sax, PhaseTag::Ed, vec![]);
    if spec.views.ch4 {
        m.insert(ParamName::ApexThickness, t, Source::Ch4, PhaseTag::Ed, vec![]);
        if let Some(la) = spec.la {
            m.insert(ParamName::Lat4chd, 2.0 * la.short_mm, Source::Ch4, PhaseTag::Es, vec![]);
        }
        if let Some(ra) = spec.ra {
            m.insert(ParamName::Rat4chd, 2.0 * ra.short_mm, Source::Ch4, PhaseTag::Es, vec![]);
        }
    }
    m
}

/// Generates every enabled view with ground-truth masks and the analytic
/// measurement set. Phase 0 is end-diastole; end-systole is `phases / 2`.
pub fn phantom_generate(spec: &PhantomSpec) -> Result<Phantom, BackendError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let geo = sax_geometry(spec);
    let phase_axes: Vec<[f64; 3]> = (0..spec.phases).map(|p| axes_at(spec, p)).collect();
    let sax_l: Vec<Array3<u8>> = phase_axes.iter().map(|&a| sax_labels(spec, &geo, a, true, false)).collect();
    let sax = render(SequenceKind::SaxCine, &sax_l, spec, spec.spacing, &mut rng)?;
    let sax_masks = masks(SequenceKind::SaxCine, sax_l, spec.spacing)?;
    let long_view = |four: bool, kind: SequenceKind, rng: &mut ChaCha8Rng| -> Result<(CineVolume, Vec<LabelMask>), BackendError> {
        let l: Vec<Array3<u8>> = phase_axes.iter().map(|&a| long_axis_labels(spec, a, four)).collect();
        let v = render(kind, &l, spec, spec.spacing, rng)?;
        Ok((v, masks(kind, l, spec.spacing)?))
    };
    let ch2 = if spec.views.ch2 { Some(long_view(false, SequenceKind::Ch2Cine, &mut rng)?) } else { None };
    let ch4 = if spec.views.ch4 { Some(long_view(true, SequenceKind::Ch4Cine, &mut rng)?) } else { None };
    let lge = if spec.views.lge {
        let l = sax_labels(spec, &geo, spec.ed_axes_mm, false, true);
        let v = render(SequenceKind::SaxLge, std::slice::from_ref(&l), spec, spec.spacing, &mut rng)?;
        let m = LabelMask::new(SequenceKind::SaxLge, l, spec.spacing, FrameRef::default())?;
        Some((v, m))
    } else {
        None
    };
    Ok(Phantom {
        spec: spec.clone(),
        sax,
        sax_masks,
        ch2,
        ch4,
        lge,
        analytic: analytic(spec),
        ed_phase: 0,
        es_phase: spec.phases / 2,
    })
}

impl Phantom {
    /// Centre indices `(row, col)` of the short-axis cavity.
    pub fn sax_centre(&self) -> (usize, usize) {
        let g = sax_geometry(&self.spec);
        (g.centre[1], g.centre[2])
    }

    /// Half-open range of short-axis slices containing cavity at ED.
    pub fn cavity_slices(&self) -> std::ops::Range<usize> {
        let m = &self.sax_masks[self.ed_phase];
        let with: Vec<usize> = (0..m.dims()[0]).filter(|&z| m.slice(z).iter().any(|&l| l == 1)).collect();
        with.first().copied().unwrap_or(0)..with.last().map_or(0, |z| z + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantify::{cavity_volume, lv_mass};

    fn light(spec: PhantomSpec) -> PhantomSpec {
        PhantomSpec {
            views: Views {
                ch2: false,
                ch4: false,
                lge: false,
            },
            ..spec
        }
    }

    #[test]
    fn closed_form_sphere_example() {
        let spec = PhantomSpec {
            ed_axes_mm: [30.0; 3],
            es_axes_mm: [24.0; 3],
            ..PhantomSpec::default()
        };
        let a = analytic(&spec);
        assert!((a.value(ParamName::Lvedv).unwrap() - 113.097).abs() < 1e-3);
        assert!((a.value(ParamName::Lvesv).unwrap() - 57.906).abs() < 1e-3);
        assert!((a.value(ParamName::Lvef).unwrap() - 48.80).abs() < 1e-2);
    }

    #[test]
    fn cap_formula_matches_numeric_integration() {
        let (aa, bb, cc, h) = (33.0, 29.0, 48.0, 8.0);
        let n = 200_000;
        let dz = h / n as f64;
        let numeric: f64 = (0..n)
            .map(|i| {
                let z = cc - h + (i as f64 + 0.5) * dz;
                PI * aa * bb * (1.0 - (z / cc).powi(2)) * dz
            })
            .sum();
        let closed = PI * aa * bb * h * h * (3.0 * cc - h) / (3.0 * cc * cc);
        assert!((numeric - closed).abs() / closed < 1e-8);
    }

    #[test]
    fn voxel_volumes_match_analytic() {
        let p = phantom_generate(&light(PhantomSpec::default())).unwrap();
        let edv = cavity_volume(&p.sax_masks[0], 1).ml;
        let want = p.analytic.value(ParamName::Lvedv).unwrap();
        assert!((edv - want).abs() / want < 0.02, "{edv} vs {want}");
        let lvm = lv_mass(&p.sax_masks[0], MYOCARDIAL_DENSITY_G_PER_ML).unwrap();
        let want = p.analytic.value(ParamName::Lvm).unwrap();
        assert!((lvm - want).abs() / want < 0.02, "{lvm} vs {want}");
        let esv = cavity_volume(&p.sax_masks[p.es_phase], 1).ml;
        assert!(esv < edv);
    }

    #[test]
    fn oracle_decoding_recovers_labels() {
        let mut spec = PhantomSpec::annulus(12.0, 5.0);
        spec.noise_sd = 2.0;
        spec.views.ch4 = true;
        spec.views.lge = true;
        spec.lge = vec![LgeSector {
            slices: None,
            theta0_deg: 0.0,
            theta1_deg: 90.0,
        }];
        let p = phantom_generate(&spec).unwrap();
        assert_eq!(decode_labels(&p.sax).unwrap(), p.sax_masks);
        assert_eq!(decode_labels(&p.ch4.as_ref().unwrap().0).unwrap(), p.ch4.as_ref().unwrap().1);
        let (lv, lm) = p.lge.as_ref().unwrap();
        assert_eq!(decode_labels(lv).unwrap()[0], *lm);
        assert!(lm.count(3) > 0);
    }

    #[test]
    fn cross_sections_are_centred() {
        let mut spec = light(PhantomSpec::default());
        spec.ed_axes_mm = [36.0, 27.3, 22.1];
        spec.rotation_deg = 23.0;
        let p = phantom_generate(&spec).unwrap();
        let (cy, cx) = p.sax_centre();
        let m = &p.sax_masks[0];
        for z in p.cavity_slices() {
            let pts: Vec<_> = m.slice(z).indexed_iter().filter(|(_, l)| **l == 1).map(|(i, _)| i).collect();
            let n = pts.len() as f64;
            let my = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
            let mx = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
            assert_eq!((my, mx), (cy as f64, cx as f64));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = PhantomSpec::default();
        s.es_axes_mm = [50.0, 20.0, 20.0];
        assert!(phantom_generate(&s).is_err());
        let s = PhantomSpec {
            wall_mm: 0.0,
            ..PhantomSpec::default()
        };
        assert!(phantom_generate(&s).is_err());
    }

    #[test]
    fn random_specs_are_valid_and_seeded() {
        for seed in 0..20 {
            let s = PhantomSpec::random(seed);
            s.validate().unwrap();
            assert_eq!(s, PhantomSpec::random(seed));
            assert!(s.es_axes_mm[1] >= 20.0 && s.ed_axes_mm[1] <= 40.0);
        }
    }
}
