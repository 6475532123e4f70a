//! Deterministic geometric and intensity transforms applied before expert
//! models see a study.
//!
//! Centring rules: when an axis has to shrink or grow by an odd amount, the
//! extra element is dropped from (or padded at) the end.

use ndarray::{s, Array3, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::volume::{CineVolume, LabelMask, SequenceKind, Spacing, VolumeError};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("cannot keep {keep} phases of {phases}")]
    KeepExceedsPhases { keep: usize, phases: usize },
    #[error("resampling gives a degenerate shape {0:?}")]
    DegenerateDims([usize; 3]),
    #[error("target spacing must be positive")]
    InvalidSpacing,
    #[error("mask has no foreground")]
    EmptyMask,
    #[error("centre {center:?} outside volume of shape {dims:?}")]
    CenterOutside { center: [usize; 3], dims: [usize; 3] },
    #[error("mask shape {mask:?} does not match volume {volume:?}")]
    DimMismatch { mask: [usize; 3], volume: [usize; 3] },
    #[error("pipeline step `{0}` needs a mask")]
    MaskRequired(&'static str),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Per-kind cropping geometry of the diagnosis models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub kind: SequenceKind,
    pub phase_keep: usize,
    pub xy_roi: [usize; 2],
    pub final_dims: [usize; 3],
}

impl CropSpec {
    pub fn for_kind(kind: SequenceKind) -> CropSpec {
        let (phase_keep, final_dims) = match kind {
            SequenceKind::Ch2Cine | SequenceKind::Ch4Cine => (3, [80, 192, 192]),
            SequenceKind::SaxCine => (9, [288, 144, 144]),
            SequenceKind::SaxLge | SequenceKind::RestMpi => (1, [9, 144, 144]),
        };
        CropSpec {
            kind,
            phase_keep,
            xy_roi: [200, 200],
            final_dims,
        }
    }

    /// The replayable pipeline for this geometry at a target spacing.
    pub fn pipeline(&self, target: Spacing) -> PreprocessSpec {
        PreprocessSpec {
            steps: vec![
                Step::CentralPhaseCrop { keep: self.phase_keep },
                Step::Resample {
                    spacing: target,
                    mode: Interpolation::Linear,
                },
                Step::RoiCrop { size: self.xy_roi },
                Step::MinmaxNormalize,
                Step::FixedCropOrPad { dims: self.final_dims },
            ],
        }
    }
}

/// Front offset of a centred window when an axis changes from `from` to
/// `to` elements.
fn centred_offset(from: usize, to: usize) -> usize {
    from.abs_diff(to) / 2
}

/// Keeps the `keep` central phases.
pub fn central_phase_crop(cine: &CineVolume, keep: usize) -> Result<CineVolume, PreprocessError> {
    let phases = cine.phases();
    if keep == 0 || keep > phases {
        return Err(PreprocessError::KeepExceedsPhases { keep, phases });
    }
    if keep == phases {
        return Ok(cine.clone());
    }
    let a = centred_offset(phases, keep);
    let data = cine.data().slice(s![a..a + keep, .., .., ..]).to_owned();
    Ok(cine.derive(data, cine.spacing())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Nearest,
}

fn resampled_dims(dims: [usize; 3], from: Spacing, to: Spacing) -> Result<[usize; 3], PreprocessError> {
    if !to.is_valid() {
        return Err(PreprocessError::InvalidSpacing);
    }
    let f = from.as_array();
    let t = to.as_array();
    let out = [0, 1, 2].map(|i| (dims[i] as f64 * f[i] / t[i]).round() as usize);
    if out.contains(&0) {
        return Err(PreprocessError::DegenerateDims(out));
    }
    Ok(out)
}

/// Source coordinate of output index `i`: voxel centres share the origin.
fn source_coord(i: usize, from: f64, to: f64, n: usize) -> f64 {
    (i as f64 * to / from).min((n - 1) as f64)
}

fn resample3(src: ArrayView3<'_, f32>, from: Spacing, to: Spacing, out: [usize; 3], mode: Interpolation) -> Array3<f32> {
    let n = src.dim();
    let n = [n.0, n.1, n.2];
    let f = from.as_array();
    let t = to.as_array();
    // Per-axis (lower index, upper index, fraction) lookup tables.
    let tables: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            (0..out[a])
                .map(|i| {
                    let c = source_coord(i, f[a], t[a], n[a]);
                    match mode {
                        Interpolation::Nearest => {
                            let k = (c.round() as usize).min(n[a] - 1);
                            (k, k, 0.0)
                        }
                        Interpolation::Linear => {
                            let lo = c.floor() as usize;
                            let hi = (lo + 1).min(n[a] - 1);
                            (lo, hi, c - lo as f64)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + w * (b - a) };
    Array3::from_shape_fn(out, |(z, y, x)| {
        let (z0, z1, wz) = tables[0][z];
        let (y0, y1, wy) = tables[1][y];
        let (x0, x1, wx) = tables[2][x];
        let v = |zz, yy, xx| f64::from(src[[zz, yy, xx]]);
        let row = |zz| lerp(lerp(v(zz, y0, x0), v(zz, y0, x1), wx), lerp(v(zz, y1, x0), v(zz, y1, x1), wx), wy);
        lerp(row(z0), row(z1), wz) as f32
    })
}

/// Resamples every phase to `target` spacing. Output dims are
/// `round(dim × spacing / target)`; trilinear for intensities, nearest for
/// labels. Samples beyond the last source voxel clamp to it.
pub fn resample(volume: &CineVolume, target: Spacing, mode: Interpolation) -> Result<CineVolume, PreprocessError> {
    let [p, z, y, x] = volume.dims();
    let out = resampled_dims([z, y, x], volume.spacing(), target)?;
    if volume.spacing() == target {
        return Ok(volume.clone());
    }
    let mut data = Array4::zeros((p, out[0], out[1], out[2]));
    for ph in 0..p {
        data.index_axis_mut(Axis(0), ph)
            .assign(&resample3(volume.phase(ph), volume.spacing(), target, out, mode));
    }
    Ok(volume.derive(data, target)?)
}

/// Nearest-neighbour resampling of a label mask.
pub fn resample_mask(mask: &LabelMask, target: Spacing) -> Result<LabelMask, PreprocessError> {
    let out = resampled_dims(mask.dims(), mask.spacing(), target)?;
    if mask.spacing() == target {
        return Ok(mask.clone());
    }
    let src = mask.labels().mapv(f32::from);
    let r = resample3(src.view(), mask.spacing(), target, out, Interpolation::Nearest);
    Ok(LabelMask::new(mask.kind(), r.mapv(|v| v as u8), target, mask.frame().clone())?)
}

/// In-plane window of `size` centred on the mask's foreground centroid,
/// zero-padded where it leaves the image.
pub fn roi_crop(volume: &CineVolume, mask: &LabelMask, size: [usize; 2]) -> Result<CineVolume, PreprocessError> {
    let [p, z, y, x] = volume.dims();
    if mask.dims() != [z, y, x] {
        return Err(PreprocessError::DimMismatch {
            mask: mask.dims(),
            volume: [z, y, x],
        });
    }
    let (mut n, mut sy, mut sx) = (0usize, 0.0, 0.0);
    for ((_, yy, xx), &l) in mask.labels().indexed_iter() {
        if l != 0 {
            n += 1;
            sy += yy as f64;
            sx += xx as f64;
        }
    }
    if n == 0 {
        return Err(PreprocessError::EmptyMask);
    }
    let start = |c: f64, len: usize| (c - len as f64 / 2.0 + 0.5).floor() as i64;
    let (r0, c0) = (start(sy / n as f64, size[0]), start(sx / n as f64, size[1]));
    let src = volume.data();
    let data = Array4::from_shape_fn((p, z, size[0], size[1]), |(pp, zz, r, c)| {
        let (sr, sc) = (r0 + r as i64, c0 + c as i64);
        if sr < 0 || sc < 0 || sr >= y as i64 || sc >= x as i64 {
            0.0
        } else {
            src[[pp, zz, sr as usize, sc as usize]]
        }
    });
    Ok(volume.derive(data, volume.spacing())?)
}

/// Flattens `(phase, slice)` into one axis, phase-major.
pub fn to_stack(volume: &CineVolume) -> Array3<f32> {
    let [p, z, y, x] = volume.dims();
    volume
        .data()
        .to_shape((p * z, y, x))
        .expect("standard layout")
        .to_owned()
}

/// Centre crop or symmetric zero pad of a 3D array to exactly `dims`.
pub fn crop_or_pad3(src: ArrayView3<'_, f32>, dims: [usize; 3]) -> Array3<f32> {
    let n = src.dim();
    let n = [n.0, n.1, n.2];
    // Signed offset from output index to source index per axis.
    let off: [i64; 3] = [0, 1, 2].map(|a| {
        let o = centred_offset(n[a], dims[a]) as i64;
        if n[a] >= dims[a] {
            o
        } else {
            -o
        }
    });
    Array3::from_shape_fn(dims, |(i, j, k)| {
        let s = [i as i64 + off[0], j as i64 + off[1], k as i64 + off[2]];
        if (0..3).all(|a| s[a] >= 0 && s[a] < n[a] as i64) {
            src[[s[0] as usize, s[1] as usize, s[2] as usize]]
        } else {
            0.0
        }
    })
}

/// Stacks phases and slices, then centre-crops or zero-pads each axis to
/// `dims`. The result is a single-phase volume of shape `(1, d0, d1, d2)`.
pub fn fixed_crop_or_pad(volume: &CineVolume, dims: [usize; 3]) -> Result<CineVolume, PreprocessError> {
    let stack = to_stack(volume);
    let out = crop_or_pad3(stack.view(), dims);
    let data = out.insert_axis(Axis(0));
    Ok(volume.derive(data, volume.spacing())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub volume: CineVolume,
    /// Set when the input was constant and mapped to zeros.
    pub constant: bool,
}

/// Affine map of the value range onto `[0, 1]`.
pub fn minmax_normalize(volume: &CineVolume) -> Result<Normalized, PreprocessError> {
    let (lo, hi) = volume
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let constant = hi <= lo;
    let (lo, range) = (f64::from(lo), f64::from(hi) - f64::from(lo));
    let data = volume.data().mapv(|v| if constant { 0.0 } else { ((f64::from(v) - lo) / range) as f32 });
    Ok(Normalized {
        volume: volume.derive(data, volume.spacing())?,
        constant,
    })
}

/// Local patch and its twice-as-wide, half-resolution context patch.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPatches {
    pub local: Array3<f32>,
    pub global: Array3<f32>,
}

/// Local patch edge per kind.
pub fn local_patch_dims(kind: SequenceKind) -> [usize; 3] {
    match kind {
        SequenceKind::Ch2Cine | SequenceKind::Ch4Cine => [32, 64, 64],
        SequenceKind::SaxCine => [64, 64, 64],
        SequenceKind::SaxLge | SequenceKind::RestMpi => [3, 64, 64],
    }
}

fn window(src: ArrayView3<'_, f32>, center: [usize; 3], dims: [usize; 3]) -> Array3<f32> {
    let n = src.dim();
    let n = [n.0, n.1, n.2];
    let start: [i64; 3] = [0, 1, 2].map(|a| center[a] as i64 - (dims[a] / 2) as i64);
    Array3::from_shape_fn(dims, |(i, j, k)| {
        let s = [start[0] + i as i64, start[1] + j as i64, start[2] + k as i64];
        if (0..3).all(|a| s[a] >= 0 && s[a] < n[a] as i64) {
            src[[s[0] as usize, s[1] as usize, s[2] as usize]]
        } else {
            0.0
        }
    })
}

/// Crops `local_dims` around `center`, and a window of twice that extent
/// reduced to `local_dims` by 2×2×2 block means.
pub fn dual_path_patches(volume: ArrayView3<'_, f32>, center: [usize; 3], local_dims: [usize; 3]) -> Result<DualPatches, PreprocessError> {
    let n = volume.dim();
    let n = [n.0, n.1, n.2];
    if (0..3).any(|a| center[a] >= n[a]) {
        return Err(PreprocessError::CenterOutside { center, dims: n });
    }
    let local = window(volume, center, local_dims);
    let wide = window(volume, center, local_dims.map(|d| 2 * d));
    let global = Array3::from_shape_fn(local_dims, |(i, j, k)| {
        let mut acc = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    acc += f64::from(wide[[2 * i + a, 2 * j + b, 2 * k + c]]);
                }
            }
        }
        (acc / 8.0) as f32
    });
    Ok(DualPatches { local, global })
}

/// One replayable transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    CentralPhaseCrop { keep: usize },
    Resample { spacing: Spacing, mode: Interpolation },
    RoiCrop { size: [usize; 2] },
    FixedCropOrPad { dims: [usize; 3] },
    MinmaxNormalize,
}

impl Step {
    fn name(&self) -> &'static str {
        match self {
            Step::CentralPhaseCrop { .. } => "central_phase_crop",
            Step::Resample { .. } => "resample",
            Step::RoiCrop { .. } => "roi_crop",
            Step::FixedCropOrPad { .. } => "fixed_crop_or_pad",
            Step::MinmaxNormalize => "minmax_normalize",
        }
    }
}

/// Preprocessing pipeline as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub steps: Vec<Step>,
}

/// Result of [`PreprocessSpec::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub volume: CineVolume,
    /// Steps that reported a degenerate input (constant volume).
    pub flags: Vec<String>,
}

impl PreprocessSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Applies the steps in order. The mask, when given, is a single frame
    /// aligned to the volume; it follows resampling with nearest
    /// interpolation and locates the ROI.
    pub fn run(&self, volume: &CineVolume, mask: Option<&LabelMask>) -> Result<Preprocessed, PreprocessError> {
        let mut v = volume.clone();
        let mut m = mask.cloned();
        let mut flags = Vec::new();
        for step in &self.steps {
            v = match step {
                Step::CentralPhaseCrop { keep } => central_phase_crop(&v, *keep)?,
                Step::Resample { spacing, mode } => {
                    if let Some(mm) = &m {
                        m = Some(resample_mask(mm, *spacing)?);
                    }
                    resample(&v, *spacing, *mode)?
                }
                Step::RoiCrop { size } => {
                    let mm = m.as_ref().ok_or(PreprocessError::MaskRequired(step.name()))?;
                    let out = roi_crop(&v, mm, *size)?;
                    m = None;
                    out
                }
                Step::FixedCropOrPad { dims } => fixed_crop_or_pad(&v, *dims)?,
                Step::MinmaxNormalize => {
                    let n = minmax_normalize(&v)?;
                    if n.constant {
                        flags.push(format!("{}: constant input", step.name()));
                    }
                    n.volume
                }
            };
        }
        Ok(Preprocessed { volume: v, flags })
    }
}
