//! Cine volumes, label masks and their on-disk formats.
//!
//! Every array in this crate uses the axis order `(phase, slice, row, col)`
//! for 4D data and `(slice, row, col)` for a single frame. NIfTI files store
//! `(x, y, z, t)` with `x` fastest, which maps to `(col, row, slice, phase)`;
//! the in-memory layout is therefore identical and loading only reorders the
//! dimension list, never the voxels.

mod desk;
mod mask;
mod nifti;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

pub use desk::{DeskHeader, DESK_BYTE_ORDER};
pub use mask::{masks_to_volume, volume_to_masks, FrameRef, LabelMask, LabelSchema, Structure};

/// Acquisition sequence of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SequenceKind {
    #[serde(rename = "SAX_CINE")]
    SaxCine,
    #[serde(rename = "CH2_CINE")]
    Ch2Cine,
    #[serde(rename = "CH4_CINE")]
    Ch4Cine,
    #[serde(rename = "SAX_LGE")]
    SaxLge,
    #[serde(rename = "REST_MPI")]
    RestMpi,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 5] = [
        SequenceKind::SaxCine,
        SequenceKind::Ch2Cine,
        SequenceKind::Ch4Cine,
        SequenceKind::SaxLge,
        SequenceKind::RestMpi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SequenceKind::SaxCine => "SAX_CINE",
            SequenceKind::Ch2Cine => "CH2_CINE",
            SequenceKind::Ch4Cine => "CH4_CINE",
            SequenceKind::SaxLge => "SAX_LGE",
            SequenceKind::RestMpi => "REST_MPI",
        }
    }

    pub fn is_cine(self) -> bool {
        matches!(
            self,
            SequenceKind::SaxCine | SequenceKind::Ch2Cine | SequenceKind::Ch4Cine
        )
    }

    /// Short human label used in reports and agent answers.
    pub fn display_name(self) -> &'static str {
        match self {
            SequenceKind::SaxCine => "SAX cine",
            SequenceKind::Ch2Cine => "2CH cine",
            SequenceKind::Ch4Cine => "4CH cine",
            SequenceKind::SaxLge => "SAX LGE",
            SequenceKind::RestMpi => "Rest MPI",
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceKind {
    type Err = VolumeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SequenceKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| VolumeError::MalformedHeader(format!("unknown sequence kind `{s}`")))
    }
}

/// Physical voxel size in millimetres, `(dz, dy, dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Spacing {
    pub dz: f64,
    pub dy: f64,
    pub dx: f64,
}

impl Spacing {
    pub const fn new(dz: f64, dy: f64, dx: f64) -> Self {
        Spacing { dz, dy, dx }
    }

    pub const fn isotropic(d: f64) -> Self {
        Spacing { dz: d, dy: d, dx: d }
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.dz * self.dy * self.dx
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dz, self.dy, self.dx]
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn approx_eq(&self, other: &Spacing) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0))
    }

    pub fn scaled(&self, factor: f64) -> Spacing {
        Spacing::new(self.dz * factor, self.dy * factor, self.dx * factor)
    }
}

impl From<[f64; 3]> for Spacing {
    fn from(v: [f64; 3]) -> Self {
        Spacing::new(v[0], v[1], v[2])
    }
}

impl From<Spacing> for [f64; 3] {
    fn from(s: Spacing) -> Self {
        s.as_array()
    }
}

/// Storage type of a volume payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Uint8,
    Int16,
    Uint16,
    Float32,
}

impl DataType {
    pub fn byte_width(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 | DataType::Uint16 => 2,
            DataType::Float32 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Uint8 => "uint8",
            DataType::Int16 => "int16",
            DataType::Uint16 => "uint16",
            DataType::Float32 => "float32",
        }
    }

    fn range(self) -> Option<(f32, f32)> {
        match self {
            DataType::Uint8 => Some((0.0, u8::MAX as f32)),
            DataType::Int16 => Some((i16::MIN as f32, i16::MAX as f32)),
            DataType::Uint16 => Some((0.0, u16::MAX as f32)),
            DataType::Float32 => None,
        }
    }

    /// Whether `value` survives a round trip through this storage type.
    pub fn represents(self, value: f32) -> bool {
        match self.range() {
            None => true,
            Some((lo, hi)) => value.fract() == 0.0 && value >= lo && value <= hi,
        }
    }
}

/// On-disk format selector for [`load_volume`] / [`save_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    Desk,
    Nifti,
}

impl VolumeFormat {
    /// Guess from the file extension: `.nii` is NIfTI, anything else desk.
    pub fn from_path(path: &Path) -> VolumeFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("nii") => VolumeFormat::Nifti,
            _ => VolumeFormat::Desk,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dims/spacing inconsistency: {0}")]
    Inconsistent(String),
    #[error("unsupported NIfTI datatype code {0} (only int16, uint16 and float32 are accepted)")]
    UnsupportedDatatype(i16),
    #[error("payload size mismatch: header implies {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },
    #[error("sequence kind mismatch: declared {declared}, expected {expected}")]
    KindMismatch {
        declared: SequenceKind,
        expected: SequenceKind,
    },
    #[error("{0} must be single-phase")]
    NotSinglePhase(&'static str),
    #[error("label {label} is not part of the {kind} schema")]
    UnknownLabel { label: u8, kind: SequenceKind },
    #[error("value {value} cannot be stored as {datatype}")]
    NotRepresentable { value: f32, datatype: &'static str },
}

impl VolumeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        VolumeError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A 4D scalar field `(phase, slice, row, col)` with physical metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CineVolume {
    kind: SequenceKind,
    spacing: Spacing,
    phase_interval_ms: Option<f64>,
    heart_rate_bpm: Option<f64>,
    datatype: DataType,
    data: Array4<f32>,
}

impl CineVolume {
    /// Wraps `data` after checking the structural invariants: every axis
    /// non-empty and every spacing component finite and positive.
    ///
    /// Phase-count rules per sequence kind are checked by
    /// [`validate_sequence`], so a mislabelled study can still be loaded and
    /// reported with a precise reason.
    pub fn new(kind: SequenceKind, data: Array4<f32>, spacing: Spacing) -> Result<Self, VolumeError> {
        if data.shape().contains(&0) {
            return Err(VolumeError::Inconsistent(format!(
                "all dims must be >= 1, got {:?}",
                data.shape()
            )));
        }
        if !spacing.is_valid() {
            return Err(VolumeError::Inconsistent(format!(
                "spacing must be positive, got {:?}",
                spacing.as_array()
            )));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(CineVolume {
            kind,
            spacing,
            phase_interval_ms: None,
            heart_rate_bpm: None,
            datatype: DataType::Float32,
            data,
        })
    }

    pub fn with_heart_rate(mut self, bpm: Option<f64>) -> Self {
        self.heart_rate_bpm = bpm;
        self
    }

    pub fn with_phase_interval(mut self, ms: Option<f64>) -> Self {
        self.phase_interval_ms = ms;
        self
    }

    /// Declares the storage type used when the volume is saved. Fails if a
    /// voxel value would not survive the conversion.
    pub fn with_datatype(mut self, datatype: DataType) -> Result<Self, VolumeError> {
        if let Some(bad) = self.data.iter().find(|v| !datatype.represents(**v)) {
            return Err(VolumeError::NotRepresentable {
                value: *bad,
                datatype: datatype.as_str(),
            });
        }
        self.datatype = datatype;
        Ok(self)
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn set_kind(&mut self, kind: SequenceKind) {
        self.kind = kind;
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn phase_interval_ms(&self) -> Option<f64> {
        self.phase_interval_ms
    }

    pub fn heart_rate_bpm(&self) -> Option<f64> {
        self.heart_rate_bpm
    }

    pub fn datatype(&self) -> DataType {
        self.datatype
    }

    /// `(phases, slices, rows, cols)`.
    pub fn dims(&self) -> [usize; 4] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn phases(&self) -> usize {
        self.dims()[0]
    }

    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f32> {
        self.data
    }

    /// Copy of the metadata with new voxel data and spacing. Datatype resets
    /// to float32 since transformed values are generally not integral.
    pub fn derive(&self, data: Array4<f32>, spacing: Spacing) -> Result<CineVolume, VolumeError> {
        Ok(CineVolume::new(self.kind, data, spacing)?
            .with_heart_rate(self.heart_rate_bpm)
            .with_phase_interval(self.phase_interval_ms))
    }

    /// One phase as a `(slice, row, col)` view.
    pub fn phase(&self, p: usize) -> ndarray::ArrayView3<'_, f32> {
        self.data.index_axis(ndarray::Axis(0), p)
    }

    /// Payload bytes exactly as written to disk (little-endian).
    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * self.datatype.byte_width());
        for &v in self.data.iter() {
            match self.datatype {
                DataType::Uint8 => out.push(v as u8),
                DataType::Int16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
                DataType::Uint16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
                DataType::Float32 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        out
    }

    /// Inverse of [`payload_bytes`](Self::payload_bytes).
    pub fn from_payload(
        kind: SequenceKind,
        dims: [usize; 4],
        spacing: Spacing,
        datatype: DataType,
        bytes: &[u8],
    ) -> Result<CineVolume, VolumeError> {
        let count: usize = dims.iter().product();
        let expected = count * datatype.byte_width();
        if bytes.len() != expected {
            return Err(VolumeError::PayloadSize {
                expected,
                found: bytes.len(),
            });
        }
        let values: Vec<f32> = match datatype {
            DataType::Uint8 => bytes.iter().map(|&b| b as f32).collect(),
            DataType::Int16 => bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
                .collect(),
            DataType::Uint16 => bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32)
                .collect(),
            DataType::Float32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        let data = Array4::from_shape_vec(dims, values)
            .map_err(|e| VolumeError::Inconsistent(e.to_string()))?;
        let mut vol = CineVolume::new(kind, data, spacing)?;
        vol.datatype = datatype;
        Ok(vol)
    }
}

/// Reads a volume. `path` is the header JSON for desk files and the `.nii`
/// file for NIfTI.
pub fn load_volume(path: impl AsRef<Path>, format: VolumeFormat) -> Result<CineVolume, VolumeError> {
    match format {
        VolumeFormat::Desk => desk::load(path.as_ref()),
        VolumeFormat::Nifti => nifti::load(path.as_ref()),
    }
}

/// Writes a volume. For the desk format the payload goes next to the header
/// as `<stem>.raw`; NIfTI writes a single `.nii` plus a `<stem>.json`
/// sidecar carrying the sequence kind and heart rate.
pub fn save_volume(volume: &CineVolume, path: impl AsRef<Path>, format: VolumeFormat) -> Result<(), VolumeError> {
    match format {
        VolumeFormat::Desk => desk::save(volume, path.as_ref()),
        VolumeFormat::Nifti => nifti::save(volume, path.as_ref()),
    }
}

/// Quality flags raised by [`validate_sequence`] that do not block use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceFlag {
    /// A cine sequence with a single phase cannot provide ED/ES.
    SinglePhaseCine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceDescriptor {
    pub kind: SequenceKind,
    pub phases: usize,
    pub slices: usize,
    pub flags: Vec<SequenceFlag>,
}

/// Metadata-level sequence check: declared kind must equal `expected`,
/// LGE and Rest MPI must be single-phase, and single-phase cines are flagged.
pub fn validate_sequence(volume: &CineVolume, expected: SequenceKind) -> Result<SequenceDescriptor, VolumeError> {
    if volume.kind() != expected {
        return Err(VolumeError::KindMismatch {
            declared: volume.kind(),
            expected,
        });
    }
    let [phases, slices, _, _] = volume.dims();
    match expected {
        SequenceKind::SaxLge if phases > 1 => return Err(VolumeError::NotSinglePhase("LGE")),
        SequenceKind::RestMpi if phases > 1 => return Err(VolumeError::NotSinglePhase("Rest MPI")),
        _ => {}
    }
    let mut flags = Vec::new();
    if expected.is_cine() && phases == 1 {
        flags.push(SequenceFlag::SinglePhaseCine);
    }
    Ok(SequenceDescriptor {
        kind: expected,
        phases,
        slices,
        flags,
    })
}
