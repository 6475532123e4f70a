//! Desk format: a JSON header next to a raw little-endian payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CineVolume, DataType, SequenceKind, Spacing, VolumeError};

pub const DESK_BYTE_ORDER: &str = "little";

/// Header of a desk volume. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskHeader {
    pub kind: SequenceKind,
    pub dims: [usize; 4],
    pub spacing_mm: Spacing,
    pub phase_interval_ms: Option<f64>,
    pub heart_rate_bpm: Option<f64>,
    pub datatype: DataType,
    pub byte_order: String,
    /// Payload file name, resolved relative to the header's directory.
    pub payload: String,
}

impl DeskHeader {
    pub fn for_volume(volume: &CineVolume, payload: impl Into<String>) -> DeskHeader {
        DeskHeader {
            kind: volume.kind(),
            dims: volume.dims(),
            spacing_mm: volume.spacing(),
            phase_interval_ms: volume.phase_interval_ms(),
            heart_rate_bpm: volume.heart_rate_bpm(),
            datatype: volume.datatype(),
            byte_order: DESK_BYTE_ORDER.to_string(),
            payload: payload.into(),
        }
    }

    pub fn expected_payload_len(&self) -> usize {
        self.dims.iter().product::<usize>() * self.datatype.byte_width()
    }

    /// Builds the volume from this header and an in-memory payload.
    pub fn decode(&self, bytes: &[u8]) -> Result<CineVolume, VolumeError> {
        if self.byte_order != DESK_BYTE_ORDER {
            return Err(VolumeError::MalformedHeader(format!(
                "byte_order must be `{DESK_BYTE_ORDER}`, got `{}`",
                self.byte_order
            )));
        }
        if !self.spacing_mm.is_valid() {
            return Err(VolumeError::Inconsistent(format!(
                "spacing must be positive, got {:?}",
                self.spacing_mm.as_array()
            )));
        }
        if self.dims.contains(&0) {
            return Err(VolumeError::Inconsistent(format!("zero-length axis in dims {:?}", self.dims)));
        }
        Ok(
            CineVolume::from_payload(self.kind, self.dims, self.spacing_mm, self.datatype, bytes)?
                .with_heart_rate(self.heart_rate_bpm)
                .with_phase_interval(self.phase_interval_ms),
        )
    }
}

fn payload_path(header_path: &Path, payload: &str) -> PathBuf {
    header_path
        .parent()
        .map(|dir| dir.join(payload))
        .unwrap_or_else(|| PathBuf::from(payload))
}

pub(super) fn load(path: &Path) -> Result<CineVolume, VolumeError> {
    let text = fs::read_to_string(path).map_err(|e| VolumeError::io(path, e))?;
    let header: DeskHeader =
        serde_json::from_str(&text).map_err(|e| VolumeError::MalformedHeader(e.to_string()))?;
    let payload = payload_path(path, &header.payload);
    let bytes = fs::read(&payload).map_err(|e| VolumeError::io(&payload, e))?;
    header.decode(&bytes)
}

pub(super) fn save(volume: &CineVolume, path: &Path) -> Result<(), VolumeError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| VolumeError::MalformedHeader(format!("bad header path {}", path.display())))?;
    let payload_name = format!("{stem}.raw");
    let header = DeskHeader::for_volume(volume, payload_name.clone());
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    let payload = payload_path(path, &payload_name);
    fs::write(&payload, volume.payload_bytes()).map_err(|e| VolumeError::io(&payload, e))?;
    fs::write(path, json).map_err(|e| VolumeError::io(path, e))
}
