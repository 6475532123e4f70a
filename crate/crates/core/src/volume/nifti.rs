//! Minimal NIfTI-1 support: single `.nii` file, little-endian, uncompressed,
//! datatypes int16 / uint16 / float32.
//!
//! NIfTI dims `(x, y, z, t)` map to `(col, row, slice, phase)`; `pixdim[1..=3]`
//! are `(dx, dy, dz)` in mm and `pixdim[4]` is the phase interval. Because
//! NIfTI stores `x` fastest the voxel order is already `(phase, slice, row,
//! col)` row-major, so the payload is copied without reshuffling.
//!
//! The sequence kind has no NIfTI field. It is read from a `<stem>.json`
//! sidecar when present, otherwise from a `kind=<KIND>` tag in `descrip`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CineVolume, DataType, SequenceKind, Spacing, VolumeError};

const HEADER_LEN: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_UINT16: i16 = 512;

const UNITS_MM: u8 = 2;
const UNITS_SEC: u8 = 8;
const UNITS_MSEC: u8 = 16;
const UNITS_USEC: u8 = 24;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    kind: SequenceKind,
    #[serde(default)]
    heart_rate_bpm: Option<f64>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn kind_from_descrip(header: &[u8]) -> Option<SequenceKind> {
    let raw = &header[148..228];
    let end = raw.iter().position(|&c| c == 0).unwrap_or(raw.len());
    let text = std::str::from_utf8(&raw[..end]).ok()?;
    text.split(';')
        .filter_map(|kv| kv.trim().strip_prefix("kind="))
        .find_map(|k| k.parse().ok())
}

pub(super) fn load(path: &Path) -> Result<CineVolume, VolumeError> {
    let bytes = fs::read(path).map_err(|e| VolumeError::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::MalformedHeader(format!("file shorter than {HEADER_LEN} bytes")));
    }
    let sizeof_hdr = i32_at(&bytes, 0);
    if sizeof_hdr != HEADER_LEN as i32 {
        if i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == HEADER_LEN as i32 {
            return Err(VolumeError::MalformedHeader("big-endian NIfTI is not supported".into()));
        }
        return Err(VolumeError::MalformedHeader(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }
    if &bytes[344..348] != b"n+1\0" {
        return Err(VolumeError::MalformedHeader("magic is not `n+1` (single-file NIfTI-1)".into()));
    }

    let ndim = i16_at(&bytes, 40);
    if !(1..=4).contains(&ndim) {
        return Err(VolumeError::MalformedHeader(format!("dim[0] = {ndim}, supported range is 1..=4")));
    }
    let mut nifti_dims = [1usize; 4];
    for (i, d) in nifti_dims.iter_mut().enumerate().take(ndim as usize) {
        let v = i16_at(&bytes, 42 + 2 * i);
        if v < 1 {
            return Err(VolumeError::Inconsistent(format!("dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }
    let [nx, ny, nz, nt] = nifti_dims;

    let datatype = match i16_at(&bytes, 70) {
        DT_INT16 => DataType::Int16,
        DT_UINT16 => DataType::Uint16,
        DT_FLOAT32 => DataType::Float32,
        other => return Err(VolumeError::UnsupportedDatatype(other)),
    };

    let pixdim = |i: usize| f32_at(&bytes, 76 + 4 * i) as f64;
    let spacing = Spacing::new(
        if ndim >= 3 { pixdim(3) } else { 1.0 },
        if ndim >= 2 { pixdim(2) } else { 1.0 },
        pixdim(1),
    );
    if !spacing.is_valid() {
        return Err(VolumeError::Inconsistent(format!("pixdim gives spacing {:?}", spacing.as_array())));
    }
    let units = bytes[123];
    let phase_interval_ms = if ndim == 4 && pixdim(4) > 0.0 {
        let scale = match units & 0x38 {
            UNITS_SEC => 1000.0,
            UNITS_USEC => 0.001,
            _ => 1.0,
        };
        Some(pixdim(4) * scale)
    } else {
        None
    };

    let vox_offset = f32_at(&bytes, 108);
    if vox_offset < HEADER_LEN as f32 || vox_offset.fract() != 0.0 {
        return Err(VolumeError::MalformedHeader(format!("vox_offset {vox_offset} is invalid")));
    }
    let vox_offset = vox_offset as usize;
    let dims = [nt, nz, ny, nx];
    let expected = dims.iter().product::<usize>() * datatype.byte_width();
    let found = bytes.len().saturating_sub(vox_offset);
    if found != expected {
        return Err(VolumeError::PayloadSize { expected, found });
    }

    let (kind, heart_rate) = match fs::read_to_string(sidecar_path(path)) {
        Ok(text) => {
            let s: Sidecar =
                serde_json::from_str(&text).map_err(|e| VolumeError::MalformedHeader(format!("sidecar: {e}")))?;
            (s.kind, s.heart_rate_bpm)
        }
        Err(_) => (
            kind_from_descrip(&bytes)
                .ok_or_else(|| VolumeError::MalformedHeader("no sequence kind sidecar or descrip tag".into()))?,
            None,
        ),
    };

    let mut vol = CineVolume::from_payload(kind, dims, spacing, datatype, &bytes[vox_offset..])?
        .with_phase_interval(phase_interval_ms)
        .with_heart_rate(heart_rate);

    let slope = f32_at(&bytes, 112);
    let inter = f32_at(&bytes, 116);
    if slope != 0.0 && (slope != 1.0 || inter != 0.0) {
        let scaled = vol.data().mapv(|v| v * slope + inter);
        vol = vol.derive(scaled, spacing)?;
    }
    Ok(vol)
}

pub(super) fn save(volume: &CineVolume, path: &Path) -> Result<(), VolumeError> {
    let [nt, nz, ny, nx] = volume.dims();
    for (name, n) in [("phases", nt), ("slices", nz), ("rows", ny), ("cols", nx)] {
        if n > i16::MAX as usize {
            return Err(VolumeError::Inconsistent(format!("{name} = {n} exceeds the NIfTI-1 limit")));
        }
    }
    // uint8 has no place in the accepted subset; widen losslessly.
    let (code, datatype) = match volume.datatype() {
        DataType::Uint8 | DataType::Int16 => (DT_INT16, DataType::Int16),
        DataType::Uint16 => (DT_UINT16, DataType::Uint16),
        DataType::Float32 => (DT_FLOAT32, DataType::Float32),
    };
    debug_assert_ne!(code, DT_UINT8);

    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_LEN as i32).to_le_bytes());
    h[38] = b'r';
    let ndim: i16 = if nt > 1 { 4 } else { 3 };
    put_i16(&mut h, 40, ndim);
    for (i, n) in [nx, ny, nz, nt, 1, 1, 1].iter().enumerate() {
        put_i16(&mut h, 42 + 2 * i, *n as i16);
    }
    put_i16(&mut h, 70, code);
    put_i16(&mut h, 72, (datatype.byte_width() * 8) as i16);
    let s = volume.spacing();
    put_f32(&mut h, 76, 1.0); // qfac
    put_f32(&mut h, 80, s.dx as f32);
    put_f32(&mut h, 84, s.dy as f32);
    put_f32(&mut h, 88, s.dz as f32);
    put_f32(&mut h, 92, volume.phase_interval_ms().unwrap_or(0.0) as f32);
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    h[123] = UNITS_MM | UNITS_MSEC;
    let descrip = format!("kind={}", volume.kind());
    h[148..148 + descrip.len()].copy_from_slice(descrip.as_bytes());
    put_i16(&mut h, 252, 1); // qform_code: scanner-anat, identity rotation
    h[344..348].copy_from_slice(b"n+1\0");

    let converted;
    let payload_src = if datatype == volume.datatype() {
        volume
    } else {
        converted = volume.clone().with_datatype(datatype)?;
        &converted
    };
    h.extend_from_slice(&payload_src.payload_bytes());
    fs::write(path, h).map_err(|e| VolumeError::io(path, e))?;

    let sidecar = Sidecar {
        kind: volume.kind(),
        heart_rate_bpm: volume.heart_rate_bpm(),
    };
    let sc = sidecar_path(path);
    fs::write(&sc, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))
        .map_err(|e| VolumeError::io(&sc, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{load_volume, save_volume, VolumeFormat};
    use ndarray::Array4;

    #[test]
    fn float_cine_round_trips_and_keeps_axes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cine.nii");
        let data = Array4::from_shape_fn((3, 4, 5, 6), |(p, z, y, x)| (p * 1000 + z * 100 + y * 10 + x) as f32 + 0.25);
        let v = CineVolume::new(SequenceKind::Ch4Cine, data, Spacing::new(6.0, 1.25, 1.5))
            .unwrap()
            .with_phase_interval(Some(40.0))
            .with_heart_rate(Some(72.0));
        save_volume(&v, &path, VolumeFormat::Nifti).unwrap();
        let back = load_volume(&path, VolumeFormat::Nifti).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.data()[[2, 3, 4, 5]], 2345.25);
    }

    #[test]
    fn descrip_tag_is_used_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lge.nii");
        let v = CineVolume::new(SequenceKind::SaxLge, Array4::ones((1, 2, 2, 2)), Spacing::isotropic(1.0))
            .unwrap()
            .with_datatype(DataType::Uint16)
            .unwrap();
        save_volume(&v, &path, VolumeFormat::Nifti).unwrap();
        fs::remove_file(dir.path().join("lge.json")).unwrap();
        let back = load_volume(&path, VolumeFormat::Nifti).unwrap();
        assert_eq!(back.kind(), SequenceKind::SaxLge);
        assert_eq!(back.datatype(), DataType::Uint16);
    }

    #[test]
    fn unsupported_datatype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u8.nii");
        let v = CineVolume::new(SequenceKind::SaxCine, Array4::ones((1, 1, 2, 2)), Spacing::isotropic(1.0)).unwrap();
        save_volume(&v, &path, VolumeFormat::Nifti).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[70..72].copy_from_slice(&DT_UINT8.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_volume(&path, VolumeFormat::Nifti),
            Err(VolumeError::UnsupportedDatatype(DT_UINT8))
        ));
    }

    #[test]
    fn short_payload_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.nii");
        let v = CineVolume::new(SequenceKind::SaxCine, Array4::ones((2, 2, 2, 2)), Spacing::isotropic(1.0)).unwrap();
        save_volume(&v, &path, VolumeFormat::Nifti).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_volume(&path, VolumeFormat::Nifti), Err(VolumeError::PayloadSize { .. })));
    }

    #[test]
    fn scaling_is_applied() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scaled.nii");
        let v = CineVolume::new(SequenceKind::SaxLge, Array4::from_elem((1, 1, 1, 2), 3.0), Spacing::isotropic(1.0))
            .unwrap()
            .with_datatype(DataType::Int16)
            .unwrap();
        save_volume(&v, &path, VolumeFormat::Nifti).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&1.0f32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let back = load_volume(&path, VolumeFormat::Nifti).unwrap();
        assert!(back.data().iter().all(|&x| x == 7.0));
    }
}
