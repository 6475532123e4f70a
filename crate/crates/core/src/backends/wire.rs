//! Request and response documents shared by every backend transport.

use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::diagnosis::{DiagnosisResult, FeatureFlags};
use super::BackendError;
use crate::preprocess::CropSpec;
use crate::tool::ToolId;
use crate::volume::{load_volume, save_volume, CineVolume, DeskHeader, SequenceKind, VolumeFormat};

const B64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

/// A desk-format volume, either embedded or referenced by header path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StudyPayload {
    Inline { header: DeskHeader, data_b64: String },
    /// Header path, relative paths resolved against the exchange root.
    DeskRef { path: String },
}

impl StudyPayload {
    pub fn inline(volume: &CineVolume) -> Self {
        StudyPayload::Inline {
            header: DeskHeader::for_volume(volume, "inline"),
            data_b64: B64.encode(volume.payload_bytes()),
        }
    }

    /// Saves `volume` as `<stem>.json` + `<stem>.raw` in `dir` and refers
    /// to it by file name.
    pub fn write_ref(volume: &CineVolume, dir: &Path, stem: &str) -> Result<Self, BackendError> {
        let name = format!("{stem}.json");
        save_volume(volume, dir.join(&name), VolumeFormat::Desk)?;
        Ok(StudyPayload::DeskRef { path: name })
    }

    pub fn resolve(&self, base: Option<&Path>) -> Result<CineVolume, BackendError> {
        match self {
            StudyPayload::Inline { header, data_b64 } => {
                let bytes = B64
                    .decode(data_b64)
                    .map_err(|e| BackendError::Protocol(format!("payload is not base64: {e}")))?;
                Ok(header.decode(&bytes)?)
            }
            StudyPayload::DeskRef { path } => {
                let p = Path::new(path);
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                Ok(load_volume(full, VolumeFormat::Desk)?)
            }
        }
    }

    /// Inline copy of a referenced payload.
    pub fn embedded(&self, base: Option<&Path>) -> Result<Self, BackendError> {
        match self {
            StudyPayload::Inline { .. } => Ok(self.clone()),
            StudyPayload::DeskRef { .. } => Ok(StudyPayload::inline(&self.resolve(base)?)),
        }
    }

    /// Header path of a referenced payload.
    pub fn ref_path(&self) -> Option<&str> {
        match self {
            StudyPayload::DeskRef { path } => Some(path),
            StudyPayload::Inline { .. } => None,
        }
    }
}

/// One input sequence of a diagnosis request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisInput {
    pub kind: SequenceKind,
    pub study: StudyPayload,
    /// Per-phase label volume (uint8).
    pub mask: Option<StudyPayload>,
    pub crop: Option<CropSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRequest {
    pub request_id: String,
    pub task: ToolId,
    /// Volume to segment.
    #[serde(default)]
    pub study: Option<StudyPayload>,
    /// Sequences of a diagnosis request.
    #[serde(default)]
    pub inputs: Vec<DiagnosisInput>,
    #[serde(default)]
    pub preprocessing: Option<CropSpec>,
    #[serde(default)]
    pub features: FeatureFlags,
}

impl InferRequest {
    pub fn new(task: ToolId) -> Self {
        InferRequest {
            request_id: uuid::Uuid::new_v4().to_string(),
            task,
            study: None,
            inputs: Vec::new(),
            preprocessing: None,
            features: FeatureFlags::default(),
        }
    }

    pub fn input(&self, kind: SequenceKind) -> Option<&DiagnosisInput> {
        self.inputs.iter().find(|i| i.kind == kind)
    }

    /// Every payload of the request, study first.
    pub fn payloads_mut(&mut self) -> Vec<&mut StudyPayload> {
        let mut out: Vec<&mut StudyPayload> = self.study.iter_mut().collect();
        for i in self.inputs.iter_mut() {
            out.push(&mut i.study);
            if let Some(m) = i.mask.as_mut() {
                out.push(m);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub request_id: String,
    pub status: WireStatus,
    /// Per-phase label volume of a segmentation task.
    #[serde(default)]
    pub mask_ref: Option<StudyPayload>,
    /// Result of a diagnosis task.
    #[serde(default)]
    pub diagnosis: Option<DiagnosisResult>,
    #[serde(default)]
    pub message: Option<String>,
}

impl InferResponse {
    pub fn error(request_id: &str, message: impl Into<String>) -> Self {
        InferResponse {
            request_id: request_id.to_string(),
            status: WireStatus::Error,
            mask_ref: None,
            diagnosis: None,
            message: Some(message.into()),
        }
    }

    pub fn mask(request_id: &str, mask: StudyPayload) -> Self {
        InferResponse {
            request_id: request_id.to_string(),
            status: WireStatus::Ok,
            mask_ref: Some(mask),
            diagnosis: None,
            message: None,
        }
    }

    pub fn diagnosis(request_id: &str, d: DiagnosisResult) -> Self {
        InferResponse {
            request_id: request_id.to_string(),
            status: WireStatus::Ok,
            mask_ref: None,
            diagnosis: Some(d),
            message: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;
    use ndarray::Array4;

    #[test]
    fn inline_and_ref_payloads_resolve_identically() {
        let v = CineVolume::new(
            SequenceKind::SaxCine,
            Array4::from_shape_fn((2, 2, 3, 4), |(p, z, y, x)| (p + z * 2 + y * 3 + x) as f32 * 0.5),
            Spacing::new(8.0, 1.5, 1.5),
        )
        .unwrap()
        .with_heart_rate(Some(61.0));
        let inline = StudyPayload::inline(&v);
        assert_eq!(inline.resolve(None).unwrap(), v);
        let dir = tempfile::tempdir().unwrap();
        let r = StudyPayload::write_ref(&v, dir.path(), "s0").unwrap();
        assert_eq!(r.ref_path(), Some("s0.json"));
        assert_eq!(r.resolve(Some(dir.path())).unwrap(), v);
        assert_eq!(r.embedded(Some(dir.path())).unwrap(), inline);
    }

    #[test]
    fn request_json_round_trip() {
        let mut r = InferRequest::new(ToolId::Cds);
        r.preprocessing = Some(CropSpec::for_kind(SequenceKind::SaxCine));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"task\":\"CDS\""));
        assert_eq!(serde_json::from_str::<InferRequest>(&json).unwrap(), r);
        let resp = InferResponse::error("x", "boom");
        let back: InferResponse = serde_json::from_str(&serde_json::to_string(&resp).unwrap()).unwrap();
        assert_eq!(back, resp);
    }

    #[test]
    fn bad_base64_is_a_protocol_error() {
        let v = CineVolume::new(SequenceKind::SaxLge, Array4::zeros((1, 1, 1, 1)), Spacing::isotropic(1.0)).unwrap();
        let StudyPayload::Inline { header, .. } = StudyPayload::inline(&v) else { unreachable!() };
        let bad = StudyPayload::Inline {
            header,
            data_b64: "***".into(),
        };
        assert!(matches!(bad.resolve(None), Err(BackendError::Protocol(_))));
    }
}
