//! Expert-model backends, reference oracles and the knowledge store.
//!
//! A [`Backend`] is the client side of a transport; an
//! [`InferenceService`] is the model logic behind it. The reference service
//! decodes phantom intensities and diagnoses with fixed threshold rules, so
//! the whole pipeline runs without trained networks.

pub mod diagnosis;
pub mod exchange;
pub mod knowledge;
pub mod oracle;
pub mod phantom;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use diagnosis::{rule_diagnoser, DiagnosisResult, FeatureFlags, Stage};
pub use exchange::{DirectoryExchange, ExchangeWorker};
pub use oracle::ReferenceService;
pub use wire::{DiagnosisInput, InferRequest, InferResponse, StudyPayload, WireStatus};

use crate::preprocess::CropSpec;
use crate::tool::ToolId;
use crate::volume::{masks_to_volume, volume_to_masks, CineVolume, LabelMask, SequenceKind, VolumeError};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("invalid backend descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("backend `{backend}` does not offer {task}")]
    Capability { backend: String, task: ToolId },
    #[error("{task} expects a {expected} volume, got {found}")]
    KindMismatch {
        task: ToolId,
        expected: SequenceKind,
        found: SequenceKind,
    },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("pipeline gate not satisfied: {0}")]
    Gate(String),
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend reported an error: {0}")]
    Remote(String),
    #[error("backend returned an invalid mask: {0}")]
    SchemaViolation(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// How a backend is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transport {
    /// Request/response files in a shared folder.
    DirectoryExchange { root: String },
    /// `POST <endpoint>/infer`.
    Http { endpoint: String },
    /// The reference service in the calling process.
    InProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub transport: Transport,
    pub capabilities: Vec<ToolId>,
    pub timeout_ms: u64,
    /// Send cine volumes through their crop pipeline before dispatch.
    #[serde(default)]
    pub apply_preprocessing: bool,
}

impl BackendDescriptor {
    pub fn new(name: impl Into<String>, transport: Transport, capabilities: Vec<ToolId>) -> Self {
        BackendDescriptor {
            name: name.into(),
            transport,
            capabilities,
            timeout_ms: 30_000,
            apply_preprocessing: false,
        }
    }

    /// All six backend tasks.
    pub fn full(name: impl Into<String>, transport: Transport) -> Self {
        let caps = ToolId::ALL.into_iter().filter(|t| t.is_backend_task()).collect();
        BackendDescriptor::new(name, transport, caps)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidDescriptor("timeout must be positive".into()));
        }
        if let Some(t) = self.capabilities.iter().find(|t| !t.is_backend_task()) {
            return Err(BackendError::InvalidDescriptor(format!("{t} is not a backend task")));
        }
        Ok(())
    }

    pub fn offers(&self, task: ToolId) -> bool {
        self.capabilities.contains(&task)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Model logic answering inference requests.
pub trait InferenceService: Send + Sync {
    fn infer(&self, request: InferRequest) -> InferResponse;
}

/// Client side of a transport.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;
    fn call(&self, request: &InferRequest) -> Result<InferResponse, BackendError>;
}

/// Calls a service directly.
pub struct InProcessBackend {
    descriptor: BackendDescriptor,
    service: Arc<dyn InferenceService>,
}

impl InProcessBackend {
    pub fn new(descriptor: BackendDescriptor, service: Arc<dyn InferenceService>) -> Result<Self, BackendError> {
        descriptor.validate()?;
        Ok(InProcessBackend { descriptor, service })
    }

    /// The reference service with every capability.
    pub fn reference() -> Self {
        InProcessBackend::new(BackendDescriptor::full("reference", Transport::InProcess), Arc::new(ReferenceService::default()))
            .expect("reference descriptor is valid")
    }
}

impl Backend for InProcessBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn call(&self, request: &InferRequest) -> Result<InferResponse, BackendError> {
        Ok(self.service.infer(request.clone()))
    }
}

fn check_capability(backend: &dyn Backend, task: ToolId) -> Result<(), BackendError> {
    if backend.descriptor().offers(task) {
        Ok(())
    } else {
        Err(BackendError::Capability {
            backend: backend.descriptor().name.clone(),
            task,
        })
    }
}

fn dispatch(backend: &dyn Backend, request: &InferRequest) -> Result<InferResponse, BackendError> {
    let resp = backend.call(request)?;
    if resp.request_id != request.request_id {
        return Err(BackendError::Protocol(format!("response id {} for request {}", resp.request_id, request.request_id)));
    }
    match resp.status {
        WireStatus::Ok => Ok(resp),
        WireStatus::Error => Err(BackendError::Remote(resp.message.unwrap_or_else(|| "unspecified".into()))),
    }
}

/// Segments every phase of `volume` with `task`. The returned masks are
/// checked against the label schema and the volume's shape.
pub fn segment_via_backend(volume: &CineVolume, task: ToolId, backend: &dyn Backend) -> Result<Vec<LabelMask>, BackendError> {
    check_capability(backend, task)?;
    let expected = task
        .segmentation_kind()
        .ok_or_else(|| BackendError::Protocol(format!("{task} is not a segmentation task")))?;
    if volume.kind() != expected {
        return Err(BackendError::KindMismatch {
            task,
            expected,
            found: volume.kind(),
        });
    }
    let mut req = InferRequest::new(task);
    req.study = Some(StudyPayload::inline(volume));
    req.preprocessing = backend.descriptor().apply_preprocessing.then(|| CropSpec::for_kind(expected));
    let resp = dispatch(backend, &req)?;
    let payload = resp
        .mask_ref
        .ok_or_else(|| BackendError::Protocol("segmentation response without mask".into()))?;
    let labels = payload.resolve(None)?;
    if labels.dims() != volume.dims() {
        return Err(BackendError::SchemaViolation(format!("mask dims {:?}, volume dims {:?}", labels.dims(), volume.dims())));
    }
    if labels.kind() != expected {
        return Err(BackendError::SchemaViolation(format!("mask kind {}, expected {expected}", labels.kind())));
    }
    volume_to_masks(&labels, None).map_err(|e| BackendError::SchemaViolation(e.to_string()))
}

/// A cine (or LGE) volume with its per-phase masks.
#[derive(Debug, Clone, Copy)]
pub struct SequenceInput<'a> {
    pub volume: &'a CineVolume,
    pub masks: &'a [LabelMask],
}

fn diagnosis_input(kind: SequenceKind, input: Option<SequenceInput<'_>>) -> Result<DiagnosisInput, BackendError> {
    let input = input.ok_or_else(|| BackendError::MissingInput(format!("{} sequence", kind.display_name())))?;
    if input.volume.kind() != kind {
        return Err(BackendError::MissingInput(format!(
            "{} sequence (got {})",
            kind.display_name(),
            input.volume.kind().display_name()
        )));
    }
    let mask = if input.masks.is_empty() {
        None
    } else {
        Some(StudyPayload::inline(&masks_to_volume(input.masks)?))
    };
    Ok(DiagnosisInput {
        kind,
        study: StudyPayload::inline(input.volume),
        mask,
        crop: Some(CropSpec::for_kind(kind)),
    })
}

fn preprocessed(input: DiagnosisInput, apply: bool) -> Result<DiagnosisInput, BackendError> {
    let (true, Some(crop), Some(mask)) = (apply, input.crop, input.mask.as_ref()) else {
        return Ok(input);
    };
    let volume = input.study.resolve(None)?;
    let masks = volume_to_masks(&mask.resolve(None)?, None)?;
    let target = volume.spacing();
    let out = crop
        .pipeline(target)
        .run(&volume, masks.first())
        .map_err(|e| BackendError::Protocol(format!("preprocessing failed: {e}")))?;
    Ok(DiagnosisInput {
        study: StudyPayload::inline(&out.volume),
        ..input
    })
}

fn diagnose(task: ToolId, inputs: Vec<DiagnosisInput>, flags: FeatureFlags, backend: &dyn Backend) -> Result<DiagnosisResult, BackendError> {
    check_capability(backend, task)?;
    let apply = backend.descriptor().apply_preprocessing;
    let mut req = InferRequest::new(task);
    req.inputs = inputs.into_iter().map(|i| preprocessed(i, apply)).collect::<Result<_, _>>()?;
    req.features = flags;
    let resp = dispatch(backend, &req)?;
    let d = resp
        .diagnosis
        .ok_or_else(|| BackendError::Protocol("diagnosis response without result".into()))?;
    let want = if task == ToolId::Cds { Stage::Screening } else { Stage::Subtyping };
    if d.stage != want {
        return Err(BackendError::Protocol(format!("{task} answered with stage {}", d.stage.number())));
    }
    Ok(d)
}

/// NH / IHD / NICM screening from SAX, 2CH and 4CH cines with masks.
pub fn diagnose_stage1(
    sax: Option<SequenceInput<'_>>,
    ch2: Option<SequenceInput<'_>>,
    ch4: Option<SequenceInput<'_>>,
    backend: &dyn Backend,
) -> Result<DiagnosisResult, BackendError> {
    let inputs = vec![
        diagnosis_input(SequenceKind::SaxCine, sax)?,
        diagnosis_input(SequenceKind::Ch2Cine, ch2)?,
        diagnosis_input(SequenceKind::Ch4Cine, ch4)?,
    ];
    diagnose(ToolId::Cds, inputs, FeatureFlags::default(), backend)
}

/// NICM subtyping from SAX and 4CH cines plus LGE. Runs only after a
/// screening result of NICM unless `override_gate` is set.
pub fn diagnose_stage2(
    sax: Option<SequenceInput<'_>>,
    ch4: Option<SequenceInput<'_>>,
    lge: Option<SequenceInput<'_>>,
    screening: Option<&DiagnosisResult>,
    override_gate: bool,
    flags: FeatureFlags,
    backend: &dyn Backend,
) -> Result<DiagnosisResult, BackendError> {
    if !override_gate {
        match screening {
            Some(d) if d.stage == Stage::Screening && d.predicted == "NICM" => {}
            Some(d) => return Err(BackendError::Gate(format!("screening predicted {}, not NICM", d.predicted))),
            None => return Err(BackendError::Gate("no screening result".into())),
        }
    }
    let inputs = vec![
        diagnosis_input(SequenceKind::SaxCine, sax)?,
        diagnosis_input(SequenceKind::Ch4Cine, ch4)?,
        diagnosis_input(SequenceKind::SaxLge, lge)?,
    ];
    diagnose(ToolId::Nicms, inputs, flags, backend)
}
