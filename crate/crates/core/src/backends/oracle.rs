//! Reference service: segmentation by decoding phantom intensity levels,
//! diagnosis by [`rule_diagnoser`] over quantified masks.

use super::diagnosis::{rule_diagnoser, DiagnosisResult, FeatureFlags, Stage};
use super::phantom::decode_labels;
use super::wire::{DiagnosisInput, InferRequest, InferResponse, StudyPayload};
use super::{BackendError, InferenceService};
use crate::aha17::{analyze_segments, SegmentAnalysis};
use crate::quantify::{detect_ed_es, quantify_study, MeasurementSet, StudyMasks};
use crate::tool::ToolId;
use crate::volume::{masks_to_volume, volume_to_masks, LabelMask, SequenceKind, Structure};
use std::path::PathBuf;

/// Measurements and segment bullseyes of one study.
#[derive(Debug, Clone)]
pub struct StudyFeatures {
    pub measurements: MeasurementSet,
    pub segments: SegmentAnalysis,
    pub ed_phase: usize,
}

/// Quantifies SAX (and optional 4CH) masks and analyses the ED SAX frame.
pub fn study_features(sax: &[LabelMask], ch4: &[LabelMask], lge: Option<&LabelMask>, heart_rate_bpm: Option<f64>) -> Result<StudyFeatures, BackendError> {
    let quant = |e: crate::quantify::QuantError| BackendError::MissingInput(format!("quantification failed: {e}"));
    let measurements = quantify_study(&StudyMasks {
        sax: sax.to_vec(),
        ch4: ch4.to_vec(),
        heart_rate_bpm,
        ..StudyMasks::default()
    })
    .map_err(quant)?;
    let first = sax.first().ok_or_else(|| BackendError::MissingInput("SAX masks".into()))?;
    let cav = first
        .label_of(Structure::LvCavity)
        .ok_or_else(|| BackendError::MissingInput("LV cavity label".into()))?;
    let ed_phase = if sax.len() >= 2 { detect_ed_es(sax, cav).map_err(quant)?.ed_phase } else { 0 };
    let segments = analyze_segments(&sax[ed_phase], lge, None).map_err(|e| BackendError::MissingInput(format!("segment analysis failed: {e}")))?;
    Ok(StudyFeatures {
        measurements,
        segments,
        ed_phase,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceService {
    /// Base directory for `desk_ref` payloads.
    pub root: Option<PathBuf>,
}

impl ReferenceService {
    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        ReferenceService { root: Some(root.into()) }
    }

    fn segment(&self, req: &InferRequest) -> Result<StudyPayload, BackendError> {
        let study = req
            .study
            .as_ref()
            .ok_or_else(|| BackendError::MissingInput("segmentation request without study".into()))?
            .resolve(self.root.as_deref())?;
        let want = req.task.segmentation_kind().expect("segmentation task");
        if study.kind() != want {
            return Err(BackendError::KindMismatch {
                task: req.task,
                expected: want,
                found: study.kind(),
            });
        }
        Ok(StudyPayload::inline(&masks_to_volume(&decode_labels(&study)?)?))
    }

    fn masks(&self, input: Option<&DiagnosisInput>, kind: SequenceKind) -> Result<(Vec<LabelMask>, Option<f64>), BackendError> {
        let input = input.ok_or_else(|| BackendError::MissingInput(format!("{} sequence", kind.display_name())))?;
        let base = self.root.as_deref();
        match &input.mask {
            Some(m) => {
                let hr = input.study.resolve(base)?.heart_rate_bpm();
                Ok((volume_to_masks(&m.resolve(base)?, None)?, hr))
            }
            None => {
                let study = input.study.resolve(base)?;
                Ok((decode_labels(&study)?, study.heart_rate_bpm()))
            }
        }
    }

    fn diagnose(&self, req: &InferRequest) -> Result<DiagnosisResult, BackendError> {
        let (sax, hr) = self.masks(req.input(SequenceKind::SaxCine), SequenceKind::SaxCine)?;
        let (ch4, _) = self.masks(req.input(SequenceKind::Ch4Cine), SequenceKind::Ch4Cine)?;
        let (stage, lge) = if req.task == ToolId::Cds {
            self.masks(req.input(SequenceKind::Ch2Cine), SequenceKind::Ch2Cine)?;
            (Stage::Screening, None)
        } else {
            let (lge, _) = self.masks(req.input(SequenceKind::SaxLge), SequenceKind::SaxLge)?;
            (Stage::Subtyping, lge.into_iter().next())
        };
        let f = study_features(&sax, &ch4, lge.as_ref(), hr)?;
        let flags: FeatureFlags = req.features;
        rule_diagnoser(stage, &f.measurements, &f.segments.thickness.mean, f.segments.lge.as_ref().map(|l| &l.bullseye), flags)
    }
}

impl InferenceService for ReferenceService {
    fn infer(&self, req: InferRequest) -> InferResponse {
        let out = match req.task {
            t if t.segmentation_kind().is_some() => self.segment(&req).map(|m| InferResponse::mask(&req.request_id, m)),
            ToolId::Cds | ToolId::Nicms => self.diagnose(&req).map(|d| InferResponse::diagnosis(&req.request_id, d)),
            t => Err(BackendError::Protocol(format!("{t} is not a backend task"))),
        };
        out.unwrap_or_else(|e| InferResponse::error(&req.request_id, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::phantom::{phantom_generate, PhantomSpec};
    use crate::backends::WireStatus;

    #[test]
    fn unknown_tasks_and_missing_inputs_are_reported() {
        let s = ReferenceService::default();
        let r = s.infer(InferRequest::new(ToolId::Rag));
        assert_eq!(r.status, WireStatus::Error);
        let r = s.infer(InferRequest::new(ToolId::Cds));
        assert!(r.message.unwrap().contains("SAX cine"));
    }

    #[test]
    fn features_match_phantom_analytics() {
        let p = phantom_generate(&PhantomSpec::normal()).unwrap();
        let f = study_features(&p.sax_masks, &p.ch4.as_ref().unwrap().1, None, Some(70.0)).unwrap();
        assert_eq!(f.ed_phase, p.ed_phase);
        let wall = f.segments.thickness.mean.max_wall().unwrap();
        assert!((wall - p.spec.wall_mm).abs() < 2.0, "{wall}");
    }
}
