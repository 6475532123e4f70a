use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::protocol::{Event, TranscriptRecord};
use crate::aha17::{Bullseye17, Quantity};
use crate::backends::knowledge::Snippet;
use crate::backends::{DiagnosisResult, Stage};
use crate::quantify::MeasurementSet;
use crate::report::{ArtifactId, StructuredReport};
use crate::volume::{masks_to_volume, validate_sequence, CineVolume, DeskHeader, LabelMask, SequenceKind, VolumeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub report: StructuredReport,
    pub text: String,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Study(CineVolume),
    /// Per-phase masks of the study artifact `source`.
    Masks { source: ArtifactId, masks: Vec<LabelMask> },
    Measurements(MeasurementSet),
    Bullseye(Bullseye17),
    Diagnosis(DiagnosisResult),
    Snippets { query: String, snippets: Vec<Snippet> },
    Report(ReportArtifact),
}

fn digest_volume(h: &mut Sha256, v: &CineVolume) {
    let header = serde_json::to_vec(&DeskHeader::for_volume(v, "")).expect("header serializes");
    h.update(&header);
    h.update(v.payload_bytes());
}

impl Artifact {
    pub fn type_name(&self) -> &'static str {
        match self {
            Artifact::Study(_) => "study",
            Artifact::Masks { .. } => "mask",
            Artifact::Measurements(_) => "quant",
            Artifact::Bullseye(_) => "bullseye",
            Artifact::Diagnosis(_) => "dx",
            Artifact::Snippets { .. } => "rag",
            Artifact::Report(_) => "report",
        }
    }

    /// JSON body of a non-volume artifact.
    pub fn json_body(&self) -> Option<serde_json::Value> {
        let v = match self {
            Artifact::Study(_) | Artifact::Masks { .. } => return None,
            Artifact::Measurements(m) => serde_json::to_value(m),
            Artifact::Bullseye(b) => serde_json::to_value(b),
            Artifact::Diagnosis(d) => serde_json::to_value(d),
            Artifact::Snippets { query, snippets } => serde_json::to_value(serde_json::json!({"query": query, "snippets": snippets})),
            Artifact::Report(r) => serde_json::to_value(r),
        };
        Some(v.expect("artifact serializes"))
    }

    /// `<type>-<first 16 hex digits of the content's SHA-256>`.
    pub fn content_id(&self) -> ArtifactId {
        let mut h = Sha256::new();
        h.update(self.type_name().as_bytes());
        match self {
            Artifact::Study(v) => digest_volume(&mut h, v),
            Artifact::Masks { source, masks } => {
                h.update(source.as_bytes());
                digest_volume(&mut h, &masks_to_volume(masks).expect("stored masks are consistent"));
            }
            _ => h.update(serde_json::to_vec(&self.json_body()).expect("artifact serializes")),
        }
        let hex = hex::encode(h.finalize());
        format!("{}-{}", self.type_name(), &hex[..16])
    }

    /// One-line description for planners.
    pub fn summary(&self) -> String {
        match self {
            Artifact::Study(v) => format!("study {}", v.kind()),
            Artifact::Masks { masks, .. } => format!("masks {}", masks.first().map_or("?", |m| m.kind().as_str())),
            Artifact::Measurements(_) => "measurements".into(),
            Artifact::Bullseye(b) => format!("bullseye {}", serde_json::to_value(b.quantity).unwrap().as_str().unwrap()),
            Artifact::Diagnosis(d) => format!("diagnosis stage {} {}", d.stage.number(), d.predicted),
            Artifact::Snippets { .. } => "guideline snippets".into(),
            Artifact::Report(_) => "report".into(),
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Studies, artifacts and the transcript of one dialogue.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub id: String,
    artifacts: BTreeMap<ArtifactId, Artifact>,
    /// Append-only artifact log; an id recurs when identical content is
    /// produced again, which makes it the latest of its kind.
    log: Vec<ArtifactId>,
    studies: BTreeMap<SequenceKind, ArtifactId>,
    transcript: Vec<TranscriptRecord>,
}

impl SessionState {
    pub fn new(id: impl Into<String>) -> Self {
        SessionState {
            id: id.into(),
            artifacts: BTreeMap::new(),
            log: Vec::new(),
            studies: BTreeMap::new(),
            transcript: Vec::new(),
        }
    }

    /// Validates `volume` against its declared kind and stores it as the
    /// session's study of that kind.
    pub fn add_study(&mut self, volume: CineVolume) -> Result<ArtifactId, VolumeError> {
        validate_sequence(&volume, volume.kind())?;
        Ok(self.add_artifact(Artifact::Study(volume)))
    }

    pub fn add_artifact(&mut self, a: Artifact) -> ArtifactId {
        let id = a.content_id();
        if let Artifact::Study(v) = &a {
            self.studies.insert(v.kind(), id.clone());
        }
        self.artifacts.entry(id.clone()).or_insert(a);
        self.log.push(id.clone());
        id
    }

    pub fn artifact(&self, id: &str) -> Option<&Artifact> {
        self.artifacts.get(id)
    }

    pub fn log(&self) -> &[ArtifactId] {
        &self.log
    }

    pub fn artifacts(&self) -> impl Iterator<Item = (&ArtifactId, &Artifact)> {
        self.artifacts.iter()
    }

    /// Most recently logged artifact matching `pred`.
    pub fn latest(&self, pred: impl Fn(&Artifact) -> bool) -> Option<(&ArtifactId, &Artifact)> {
        self.log.iter().rev().find_map(|id| {
            let a = &self.artifacts[id];
            pred(a).then_some((id, a))
        })
    }

    pub fn available_sequences(&self) -> Vec<SequenceKind> {
        self.studies.keys().copied().collect()
    }

    pub fn study(&self, kind: SequenceKind) -> Option<(&ArtifactId, &CineVolume)> {
        let id = self.studies.get(&kind)?;
        match &self.artifacts[id] {
            Artifact::Study(v) => Some((id, v)),
            _ => None,
        }
    }

    /// Masks of the current study of `kind`.
    pub fn masks(&self, kind: SequenceKind) -> Option<(&ArtifactId, &[LabelMask])> {
        let study = self.studies.get(&kind)?;
        self.latest(|a| matches!(a, Artifact::Masks { source, .. } if source == study))
            .map(|(id, a)| match a {
                Artifact::Masks { masks, .. } => (id, masks.as_slice()),
                _ => unreachable!(),
            })
    }

    pub fn measurements(&self) -> Option<(&ArtifactId, &MeasurementSet)> {
        self.latest(|a| matches!(a, Artifact::Measurements(_))).map(|(id, a)| match a {
            Artifact::Measurements(m) => (id, m),
            _ => unreachable!(),
        })
    }

    pub fn bullseye(&self, q: Quantity) -> Option<(&ArtifactId, &Bullseye17)> {
        self.latest(|a| matches!(a, Artifact::Bullseye(b) if b.quantity == q)).map(|(id, a)| match a {
            Artifact::Bullseye(b) => (id, b),
            _ => unreachable!(),
        })
    }

    pub fn diagnosis(&self, stage: Stage) -> Option<(&ArtifactId, &DiagnosisResult)> {
        self.latest(|a| matches!(a, Artifact::Diagnosis(d) if d.stage == stage)).map(|(id, a)| match a {
            Artifact::Diagnosis(d) => (id, d),
            _ => unreachable!(),
        })
    }

    pub fn report(&self, id: &str) -> Option<&ReportArtifact> {
        match self.artifacts.get(id)? {
            Artifact::Report(r) => Some(r),
            _ => None,
        }
    }

    pub fn summaries(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        self.log
            .iter()
            .filter(|id| seen.insert(*id))
            .map(|id| format!("{id}: {}", self.artifacts[id].summary()))
            .collect()
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        &self.transcript
    }

    pub fn next_turn(&self) -> u64 {
        self.transcript.last().map_or(0, |r| r.turn + 1)
    }

    pub fn push(&mut self, turn: u64, event: Event) -> &TranscriptRecord {
        let seq = self.transcript.len() as u64;
        self.transcript.push(TranscriptRecord {
            seq,
            turn,
            at_ms: now_ms(),
            event,
        });
        self.transcript.last().unwrap()
    }

    /// Restores a persisted record verbatim.
    pub(crate) fn restore_record(&mut self, r: TranscriptRecord) {
        self.transcript.push(r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::phantom::{phantom_generate, PhantomSpec};

    #[test]
    fn ids_are_content_addressed_and_latest_wins() {
        let p = phantom_generate(&PhantomSpec::annulus(10.0, 4.0)).unwrap();
        let mut s = SessionState::new("s");
        let a = s.add_study(p.sax.clone()).unwrap();
        assert!(a.starts_with("study-"));
        assert_eq!(s.add_study(p.sax.clone()).unwrap(), a);
        assert_eq!(s.log().len(), 2);
        let m1 = s.add_artifact(Artifact::Masks {
            source: a.clone(),
            masks: p.sax_masks.clone(),
        });
        assert_eq!(s.masks(SequenceKind::SaxCine).unwrap().0, &m1);
        let mut ms = MeasurementSet::new();
        let q1 = s.add_artifact(Artifact::Measurements(ms.clone()));
        ms.insert(crate::quantify::ParamName::Lvef, 1.0, crate::quantify::Source::Sax, crate::quantify::PhaseTag::Static, vec![]);
        let q2 = s.add_artifact(Artifact::Measurements(ms));
        assert_ne!(q1, q2);
        assert_eq!(s.measurements().unwrap().0, &q2);
        s.add_artifact(Artifact::Measurements(MeasurementSet::new()));
        assert_eq!(s.measurements().unwrap().0, &q1);
    }

    #[test]
    fn invalid_study_is_refused() {
        let p = phantom_generate(&PhantomSpec::annulus(10.0, 4.0)).unwrap();
        let mut lge = p.sax.clone();
        lge.set_kind(SequenceKind::SaxLge);
        let mut s = SessionState::new("s");
        let err = s.add_study(lge).unwrap_err();
        assert!(err.to_string().contains("single-phase"), "{err}");
        assert!(s.available_sequences().is_empty());
    }
}
