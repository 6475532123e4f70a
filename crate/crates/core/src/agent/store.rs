//! Directory-per-session persistence.
//!
//! ```text
//! <root>/<session>/artifacts/<id>.json        JSON artifacts, desk headers
//! <root>/<session>/artifacts/<id>.raw         desk payloads
//! <root>/<session>/artifacts.jsonl            artifact log
//! <root>/<session>/transcript.jsonl           transcript records
//! ```
//!
//! Artifact files are written before the manifest line that names them, and
//! the manifest before the transcript that refers to them. Lines are only
//! ever appended.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::protocol::TranscriptRecord;
use super::session::{Artifact, ReportArtifact, SessionState};
use super::AgentError;
use crate::backends::knowledge::Snippet;
use crate::report::ArtifactId;
use crate::volume::{load_volume, masks_to_volume, save_volume, volume_to_masks, VolumeFormat};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestLine {
    id: ArtifactId,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<ArtifactId>,
}

#[derive(Serialize, Deserialize)]
struct SnippetsBody {
    query: String,
    snippets: Vec<Snippet>,
}

fn storage(context: &str, e: impl std::fmt::Display) -> AgentError {
    AgentError::Storage(format!("{context}: {e}"))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Where the last save left off, so the next save only appends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Watermark {
    pub log: usize,
    pub transcript: usize,
}

impl Watermark {
    pub fn of(session: &SessionState) -> Self {
        Watermark {
            log: session.log().len(),
            transcript: session.transcript().len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, AgentError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| storage(&root.display().to_string(), e))?;
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, AgentError> {
        if !valid_id(id) {
            return Err(AgentError::Storage(format!("invalid session id `{id}`")));
        }
        Ok(self.root.join(id))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).is_ok_and(|d| d.is_dir())
    }

    /// Creates an empty session directory.
    pub fn create(&self, id: &str) -> Result<SessionState, AgentError> {
        let dir = self.dir(id)?;
        if dir.exists() {
            return Err(AgentError::Storage(format!("session `{id}` already exists")));
        }
        fs::create_dir_all(dir.join("artifacts")).map_err(|e| storage(id, e))?;
        Ok(SessionState::new(id))
    }

    pub fn list(&self) -> Result<Vec<String>, AgentError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| storage("list", e))? {
            let entry = entry.map_err(|e| storage("list", e))?;
            if entry.path().is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Appends everything added to `session` since `since`.
    pub fn save(&self, session: &SessionState, since: Watermark) -> Result<Watermark, AgentError> {
        let dir = self.dir(&session.id)?;
        let adir = dir.join("artifacts");
        fs::create_dir_all(&adir).map_err(|e| storage(&session.id, e))?;
        let mut lines = String::new();
        for id in &session.log()[since.log..] {
            let a = session.artifact(id).expect("logged artifact exists");
            write_artifact(&adir, id, a)?;
            let source = match a {
                Artifact::Masks { source, .. } => Some(source.clone()),
                _ => None,
            };
            let line = ManifestLine {
                id: id.clone(),
                kind: a.type_name().to_string(),
                source,
            };
            lines.push_str(&serde_json::to_string(&line).expect("manifest serializes"));
            lines.push('\n');
        }
        append(&dir.join("artifacts.jsonl"), &lines)?;
        let mut lines = String::new();
        for r in &session.transcript()[since.transcript..] {
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        append(&dir.join("transcript.jsonl"), &lines)?;
        Ok(Watermark::of(session))
    }

    pub fn load(&self, id: &str) -> Result<SessionState, AgentError> {
        let dir = self.dir(id)?;
        if !dir.is_dir() {
            return Err(AgentError::Storage(format!("no session `{id}`")));
        }
        let mut session = SessionState::new(id);
        for line in read_lines(&dir.join("artifacts.jsonl"))? {
            let m: ManifestLine = serde_json::from_str(&line).map_err(|e| storage("artifacts.jsonl", e))?;
            let artifact = match session.artifact(&m.id) {
                Some(a) => a.clone(),
                None => read_artifact(&dir.join("artifacts"), &m)?,
            };
            let got = session.add_artifact(artifact);
            if got != m.id {
                return Err(AgentError::Storage(format!("artifact `{}` does not match its content ({got})", m.id)));
            }
        }
        for line in read_lines(&dir.join("transcript.jsonl"))? {
            let r: TranscriptRecord = serde_json::from_str(&line).map_err(|e| storage("transcript.jsonl", e))?;
            session.restore_record(r);
        }
        Ok(session)
    }
}

fn append(path: &Path, text: &str) -> Result<(), AgentError> {
    if text.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| storage(&path.display().to_string(), e))?;
    f.write_all(text.as_bytes()).map_err(|e| storage(&path.display().to_string(), e))?;
    f.sync_data().map_err(|e| storage(&path.display().to_string(), e))
}

fn read_lines(path: &Path) -> Result<Vec<String>, AgentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = fs::File::open(path).map_err(|e| storage(&path.display().to_string(), e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| storage(&path.display().to_string(), e))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

fn write_artifact(dir: &Path, id: &str, a: &Artifact) -> Result<(), AgentError> {
    let path = dir.join(format!("{id}.json"));
    if path.exists() {
        return Ok(());
    }
    let tmp = dir.join(format!(".{id}.tmp.json"));
    match a {
        Artifact::Study(v) => {
            save_volume(v, &path, VolumeFormat::Desk).map_err(|e| storage(id, e))?;
            return Ok(());
        }
        Artifact::Masks { masks, .. } => {
            let v = masks_to_volume(masks).map_err(|e| storage(id, e))?;
            save_volume(&v, &path, VolumeFormat::Desk).map_err(|e| storage(id, e))?;
            return Ok(());
        }
        _ => {
            let body = serde_json::to_vec_pretty(&a.json_body()).expect("artifact serializes");
            fs::write(&tmp, body).map_err(|e| storage(id, e))?;
        }
    }
    fs::rename(&tmp, &path).map_err(|e| storage(id, e))
}

fn read_artifact(dir: &Path, m: &ManifestLine) -> Result<Artifact, AgentError> {
    let path = dir.join(format!("{}.json", m.id));
    let json = || -> Result<serde_json::Value, AgentError> {
        let text = fs::read_to_string(&path).map_err(|e| storage(&m.id, e))?;
        serde_json::from_str(&text).map_err(|e| storage(&m.id, e))
    };
    let bad = |e: serde_json::Error| storage(&m.id, e);
    Ok(match m.kind.as_str() {
        "study" => Artifact::Study(load_volume(&path, VolumeFormat::Desk).map_err(|e| storage(&m.id, e))?),
        "mask" => {
            let v = load_volume(&path, VolumeFormat::Desk).map_err(|e| storage(&m.id, e))?;
            Artifact::Masks {
                source: m.source.clone().ok_or_else(|| AgentError::Storage(format!("mask `{}` without source", m.id)))?,
                masks: volume_to_masks(&v, None).map_err(|e| storage(&m.id, e))?,
            }
        }
        "quant" => Artifact::Measurements(serde_json::from_value(json()?).map_err(bad)?),
        "bullseye" => Artifact::Bullseye(serde_json::from_value(json()?).map_err(bad)?),
        "dx" => Artifact::Diagnosis(serde_json::from_value(json()?).map_err(bad)?),
        "rag" => {
            let b: SnippetsBody = serde_json::from_value(json()?).map_err(bad)?;
            Artifact::Snippets {
                query: b.query,
                snippets: b.snippets,
            }
        }
        "report" => Artifact::Report(serde_json::from_value::<ReportArtifact>(json()?).map_err(bad)?),
        other => return Err(AgentError::Storage(format!("unknown artifact type `{other}`"))),
    })
}
