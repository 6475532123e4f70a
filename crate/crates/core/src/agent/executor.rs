use std::sync::Arc;
use std::time::Instant;

use tracing::{debug, warn};

use super::planner::{Planner, PlannerRequest, ReferencePlanner};
use super::protocol::{Action, AgentMessage, Event, Payload, Role, ToolResult, ToolStatus, ToolUseCommand, TranscriptRecord};
use super::registry::Registry;
use super::session::{Artifact, ReportArtifact, SessionState};
use super::AgentError;
use crate::aha17::Quantity;
use crate::backends::knowledge::KnowledgeBase;
use crate::backends::oracle::study_features;
use crate::backends::{diagnose_stage1, diagnose_stage2, segment_via_backend, Backend, FeatureFlags, InProcessBackend, SequenceInput, Stage};
use crate::grounding::{unsupported_numbers, NumberSet};
use crate::quantify::Unit;
use crate::report::{assemble_report, render_report, ReportItem};
use crate::tool::ToolId;
use crate::volume::SequenceKind;

const DEFAULT_K: usize = 3;

/// Why a tool produced no payload.
struct Failure {
    status: ToolStatus,
    message: String,
}

fn error(message: impl Into<String>) -> Failure {
    Failure {
        status: ToolStatus::Error,
        message: message.into(),
    }
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        error(e.to_string())
    }
}

pub struct Agent {
    registry: Registry,
    planner: Box<dyn Planner>,
    /// Tried in order; a task goes to the first backend offering it.
    backends: Vec<Arc<dyn Backend>>,
    knowledge: Arc<KnowledgeBase>,
}

impl Agent {
    pub fn new(registry: Registry, planner: Box<dyn Planner>, backends: Vec<Arc<dyn Backend>>, knowledge: Arc<KnowledgeBase>) -> Self {
        Agent {
            registry,
            planner,
            backends,
            knowledge,
        }
    }

    /// Standard tools, rule-based planner, in-process reference backend and
    /// the bundled guideline corpus.
    pub fn reference() -> Self {
        Agent::new(
            Registry::standard(),
            Box::new(ReferencePlanner),
            vec![Arc::new(InProcessBackend::reference())],
            Arc::new(KnowledgeBase::builtin()),
        )
    }

    pub fn with_backends(mut self, backends: Vec<Arc<dyn Backend>>) -> Self {
        self.backends = backends;
        self
    }

    pub fn with_planner(mut self, planner: Box<dyn Planner>) -> Self {
        self.planner = planner;
        self
    }

    pub fn backends(&self) -> &[Arc<dyn Backend>] {
        &self.backends
    }

    fn backend(&self, task: ToolId) -> Result<&dyn Backend, Failure> {
        self.backends
            .iter()
            .find(|b| b.descriptor().offers(task))
            .map(|b| b.as_ref())
            .ok_or_else(|| error(format!("no configured backend offers {task}")))
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        &self.knowledge
    }

    pub fn plan(&self, instruction: &str, session: &SessionState) -> Result<ToolUseCommand, AgentError> {
        let request = PlannerRequest {
            instruction: instruction.to_string(),
            available_sequences: session.available_sequences(),
            artifact_summary: session.summaries(),
        };
        self.planner.plan(&request, &self.registry)
    }

    /// Runs the actions in order. The first error aborts the rest; a closed
    /// gate skips only its own action.
    pub fn execute_tools(&self, command: &ToolUseCommand, session: &mut SessionState) -> Result<Vec<ToolResult>, AgentError> {
        self.registry.validate(command)?;
        let mut results = Vec::with_capacity(command.actions.len());
        let mut failed: Option<ToolId> = None;
        for action in &command.actions {
            let tool = action.api_name;
            if let Some(f) = failed {
                results.push(ToolResult::failed(tool, ToolStatus::Aborted, format!("not run because {f} failed"), 0));
                continue;
            }
            let start = Instant::now();
            let outcome = self.run_tool(action, session);
            let ms = start.elapsed().as_millis() as u64;
            let result = match outcome {
                Ok(p) => ToolResult::ok(tool, p, ms),
                Err(f) => {
                    if f.status == ToolStatus::Error {
                        warn!(%tool, message = %f.message, "tool failed");
                        failed = Some(tool);
                    }
                    ToolResult::failed(tool, f.status, f.message, ms)
                }
            };
            debug!(%tool, status = ?result.status, ms, "tool finished");
            results.push(result);
        }
        Ok(results)
    }

    /// One dialogue turn: the user message, one command, its results and one
    /// answer are appended to the transcript. Returns the appended records.
    pub fn run_turn(&self, session: &mut SessionState, message: AgentMessage) -> Result<Vec<TranscriptRecord>, AgentError> {
        if message.role != Role::User || !message.is_valid() {
            return Err(AgentError::InvalidMessage("turns start with a user message".into()));
        }
        for r in &message.image_refs {
            if !matches!(session.artifact(r), Some(Artifact::Study(_))) {
                return Err(AgentError::InvalidMessage(format!("image reference `{r}` is not a study of this session")));
            }
        }
        let turn = session.next_turn();
        let first = session.transcript().len();
        let text = message.text.clone();
        session.push(turn, Event::User { message });
        let command = match self.plan(&text, session) {
            Ok(c) => c,
            Err(e) => {
                warn!(error = %e, "planning failed");
                ToolUseCommand {
                    thoughts: "Planning failed.".into(),
                    actions: Vec::new(),
                    value: format!("I could not plan this request: {e}."),
                }
            }
        };
        session.push(turn, Event::ToolUse { command: command.clone() });
        let results = self.execute_tools(&command, session)?;
        for result in &results {
            session.push(turn, Event::ToolResult { result: result.clone() });
        }
        let answer = synthesize(&command, &results);
        session.push(turn, Event::Answer { message: answer });
        Ok(session.transcript()[first..].to_vec())
    }

    fn run_tool(&self, action: &Action, session: &mut SessionState) -> Result<Payload, Failure> {
        let tool = action.api_name;
        if let Some(kind) = tool.segmentation_kind() {
            return self.segment(tool, kind, session);
        }
        match tool {
            ToolId::Quant => self.quantify(session),
            ToolId::Cds => self.screen(session),
            ToolId::Nicms => self.subtype(action, session),
            ToolId::Rag => self.retrieve(action, session),
            ToolId::Mrg => self.report(action, session),
            _ => unreachable!("segmentation tools handled above"),
        }
    }

    fn segment(&self, tool: ToolId, kind: SequenceKind, session: &mut SessionState) -> Result<Payload, Failure> {
        let (study, volume) = session
            .study(kind)
            .ok_or_else(|| error(format!("no {} study has been uploaded", kind.display_name())))?;
        let masks = segment_via_backend(volume, tool, self.backend(tool)?)?;
        let source = study.clone();
        let phases = masks.len();
        let artifact = session.add_artifact(Artifact::Masks { source, masks });
        Ok(Payload::Mask { artifact, kind, phases })
    }

    fn input<'a>(session: &'a SessionState, kind: SequenceKind) -> Result<SequenceInput<'a>, Failure> {
        let (_, volume) = session
            .study(kind)
            .ok_or_else(|| error(format!("no {} study has been uploaded", kind.display_name())))?;
        let (_, masks) = session.masks(kind).ok_or_else(|| {
            let seg = ToolId::segmentation_tool(kind).expect("segmentable kind");
            error(format!("{} masks are missing; run {seg} first", kind.display_name()))
        })?;
        Ok(SequenceInput { volume, masks })
    }

    fn quantify(&self, session: &mut SessionState) -> Result<Payload, Failure> {
        let sax = Self::input(session, SequenceKind::SaxCine)?;
        let ch4 = session.masks(SequenceKind::Ch4Cine).map_or(&[][..], |(_, m)| m);
        let lge = session.masks(SequenceKind::SaxLge).and_then(|(_, m)| m.first());
        let features = study_features(sax.masks, ch4, lge, sax.volume.heart_rate_bpm())?;
        let measurements = features.measurements;
        let thickness = session.add_artifact(Artifact::Bullseye(features.segments.thickness.mean));
        let lge = features.segments.lge.map(|l| session.add_artifact(Artifact::Bullseye(l.bullseye)));
        let artifact = session.add_artifact(Artifact::Measurements(measurements.clone()));
        Ok(Payload::Measurements {
            artifact,
            measurements,
            thickness,
            lge,
        })
    }

    fn screen(&self, session: &mut SessionState) -> Result<Payload, Failure> {
        let result = {
            let sax = Self::input(session, SequenceKind::SaxCine)?;
            let ch2 = Self::input(session, SequenceKind::Ch2Cine)?;
            let ch4 = Self::input(session, SequenceKind::Ch4Cine)?;
            diagnose_stage1(Some(sax), Some(ch2), Some(ch4), self.backend(ToolId::Cds)?)?
        };
        let artifact = session.add_artifact(Artifact::Diagnosis(result.clone()));
        Ok(Payload::Diagnosis { artifact, result })
    }

    fn subtype(&self, action: &Action, session: &mut SessionState) -> Result<Payload, Failure> {
        let override_gate = action.bool_param("override");
        let screening = session.diagnosis(Stage::Screening).map(|(_, d)| d.clone());
        if !override_gate {
            match &screening {
                None => return Err(error("subtyping needs a screening result of NICM; run CDS first or set override")),
                Some(d) if d.predicted != "NICM" => {
                    let message = format!("screening result is {}, not NICM", d.predicted);
                    return Err(if action.bool_param("in_pipeline") {
                        Failure {
                            status: ToolStatus::Skipped,
                            message,
                        }
                    } else {
                        error(message)
                    });
                }
                Some(_) => {}
            }
        }
        let flags = FeatureFlags {
            restrictive: action.bool_param("restrictive"),
            arrhythmogenic: action.bool_param("arrhythmogenic"),
        };
        let result = {
            let sax = Self::input(session, SequenceKind::SaxCine)?;
            let ch4 = Self::input(session, SequenceKind::Ch4Cine)?;
            let lge = Self::input(session, SequenceKind::SaxLge)?;
            diagnose_stage2(Some(sax), Some(ch4), Some(lge), screening.as_ref(), override_gate, flags, self.backend(ToolId::Nicms)?)?
        };
        let artifact = session.add_artifact(Artifact::Diagnosis(result.clone()));
        Ok(Payload::Diagnosis { artifact, result })
    }

    fn retrieve(&self, action: &Action, session: &mut SessionState) -> Result<Payload, Failure> {
        let query = action.str_param("query").unwrap_or_default().to_string();
        let k = action.uint_param("k").map_or(DEFAULT_K, |k| k as usize);
        let snippets = self.knowledge.retrieve(&query, k)?;
        let artifact = session.add_artifact(Artifact::Snippets {
            query,
            snippets: snippets.clone(),
        });
        Ok(Payload::Snippets { artifact, snippets })
    }

    fn report(&self, action: &Action, session: &mut SessionState) -> Result<Payload, Failure> {
        let template = action.str_param("template").unwrap_or("standard").to_string();
        let mut items = Vec::new();
        for kind in session.available_sequences() {
            let (id, v) = session.study(kind).expect("listed study exists");
            let [phases, slices, ..] = v.dims();
            items.push((
                id.clone(),
                ReportItem::Study {
                    kind,
                    phases,
                    slices,
                    heart_rate_bpm: v.heart_rate_bpm(),
                },
            ));
        }
        let (id, m) = session.measurements().ok_or_else(|| error("no measurements to report; run QUANT first"))?;
        items.push((id.clone(), ReportItem::Measurements(m.clone())));
        if let Some((id, b)) = session.bullseye(Quantity::Lvedwt) {
            items.push((id.clone(), ReportItem::WallThickness(b.clone())));
        }
        if let Some((id, b)) = session.bullseye(Quantity::LgeBurden) {
            items.push((id.clone(), ReportItem::LgeBurden(b.clone())));
        }
        for stage in [Stage::Screening, Stage::Subtyping] {
            if let Some((id, d)) = session.diagnosis(stage) {
                items.push((id.clone(), ReportItem::Diagnosis(d.clone())));
            }
        }
        let report = assemble_report(&items)?;
        let text = render_report(&report, &template)?;
        let artifact = session.add_artifact(Artifact::Report(ReportArtifact { report, text, template }));
        Ok(Payload::Report { artifact })
    }
}

fn measurement_text(value: f64, unit: Unit) -> String {
    match unit {
        Unit::Percent => format!("{value:.1}%"),
        Unit::LPerMin => format!("{value:.2} {}", unit.as_str()),
        u => format!("{value:.1} {}", u.as_str()),
    }
}

/// The answer for a turn, built only from the command and the tool results.
pub fn synthesize(command: &ToolUseCommand, results: &[ToolResult]) -> AgentMessage {
    if results.is_empty() {
        return AgentMessage::agent(command.value.clone());
    }
    let mut lines = Vec::new();
    for r in results {
        let tool = r.api_name;
        let reason = r.message.as_deref().unwrap_or("no reason given");
        let line = match (&r.status, &r.payload) {
            (ToolStatus::Ok, Some(p)) => match p {
                Payload::Mask { artifact, kind, phases } => {
                    format!("{tool}: segmented the {phases}-phase {} study; masks stored as {artifact}.", kind.display_name())
                }
                Payload::Measurements {
                    artifact,
                    measurements,
                    thickness,
                    lge,
                } => {
                    let values: Vec<String> = measurements
                        .iter()
                        .map(|(n, m)| format!("{n} {}", measurement_text(m.value, m.unit)))
                        .collect();
                    let lge = lge.as_ref().map(|l| format!(", LGE burden map {l}")).unwrap_or_default();
                    format!(
                        "{tool}: {}. Measurements stored as {artifact}; wall thickness map {thickness}{lge}.",
                        values.join(", ")
                    )
                }
                Payload::Diagnosis { artifact, result } => {
                    let what = match result.stage {
                        Stage::Screening => "screening result",
                        Stage::Subtyping => "cardiomyopathy subtype",
                    };
                    let p = result.probability(&result.predicted).unwrap_or(f64::NAN);
                    format!("{tool}: {what} {} (probability {p:.2}); stored as {artifact}.", result.predicted)
                }
                Payload::Snippets { artifact, snippets } => {
                    if snippets.is_empty() {
                        format!("{tool}: no guideline passage matched the query; stored as {artifact}.")
                    } else {
                        let titles: Vec<String> = snippets.iter().map(|s| format!("{} ({})", s.title, s.source)).collect();
                        format!("{tool}: relevant guidance from {}; stored as {artifact}.", titles.join("; "))
                    }
                }
                Payload::Report { artifact } => format!("{tool}: the report is stored as {artifact}."),
            },
            (ToolStatus::Ok, None) => format!("{tool}: completed without a result."),
            (ToolStatus::Error, _) => format!("{tool} failed: {reason}."),
            (ToolStatus::Aborted, _) => format!("{tool} was not run: {reason}."),
            (ToolStatus::Skipped, _) => format!("{tool} was skipped: {reason}."),
        };
        lines.push(line);
    }
    AgentMessage::agent(lines.join("\n"))
}

/// Numbers in `answer` that no tool result supports.
pub fn ungrounded_numbers(answer: &str, results: &[ToolResult]) -> Vec<String> {
    let mut set = NumberSet::default();
    set.add_json(&serde_json::to_value(results).expect("results serialize"));
    unsupported_numbers(answer, &set)
}
