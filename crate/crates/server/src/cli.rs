//! Command-line front end.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cardiac_core::aha17::{analyze_segments, BullseyeDocument};
use cardiac_core::agent::{AgentMessage, Event, SessionStore, Watermark};
use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};
use cardiac_core::backends::{ExchangeWorker, ReferenceService};
use cardiac_core::metrics::{evaluate_case, mean_sd, roc_auc, BootstrapConfig, ConfusionMatrix};
use cardiac_core::preprocess::{CropSpec, Interpolation, PreprocessSpec, Step};
use cardiac_core::quantify::{quantify_study, StudyMasks};
use cardiac_core::report::{score_report, ReferenceFindings, StructuredReport};
use cardiac_core::volume::{load_volume, save_volume, volume_to_masks, CineVolume, LabelMask, SequenceKind, Spacing, VolumeFormat};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::api::{self, AppState};
use crate::config::ServiceConfig;
use crate::remote::infer_router;
use crate::ServiceError;

#[derive(Debug, Parser)]
#[command(name = "cardiac", version, about = "Cardiac MRI quantification, evaluation and agent service")]
pub struct Cli {
    /// TOML service configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for phantoms and bootstrap resampling; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Session store directory; overrides the config.
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure cardiac parameters from segmentation masks.
    Quantify(QuantifyArgs),
    /// Dice, Hausdorff and average surface distance between label volumes.
    SegEval(SegEvalArgs),
    /// Confusion matrix, per-class metrics and AUC from scored predictions.
    ClsEval(ClsEvalArgs),
    /// 17-segment wall thickness or LGE bullseye of a SAX mask.
    Bullseye(BullseyeArgs),
    /// Write a synthetic study with its masks and analytic measurements.
    Phantom(PhantomArgs),
    /// Interactive dialogue with the agent on a stored session.
    AgentRepl(ReplArgs),
    /// Score a structured report against reference findings.
    ReportScore(ReportScoreArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Apply preprocessing transforms to a volume.
    Preprocess(PreprocessArgs),
    /// Answer inference requests dropped in an exchange directory.
    Worker(WorkerArgs),
    /// Serve the reference inference backend over HTTP.
    BackendServe(BackendServeArgs),
}

#[derive(Debug, Args)]
pub struct QuantifyArgs {
    /// SAX cine label volume, one phase per frame.
    #[arg(long)]
    pub sax: Option<PathBuf>,
    /// 4-chamber cine label volume.
    #[arg(long)]
    pub ch4: Option<PathBuf>,
    #[arg(long)]
    pub heart_rate: Option<f64>,
    /// Print the measurement JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SegEvalArgs {
    #[arg(long, requires = "gt", conflicts_with = "manifest")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    /// JSON lines `{case_id, pred, gt, label?}`; paths relative to the manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub label: u8,
    /// Phase compared in multi-phase volumes.
    #[arg(long, default_value_t = 0)]
    pub phase: usize,
    #[arg(long, default_value = "case")]
    pub case_id: String,
}

#[derive(Debug, Args)]
pub struct ClsEvalArgs {
    /// JSON lines `{truth, probabilities: {class: p}}`.
    pub input: PathBuf,
    /// Class order; sorted class names when absent.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BullseyeQuantity {
    Thickness,
    Lge,
}

#[derive(Debug, Args)]
pub struct BullseyeArgs {
    /// End-diastolic SAX cine mask.
    #[arg(long, required_unless_present = "document")]
    pub mask: Option<PathBuf>,
    /// Phase of `--mask` used as end diastole.
    #[arg(long, default_value_t = 0)]
    pub phase: usize,
    /// LGE mask; required for `--quantity lge`.
    #[arg(long)]
    pub lge: Option<PathBuf>,
    /// Anterior RV insertion angle in degrees when the mask has no RV.
    #[arg(long)]
    pub landmark_deg: Option<f64>,
    #[arg(long, value_enum, default_value = "thickness")]
    pub quantity: BullseyeQuantity,
    /// Use per-segment maxima instead of means for thickness.
    #[arg(long)]
    pub max: bool,
    /// Render an existing bullseye document instead.
    #[arg(long, conflicts_with = "mask")]
    pub document: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON PhantomSpec; the normal heart when absent.
    #[arg(long, conflicts_with = "random")]
    pub spec: Option<PathBuf>,
    /// Randomized geometry drawn from `--seed`.
    #[arg(long)]
    pub random: bool,
}

#[derive(Debug, Args)]
pub struct ReplArgs {
    /// Existing session to resume; a new one is created when absent.
    #[arg(long)]
    pub session: Option<String>,
    /// Upload a study before the first prompt, as `path` (kind from its header).
    #[arg(long)]
    pub upload: Vec<PathBuf>,
    /// Upload every view of a normal phantom drawn from `--seed`.
    #[arg(long)]
    pub phantom: bool,
}

#[derive(Debug, Args)]
pub struct ReportScoreArgs {
    /// StructuredReport JSON.
    #[arg(long)]
    pub report: PathBuf,
    /// ReferenceFindings JSON.
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; overrides the config.
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// JSON pipeline; the flags below build one when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Standard diagnosis pipeline of the input's sequence kind.
    #[arg(long, conflicts_with = "spec")]
    pub standard: bool,
    /// Single-frame mask locating the ROI.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub phase_keep: Option<usize>,
    /// Target spacing `z,y,x` in mm.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub spacing: Option<Vec<f64>>,
    #[arg(long)]
    pub nearest: bool,
    /// ROI size `h,w`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub roi: Option<Vec<usize>>,
    #[arg(long)]
    pub normalize: bool,
    /// Final `d,h,w` after centred crop or zero pad.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub dims: Option<Vec<usize>>,
    /// Also write the pipeline JSON here.
    #[arg(long)]
    pub emit_spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub interval_ms: u64,
    /// Serve what is pending and exit.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Args)]
pub struct BackendServeArgs {
    #[arg(long, default_value = "127.0.0.1:8081")]
    pub listen: String,
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Input(format!("{}: {e}", path.display()))
}

fn read_volume(path: &Path) -> Result<CineVolume, ServiceError> {
    load_volume(path, VolumeFormat::from_path(path)).map_err(|e| input_err(path, e))
}

fn read_masks(path: &Path) -> Result<Vec<LabelMask>, ServiceError> {
    let v = read_volume(path)?;
    volume_to_masks(&v, None).map_err(|e| input_err(path, e))
}

fn read_phase(path: &Path, phase: usize) -> Result<LabelMask, ServiceError> {
    let mut masks = read_masks(path)?;
    if phase >= masks.len() {
        return Err(input_err(path, format!("phase {phase} out of range ({} phases)", masks.len())));
    }
    Ok(masks.swap_remove(phase))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_err(path, e))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

pub fn quantify(a: &QuantifyArgs) -> Result<String, ServiceError> {
    if a.sax.is_none() && a.ch4.is_none() {
        return Err(ServiceError::Input("give --sax and/or --ch4".into()));
    }
    let sax = a.sax.as_deref().map(read_masks).transpose()?.unwrap_or_default();
    let ch4 = a.ch4.as_deref().map(read_masks).transpose()?.unwrap_or_default();
    let set = quantify_study(&StudyMasks {
        sax,
        ch4,
        heart_rate_bpm: a.heart_rate,
        ..StudyMasks::default()
    })
    .map_err(|e| ServiceError::Input(e.to_string()))?;
    Ok(if a.json { pretty(&set) } else { set.table() })
}

#[derive(Deserialize)]
struct ManifestEntry {
    case_id: String,
    pred: PathBuf,
    gt: PathBuf,
    label: Option<u8>,
}

/// One JSON record per case, then a `{"summary": ...}` line.
pub fn seg_eval(a: &SegEvalArgs) -> Result<String, ServiceError> {
    let cases: Vec<ManifestEntry> = match (&a.manifest, &a.pred, &a.gt) {
        (Some(m), _, _) => {
            let base = m.parent().unwrap_or(Path::new("."));
            let text = std::fs::read_to_string(m).map_err(|e| input_err(m, e))?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    let mut e: ManifestEntry = serde_json::from_str(l).map_err(|e| input_err(m, format!("line {}: {e}", i + 1)))?;
                    e.pred = base.join(&e.pred);
                    e.gt = base.join(&e.gt);
                    Ok(e)
                })
                .collect::<Result<_, ServiceError>>()?
        }
        (None, Some(p), Some(g)) => vec![ManifestEntry {
            case_id: a.case_id.clone(),
            pred: p.clone(),
            gt: g.clone(),
            label: None,
        }],
        _ => return Err(ServiceError::Input("give --pred and --gt, or --manifest".into())),
    };
    let mut out = String::new();
    let (mut d, mut h, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for c in &cases {
        let pred = read_phase(&c.pred, a.phase)?;
        let gt = read_phase(&c.gt, a.phase)?;
        let r = evaluate_case(&c.case_id, &pred, &gt, c.label.unwrap_or(a.label)).map_err(|e| ServiceError::Input(format!("{}: {e}", c.case_id)))?;
        d.push(r.dsc);
        h.extend(r.hd_mm);
        s.extend(r.asd_mm);
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    let summary = json!({"summary": {"cases": cases.len(), "dsc": mean_sd(&d), "hd_mm": mean_sd(&h), "asd_mm": mean_sd(&s)}});
    out.push_str(&summary.to_string());
    Ok(out)
}

#[derive(Deserialize)]
struct ScoredCase {
    truth: String,
    probabilities: BTreeMap<String, f64>,
}

pub fn cls_eval(a: &ClsEvalArgs, seed: u64) -> Result<String, ServiceError> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| input_err(&a.input, e))?;
    let cases: Vec<ScoredCase> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| input_err(&a.input, format!("line {}: {e}", i + 1))))
        .collect::<Result<_, _>>()?;
    if cases.is_empty() {
        return Err(input_err(&a.input, "no cases"));
    }
    let classes: Vec<String> = if a.classes.is_empty() {
        let mut all: Vec<String> = cases.iter().flat_map(|c| c.probabilities.keys().cloned().chain([c.truth.clone()])).collect();
        all.sort();
        all.dedup();
        all
    } else {
        a.classes.clone()
    };
    let index = |name: &str| classes.iter().position(|c| c == name);
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        truth.push(index(&c.truth).ok_or_else(|| input_err(&a.input, format!("case {}: unknown class `{}`", i + 1, c.truth)))?);
        let best = classes
            .iter()
            .enumerate()
            .max_by(|x, y| {
                let px = c.probabilities.get(x.1).copied().unwrap_or(0.0);
                let py = c.probabilities.get(y.1).copied().unwrap_or(0.0);
                px.total_cmp(&py).then(y.0.cmp(&x.0))
            })
            .map(|(k, _)| k)
            .expect("at least one class");
        predicted.push(best);
    }
    let cm = ConfusionMatrix::from_predictions(classes.clone(), &truth, &predicted).map_err(|e| ServiceError::Input(e.to_string()))?;
    let cfg = BootstrapConfig {
        resamples: a.resamples,
        confidence: a.confidence,
        seed,
    };
    let mut auc = BTreeMap::new();
    for (k, name) in classes.iter().enumerate() {
        let scores: Vec<f64> = cases.iter().map(|c| c.probabilities.get(name).copied().unwrap_or(0.0)).collect();
        let labels: Vec<bool> = truth.iter().map(|&t| t == k).collect();
        // One-vs-rest AUC is undefined when a class is absent or universal.
        auc.insert(name.clone(), roc_auc(&scores, &labels, &cfg).ok());
    }
    Ok(pretty(&json!({
        "cases": cases.len(),
        "confusion": cm,
        "accuracy": cm.accuracy(),
        "weighted_f1": cm.weighted_f1().ok(),
        "per_class": cm.per_class(),
        "auc": auc,
    })))
}

pub fn bullseye(a: &BullseyeArgs) -> Result<String, ServiceError> {
    let doc = if let Some(p) = &a.document {
        let text = std::fs::read_to_string(p).map_err(|e| input_err(p, e))?;
        BullseyeDocument::from_json(&text).map_err(|e| input_err(p, e))?
    } else {
        let path = a.mask.as_deref().expect("clap requires --mask");
        let ed = read_phase(path, a.phase)?;
        let lge = a.lge.as_deref().map(|p| read_phase(p, 0)).transpose()?;
        let analysis = analyze_segments(&ed, lge.as_ref(), a.landmark_deg).map_err(|e| input_err(path, e))?;
        let b = match a.quantity {
            BullseyeQuantity::Thickness if a.max => analysis.thickness.max,
            BullseyeQuantity::Thickness => analysis.thickness.mean,
            BullseyeQuantity::Lge => {
                let burden = analysis.lge.ok_or_else(|| ServiceError::Input("--quantity lge needs --lge".into()))?;
                burden.bullseye
            }
        };
        b.export()
    };
    Ok(match a.format {
        OutputFormat::Json => doc.to_json(),
        OutputFormat::Svg => doc.to_svg(),
    })
}

/// Writes `<kind>.json`/`.raw` studies, `<kind>_masks.json` label volumes,
/// `analytic.json` and `spec.json`; returns the file list.
pub fn phantom(a: &PhantomArgs, seed: u64) -> Result<Vec<PathBuf>, ServiceError> {
    let spec = match (&a.spec, a.random) {
        (Some(p), _) => read_json::<PhantomSpec>(p)?,
        (None, true) => PhantomSpec::random(seed),
        (None, false) => PhantomSpec { seed, ..PhantomSpec::normal() },
    };
    let p = phantom_generate(&spec).map_err(|e| ServiceError::Input(e.to_string()))?;
    std::fs::create_dir_all(&a.out)?;
    let mut written = Vec::new();
    let mut put = |v: &CineVolume, name: String| -> Result<(), ServiceError> {
        let path = a.out.join(format!("{name}.json"));
        save_volume(v, &path, VolumeFormat::Desk).map_err(|e| input_err(&path, e))?;
        written.push(path);
        Ok(())
    };
    let stem = |k: SequenceKind| k.as_str().to_ascii_lowercase();
    let mask_volume = |m: &[LabelMask]| cardiac_core::volume::masks_to_volume(m).map_err(|e| ServiceError::Input(e.to_string()));
    put(&p.sax, stem(SequenceKind::SaxCine))?;
    put(&mask_volume(&p.sax_masks)?, format!("{}_masks", stem(SequenceKind::SaxCine)))?;
    for (kind, view) in [(SequenceKind::Ch2Cine, &p.ch2), (SequenceKind::Ch4Cine, &p.ch4)] {
        if let Some((v, m)) = view {
            put(v, stem(kind))?;
            put(&mask_volume(m)?, format!("{}_masks", stem(kind)))?;
        }
    }
    if let Some((v, m)) = &p.lge {
        put(v, stem(SequenceKind::SaxLge))?;
        put(&mask_volume(std::slice::from_ref(m))?, format!("{}_masks", stem(SequenceKind::SaxLge)))?;
    }
    let analytic = a.out.join("analytic.json");
    std::fs::write(&analytic, pretty(&json!({"ed_phase": p.ed_phase, "es_phase": p.es_phase, "measurements": p.analytic})))?;
    written.push(analytic);
    let spec_path = a.out.join("spec.json");
    std::fs::write(&spec_path, pretty(&spec))?;
    written.push(spec_path);
    Ok(written)
}

pub fn report_score(a: &ReportScoreArgs) -> Result<String, ServiceError> {
    let report: StructuredReport = read_json(&a.report)?;
    let reference: ReferenceFindings = read_json(&a.reference)?;
    let score = score_report(&report, &reference).map_err(|e| ServiceError::Input(e.to_string()))?;
    Ok(pretty(&score))
}

fn preprocess_spec(a: &PreprocessArgs, input: &CineVolume) -> Result<PreprocessSpec, ServiceError> {
    if let Some(p) = &a.spec {
        let text = std::fs::read_to_string(p).map_err(|e| input_err(p, e))?;
        return PreprocessSpec::from_json(&text).map_err(|e| input_err(p, e));
    }
    let spacing = a
        .spacing
        .as_ref()
        .map(|s| Spacing::new(s[0], s[1], s[2]));
    if spacing.is_some_and(|s| !s.is_valid()) {
        return Err(ServiceError::Input("--spacing must be positive and finite".into()));
    }
    if a.standard {
        return Ok(CropSpec::for_kind(input.kind()).pipeline(spacing.unwrap_or_else(|| input.spacing())));
    }
    let mut steps = Vec::new();
    if let Some(keep) = a.phase_keep {
        steps.push(Step::CentralPhaseCrop { keep });
    }
    if let Some(spacing) = spacing {
        let mode = if a.nearest { Interpolation::Nearest } else { Interpolation::Linear };
        steps.push(Step::Resample { spacing, mode });
    }
    if let Some(r) = &a.roi {
        steps.push(Step::RoiCrop { size: [r[0], r[1]] });
    }
    if a.normalize {
        steps.push(Step::MinmaxNormalize);
    }
    if let Some(d) = &a.dims {
        steps.push(Step::FixedCropOrPad { dims: [d[0], d[1], d[2]] });
    }
    if steps.is_empty() {
        return Err(ServiceError::Input("no transform requested".into()));
    }
    Ok(PreprocessSpec { steps })
}

pub fn preprocess(a: &PreprocessArgs) -> Result<String, ServiceError> {
    let input = read_volume(&a.input)?;
    let mask = a.mask.as_deref().map(|p| read_phase(p, 0)).transpose()?;
    let spec = preprocess_spec(a, &input)?;
    if let Some(p) = &a.emit_spec {
        std::fs::write(p, spec.to_json())?;
    }
    let out = spec.run(&input, mask.as_ref()).map_err(|e| ServiceError::Input(e.to_string()))?;
    save_volume(&out.volume, &a.output, VolumeFormat::from_path(&a.output)).map_err(|e| input_err(&a.output, e))?;
    Ok(pretty(&json!({"dims": out.volume.dims(), "spacing": out.volume.spacing(), "flags": out.flags})))
}

/// Effective configuration after applying the global flags.
pub fn resolve_config(cli: &Cli) -> Result<ServiceConfig, ServiceError> {
    let mut cfg = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = &cli.data_root {
        cfg.data_root = r.clone();
    }
    Ok(cfg)
}

fn answer_of(records: &[cardiac_core::agent::TranscriptRecord]) -> String {
    records
        .iter()
        .rev()
        .find_map(|r| match &r.event {
            Event::Answer { message } => Some(message.text.clone()),
            _ => None,
        })
        .unwrap_or_default()
}

/// Reads instructions from `input` until EOF or `:quit`. `:upload <path>`
/// adds a study; every turn is persisted before its answer is printed.
pub fn agent_repl(a: &ReplArgs, cfg: &ServiceConfig, input: impl BufRead, mut output: impl Write) -> Result<String, ServiceError> {
    let agent = cfg.build_agent()?;
    std::fs::create_dir_all(&cfg.data_root)?;
    let store = SessionStore::open(&cfg.data_root)?;
    let mut state = match &a.session {
        Some(id) if store.exists(id) => store.load(id)?,
        Some(id) => store.create(id)?,
        None => store.create(&uuid::Uuid::new_v4().simple().to_string())?,
    };
    let mut mark = Watermark::of(&state);
    let mut uploads: Vec<CineVolume> = a.upload.iter().map(|p| read_volume(p)).collect::<Result<_, _>>()?;
    if a.phantom {
        let p = phantom_generate(&PhantomSpec { seed: cfg.seed, ..PhantomSpec::normal() }).map_err(|e| ServiceError::Input(e.to_string()))?;
        uploads.push(p.sax);
        uploads.extend(p.ch2.map(|(v, _)| v));
        uploads.extend(p.ch4.map(|(v, _)| v));
        uploads.extend(p.lge.map(|(v, _)| v));
    }
    for v in uploads {
        let kind = v.kind();
        let id = state.add_study(v).map_err(|e| ServiceError::Input(e.to_string()))?;
        writeln!(output, "uploaded {kind} as {id}")?;
    }
    mark = store.save(&state, mark)?;
    writeln!(output, "session {}", state.id)?;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if text == ":quit" || text == ":q" {
            break;
        }
        if let Some(path) = text.strip_prefix(":upload ") {
            match read_volume(Path::new(path.trim())).and_then(|v| state.add_study(v).map_err(|e| ServiceError::Input(e.to_string()))) {
                Ok(id) => writeln!(output, "uploaded {id}")?,
                Err(e) => writeln!(output, "upload failed: {e}")?,
            }
            mark = store.save(&state, mark)?;
            continue;
        }
        let records = agent.run_turn(&mut state, AgentMessage::user(text))?;
        mark = store.save(&state, mark)?;
        writeln!(output, "{}", answer_of(&records))?;
    }
    Ok(state.id)
}

pub fn run(cli: Cli) -> Result<(), ServiceError> {
    let cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Quantify(a) => print(quantify(a)?)?,
        Command::SegEval(a) => print(seg_eval(a)?)?,
        Command::ClsEval(a) => print(cls_eval(a, cfg.seed)?)?,
        Command::Bullseye(a) => {
            let out = bullseye(a)?;
            match &a.out {
                Some(p) => std::fs::write(p, out)?,
                None => print(out)?,
            }
        }
        Command::Phantom(a) => {
            for p in phantom(a, cfg.seed)? {
                print(p.display().to_string())?;
            }
        }
        Command::AgentRepl(a) => {
            let stdin = std::io::stdin();
            agent_repl(a, &cfg, stdin.lock(), std::io::stdout())?;
        }
        Command::ReportScore(a) => print(report_score(a)?)?,
        Command::Preprocess(a) => print(preprocess(a)?)?,
        Command::Serve(a) => {
            let listen = a.listen.clone().unwrap_or_else(|| cfg.listen.clone());
            std::fs::create_dir_all(&cfg.data_root).map_err(|e| ServiceError::DataRoot(format!("{}: {e}", cfg.data_root.display())))?;
            let app = AppState::new(cfg.build_agent()?, &cfg.data_root)?;
            runtime()?.block_on(api::serve(app, &listen))?;
        }
        Command::Worker(a) => {
            std::fs::create_dir_all(&a.root)?;
            let worker = ExchangeWorker::new(&a.root, Arc::new(ReferenceService::default()));
            if a.once {
                print(worker.serve_pending()?.to_string())?;
            } else {
                let handle = worker.spawn(Duration::from_millis(a.interval_ms));
                runtime()?.block_on(async {
                    let _ = tokio::signal::ctrl_c().await;
                });
                handle.stop();
            }
        }
        Command::BackendServe(a) => {
            let router = infer_router(Arc::new(ReferenceService::default()));
            runtime()?.block_on(async {
                let listener = tokio::net::TcpListener::bind(&a.listen).await?;
                tracing::info!(addr = %listener.local_addr()?, "inference backend listening");
                axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
    }
    Ok(())
}

/// Writes a line to stdout; a closed pipe ends output quietly.
fn print(s: String) -> Result<(), ServiceError> {
    match writeln!(std::io::stdout(), "{s}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, ServiceError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_flags_parse_anywhere() {
        let cli = Cli::try_parse_from(["cardiac", "phantom", "--out", "x", "--seed", "9", "--data-root", "/tmp/d"]).unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.data_root, PathBuf::from("/tmp/d"));
        for sub in ["quantify", "seg-eval", "cls-eval", "bullseye", "phantom", "agent-repl", "report-score", "serve"] {
            let err = Cli::try_parse_from(["cardiac", sub, "--help"]).unwrap_err();
            assert_eq!(err.kind(), clap::error::ErrorKind::DisplayHelp, "{sub}");
        }
    }
}
