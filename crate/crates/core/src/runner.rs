//! Reproducible command runs: configuration, per-video orchestration, and
//! result rendering behind the command-line interface.
//!
//! Output files embed no wall-clock timestamps and all collections keep
//! deterministic order, so re-running with identical inputs reproduces the
//! result files byte for byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;

use thiserror::Error;

use crate::agents::{
    alarmist_agent, lagged_oracle, oracle_agent, Agent, RemoteAgent, RemoteTransport, SilentAgent,
    DEFAULT_PROMPT_INTERVAL_S, DEFAULT_REMOTE_TIMEOUT_S, DEFAULT_TICK_FPS,
};
use crate::data_model::{
    self, dataset_stats, load_annotations, validate_manifest, BenchmarkSet, DatasetManifest, Split,
    SplitStats, ValidationReport, VideoAnnotation,
};
use crate::evaluator::{
    aggregate_report, evaluate_streaming, run_turn_based, EvalConfig, EvalMode, EvalReport,
    VideoOutcome,
};
use crate::plan_builder::{build_main_plan, build_plan, Plan};
use crate::transcript::{generate_transcript, SessionTranscript};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Annotation(#[from] data_model::AnnotationError),
    #[error(transparent)]
    Plan(#[from] crate::plan_builder::PlanError),
    #[error(transparent)]
    Transcript(#[from] crate::transcript::TranscriptError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which agent an evaluation run drives.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    Oracle,
    Silent,
    Alarmist,
    Lagged(f64),
    Remote(String),
}

impl FromStr for AgentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(AgentSpec::Oracle),
            "silent" => Ok(AgentSpec::Silent),
            "alarmist" => Ok(AgentSpec::Alarmist),
            other => {
                if let Some(lag) = other.strip_prefix("lagged:") {
                    let lag: f64 = lag
                        .parse()
                        .map_err(|_| format!("bad lag in {other:?} (want lagged:<seconds>)"))?;
                    Ok(AgentSpec::Lagged(lag))
                } else if let Some(endpoint) = other.strip_prefix("remote:") {
                    if endpoint.is_empty() {
                        return Err("remote: requires an endpoint".into());
                    }
                    Ok(AgentSpec::Remote(endpoint.to_string()))
                } else {
                    Err(format!(
                        "unknown agent {other:?} (expected oracle|silent|alarmist|lagged:<s>|remote:<endpoint>)"
                    ))
                }
            }
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Oracle => write!(f, "oracle"),
            AgentSpec::Silent => write!(f, "silent"),
            AgentSpec::Alarmist => write!(f, "alarmist"),
            AgentSpec::Lagged(s) => write!(f, "lagged:{s}"),
            AgentSpec::Remote(e) => write!(f, "remote:{e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub set: BenchmarkSet,
    pub split: Split,
    pub agent: AgentSpec,
    pub mode: EvalMode,
    pub window_s: f64,
    pub fps: f64,
    pub prompt_interval_s: f64,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.window_s <= 0.0 {
            return Err(RunError::Config("window_s must be positive".into()));
        }
        if self.fps <= 0.0 {
            return Err(RunError::Config("fps must be positive".into()));
        }
        if self.prompt_interval_s <= 0.0 {
            return Err(RunError::Config(
                "prompt_interval_s must be positive".into(),
            ));
        }
        if self.jobs == 0 {
            return Err(RunError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_run_config(manifest: PathBuf, output_dir: PathBuf) -> RunConfig {
    RunConfig {
        manifest,
        set: BenchmarkSet::Main,
        split: Split::Test,
        agent: AgentSpec::Oracle,
        mode: EvalMode::Streaming,
        window_s: 30.0,
        fps: DEFAULT_TICK_FPS,
        prompt_interval_s: DEFAULT_PROMPT_INTERVAL_S,
        output_dir,
        jobs: 1,
    }
}

/// Load and check every file in the manifest.
pub fn cmd_validate(manifest_path: &Path) -> Result<ValidationReport, RunError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    Ok(validate_manifest(&manifest))
}

pub fn render_validation(report: &ValidationReport) -> String {
    let mut out = String::new();
    for check in &report.checks {
        match &check.error {
            None => out.push_str(&format!(
                "PASS {} ({})\n",
                check.video_id,
                check.path.display()
            )),
            Some(e) => out.push_str(&format!(
                "FAIL {} ({}): {e}\n",
                check.video_id,
                check.path.display()
            )),
        }
    }
    out.push_str(&format!(
        "{} passed, {} failed\n",
        report.passed(),
        report.failed()
    ));
    out
}

/// Build and render the plan for one annotation file. `set_override`
/// switches between main and advanced semantics regardless of the file's
/// own set (useful for advanced-set files, whose main-set plan is the
/// sorting baseline).
pub fn cmd_plan(video_path: &Path, set_override: Option<BenchmarkSet>) -> Result<String, RunError> {
    let video = load_annotations(video_path)?;
    let (plan, _) = match set_override.unwrap_or(video.set) {
        BenchmarkSet::Main => build_main_plan(&video)?,
        BenchmarkSet::Advanced => crate::plan_builder::build_advanced_plan(&video)?,
    };
    Ok(render_plan(&plan))
}

pub fn render_plan(plan: &Plan) -> String {
    let mut out = String::new();
    for (i, step) in plan.steps.iter().enumerate() {
        for (j, entry) in step.entries.iter().enumerate() {
            if j == 0 {
                out.push_str(&format!("{}. {}\n", i + 1, entry.description));
            } else {
                out.push_str(&format!("   {}\n", entry.description));
            }
        }
    }
    out
}

/// Generate the ground-truth transcript for one annotation file.
pub fn cmd_transcript(video_path: &Path) -> Result<SessionTranscript, RunError> {
    let video = load_annotations(video_path)?;
    Ok(generate_transcript(&video)?)
}

fn make_agent(
    spec: &AgentSpec,
    transcript: &SessionTranscript,
    config: &RunConfig,
) -> Box<dyn Agent> {
    match spec {
        AgentSpec::Oracle => Box::new(oracle_agent(transcript)),
        AgentSpec::Silent => Box::new(SilentAgent),
        AgentSpec::Alarmist => Box::new(alarmist_agent(transcript)),
        AgentSpec::Lagged(lag) => Box::new(lagged_oracle(transcript, *lag)),
        AgentSpec::Remote(endpoint) => {
            let transport = RemoteTransport::parse(endpoint)
                .expect("endpoint validated when the config was parsed");
            Box::new(RemoteAgent::new(
                transport,
                config.prompt_interval_s,
                DEFAULT_REMOTE_TIMEOUT_S,
            ))
        }
    }
}

fn evaluate_one(video: &VideoAnnotation, config: &RunConfig) -> Result<VideoOutcome, RunError> {
    let (plan, schedule) = build_plan(video)?;
    let transcript = match video.set {
        BenchmarkSet::Main => crate::transcript::generate_main_transcript(video, &plan, &schedule)?,
        BenchmarkSet::Advanced => {
            crate::transcript::generate_advanced_transcript(video, &plan, &schedule)?
        }
    };
    let eval_config = EvalConfig {
        window_s: config.window_s,
        fps: config.fps,
    };
    let outcome = match config.mode {
        EvalMode::Streaming => {
            let mut agent = make_agent(&config.agent, &transcript, config);
            evaluate_streaming(video, &transcript, agent.as_mut(), &eval_config)
        }
        EvalMode::Turn => run_turn_based(
            video,
            &transcript,
            &mut || make_agent(&config.agent, &transcript, config),
            &eval_config,
        ),
    };
    Ok(outcome)
}

/// Run the configured evaluation over every manifest entry in (set, split),
/// parallel across videos. Writes nothing.
pub fn evaluate_manifest(config: &RunConfig) -> Result<(EvalReport, Vec<VideoOutcome>), RunError> {
    config.validate()?;
    let manifest = DatasetManifest::load(&config.manifest)?;
    let entries = manifest.select(config.set, config.split);
    let mut videos = Vec::with_capacity(entries.len());
    for entry in entries {
        videos.push(load_annotations(&manifest.resolve(entry))?);
    }
    let outcomes = run_parallel(&videos, config)?;
    let report = aggregate_report(config.mode, config.window_s, &outcomes);
    Ok((report, outcomes))
}

/// Write one session log per video plus the aggregate report.
pub fn write_results(
    output_dir: &Path,
    report: &EvalReport,
    outcomes: &[VideoOutcome],
) -> Result<(), RunError> {
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let sessions_dir = output_dir.join("sessions");
    fs::create_dir_all(&sessions_dir).map_err(io_err(&sessions_dir))?;
    for outcome in outcomes {
        let path = sessions_dir.join(format!("{}.json", outcome.video_id));
        let mut body = serde_json::to_string_pretty(outcome).expect("outcome serializes");
        body.push('\n');
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    let report_path = output_dir.join("report.json");
    let mut body = serde_json::to_string_pretty(report).expect("report serializes");
    body.push('\n');
    fs::write(&report_path, body).map_err(io_err(&report_path))?;
    Ok(())
}

/// Evaluate and persist the results directory.
pub fn cmd_eval(config: &RunConfig) -> Result<EvalReport, RunError> {
    let (report, outcomes) = evaluate_manifest(config)?;
    write_results(&config.output_dir, &report, &outcomes)?;
    Ok(report)
}

fn run_parallel(
    videos: &[VideoAnnotation],
    config: &RunConfig,
) -> Result<Vec<VideoOutcome>, RunError> {
    if config.jobs <= 1 || videos.len() <= 1 {
        return videos.iter().map(|v| evaluate_one(v, config)).collect();
    }
    let (tx, rx) = mpsc::channel::<(usize, Result<VideoOutcome, RunError>)>();
    std::thread::scope(|scope| {
        for (worker, chunk) in videos
            .chunks(videos.len().div_ceil(config.jobs))
            .enumerate()
        {
            let tx = tx.clone();
            let base = worker * videos.len().div_ceil(config.jobs);
            scope.spawn(move || {
                for (offset, video) in chunk.iter().enumerate() {
                    let result = evaluate_one(video, config);
                    if tx.send((base + offset, result)).is_err() {
                        return;
                    }
                }
            });
        }
    });
    drop(tx);
    let mut slots: Vec<Option<VideoOutcome>> = (0..videos.len()).map(|_| None).collect();
    for (idx, result) in rx {
        slots[idx] = Some(result?);
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("every video produces an outcome"))
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.3}"),
        None => "-".to_string(),
    }
}

/// Summary table with the benchmark's metric columns.
pub fn render_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
        "video", "IC-Acc", "Prec.", "Rec.", "F1", "ROUGE-L"
    ));
    for row in &report.per_video {
        let c = &row.confusion;
        let precision = (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64);
        let recall = (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64);
        let f1 = match (precision, recall) {
            (p, r) if p.unwrap_or(0.0) + r.unwrap_or(0.0) > 0.0 => {
                let (p, r) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
                format!("{:.3}", 2.0 * p * r / (p + r))
            }
            _ => "0.000".to_string(),
        };
        out.push_str(&format!(
            "{:<24} {:>8.3} {:>8} {:>8} {:>8} {:>9}\n",
            row.video_id,
            row.ic_acc,
            fmt_opt(precision),
            fmt_opt(recall),
            f1,
            fmt_opt(row.rouge_l_mean),
        ));
        if let Some(failure) = &row.agent_failure {
            out.push_str(&format!("  ! agent failure: {failure}\n"));
        }
    }
    out.push_str(&format!(
        "{:<24} {:>8.3} {:>8} {:>8} {:>8.3} {:>9}\n",
        "ALL",
        report.ic_acc,
        fmt_opt(report.precision),
        fmt_opt(report.recall),
        report.f1,
        fmt_opt(report.rouge_l_mean),
    ));
    out
}

/// Read back the aggregate report from a results directory.
pub fn load_report(results_dir: &Path) -> Result<serde_json::Value, RunError> {
    let path = results_dir.join("report.json");
    let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&raw).map_err(|e| RunError::Config(format!("bad report file: {e}")))
}

/// Compute the statistics table cell for one (set, split).
pub fn cmd_stats(
    manifest_path: &Path,
    set: BenchmarkSet,
    split: Split,
) -> Result<SplitStats, RunError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    Ok(dataset_stats(&manifest, set, split)?)
}

pub fn render_stats(set: BenchmarkSet, split: Split, stats: &SplitStats) -> String {
    format!(
        "{set}/{split}: {:.1} h, {} videos, {} instructions, {} followed-success, \
         {} followed-mistake, {} divergent-success, {} divergent-mistake, {} re-plan decisions\n",
        stats.hours,
        stats.videos,
        stats.instructions,
        stats.followed_success,
        stats.followed_mistake,
        stats.divergent_success,
        stats.divergent_mistake,
        stats.replan_decisions,
    )
}
