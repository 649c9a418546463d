//! Python bindings: annotation loading, plan building, transcript
//! generation, metric evaluation, and the text metrics.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use guidebench::data_model;
use guidebench::evaluator;
use guidebench::plan_builder;
use guidebench::replanner;
use guidebench::runner::{self, AgentSpec, RunConfig};
use guidebench::textmetrics;
use guidebench::transcript;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_set(set: &str) -> PyResult<data_model::BenchmarkSet> {
    set.parse().map_err(value_err)
}

fn parse_split(split: &str) -> PyResult<data_model::Split> {
    split.parse().map_err(value_err)
}

/// One video's annotation document.
#[pyclass(frozen, name = "VideoAnnotation")]
struct PyVideoAnnotation {
    inner: data_model::VideoAnnotation,
}

#[pymethods]
impl PyVideoAnnotation {
    #[getter]
    fn video_id(&self) -> &str {
        &self.inner.video_id
    }

    #[getter]
    fn recipe_id(&self) -> &str {
        &self.inner.recipe_id
    }

    #[getter]
    fn set(&self) -> String {
        self.inner.set.to_string()
    }

    #[getter]
    fn split(&self) -> String {
        self.inner.split.to_string()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s
    }

    /// (action_id, description, start_s, end_s, has_mistake) per action.
    fn actions(&self) -> Vec<(i64, String, f64, f64, bool)> {
        self.inner
            .actions
            .iter()
            .map(|a| {
                (
                    a.action_id.0,
                    a.description.clone(),
                    a.start_s,
                    a.end_s,
                    a.mistake.is_some(),
                )
            })
            .collect()
    }

    fn mistake_count(&self) -> usize {
        self.inner
            .actions
            .iter()
            .filter(|a| a.mistake.is_some())
            .count()
    }

    fn to_json(&self) -> String {
        data_model::to_json_string(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "VideoAnnotation(video_id={:?}, set={}, actions={})",
            self.inner.video_id,
            self.inner.set,
            self.inner.actions.len()
        )
    }
}

#[pyclass(frozen, name = "Plan")]
struct PyPlan {
    inner: plan_builder::Plan,
}

#[pymethods]
impl PyPlan {
    /// Step descriptions: one inner list per step (compound steps carry
    /// several entries).
    fn steps(&self) -> Vec<Vec<String>> {
        self.inner
            .steps
            .iter()
            .map(|s| s.descriptions().map(str::to_string).collect())
            .collect()
    }

    /// One instruction sentence per step.
    fn step_texts(&self) -> Vec<String> {
        self.inner.step_texts()
    }

    #[getter]
    fn origin(&self) -> String {
        self.inner.origin.to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }
}

#[pyclass(frozen, name = "GuidanceEvent")]
struct PyGuidanceEvent {
    #[pyo3(get)]
    time_s: f64,
    #[pyo3(get)]
    kind: String,
    #[pyo3(get)]
    text: String,
    #[pyo3(get)]
    step_index: usize,
    #[pyo3(get)]
    divergent: bool,
}

#[pymethods]
impl PyGuidanceEvent {
    fn __repr__(&self) -> String {
        format!(
            "GuidanceEvent(time_s={}, kind={:?}, text={:?})",
            self.time_s, self.kind, self.text
        )
    }
}

#[pyclass(frozen, name = "SessionTranscript")]
struct PyTranscript {
    inner: transcript::SessionTranscript,
}

#[pymethods]
impl PyTranscript {
    #[getter]
    fn video_id(&self) -> &str {
        &self.inner.video_id
    }

    fn events(&self) -> Vec<PyGuidanceEvent> {
        self.inner
            .events
            .iter()
            .map(|e| PyGuidanceEvent {
                time_s: e.time_s,
                kind: e.kind.to_string(),
                text: e.text.clone(),
                step_index: e.step_index,
                divergent: e.divergent,
            })
            .collect()
    }

    #[getter]
    fn replans_used(&self) -> usize {
        self.inner.replans_used
    }

    /// One event per line in the transcript file format.
    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    fn __len__(&self) -> usize {
        self.inner.events.len()
    }
}

#[pyclass(frozen, name = "EvalReport")]
struct PyEvalReport {
    inner: evaluator::EvalReport,
}

#[pymethods]
impl PyEvalReport {
    #[getter]
    fn ic_acc(&self) -> f64 {
        self.inner.ic_acc
    }

    #[getter]
    fn ic_numerator(&self) -> usize {
        self.inner.ic_numerator
    }

    #[getter]
    fn ic_denominator(&self) -> usize {
        self.inner.ic_denominator
    }

    #[getter]
    fn precision(&self) -> Option<f64> {
        self.inner.precision
    }

    #[getter]
    fn recall(&self) -> Option<f64> {
        self.inner.recall
    }

    #[getter]
    fn f1(&self) -> f64 {
        self.inner.f1
    }

    #[getter]
    fn rouge_l_mean(&self) -> Option<f64> {
        self.inner.rouge_l_mean
    }

    /// (tp, fp, fn, tn)
    #[getter]
    fn confusion(&self) -> (usize, usize, usize, usize) {
        let c = &self.inner.confusion;
        (c.tp, c.fp, c.fn_, c.tn)
    }

    fn per_video(&self) -> Vec<(String, f64, usize, usize)> {
        self.inner
            .per_video
            .iter()
            .map(|v| {
                (
                    v.video_id.clone(),
                    v.ic_acc,
                    v.ic_numerator,
                    v.ic_denominator,
                )
            })
            .collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("report serializes")
    }

    fn __repr__(&self) -> String {
        format!(
            "EvalReport(ic_acc={:.4}, f1={:.4}, confusion={:?})",
            self.inner.ic_acc,
            self.inner.f1,
            self.confusion()
        )
    }
}

/// Load and validate one annotation file.
#[pyfunction]
fn load_annotations(path: &str) -> PyResult<PyVideoAnnotation> {
    let inner = data_model::load_annotations(Path::new(path))
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok(PyVideoAnnotation { inner })
}

/// Build the step-by-step plan for a video (its own set's semantics).
#[pyfunction]
fn build_plan(video: &PyVideoAnnotation) -> PyResult<PyPlan> {
    let (inner, _) = plan_builder::build_plan(&video.inner).map_err(value_err)?;
    Ok(PyPlan { inner })
}

/// Generate the ground-truth timed transcript for a video.
#[pyfunction]
fn generate_transcript(video: &PyVideoAnnotation) -> PyResult<PyTranscript> {
    let inner = transcript::generate_transcript(&video.inner).map_err(value_err)?;
    Ok(PyTranscript { inner })
}

/// Evaluate one agent over a manifest cell. `agent` is one of
/// oracle|silent|alarmist|lagged:<s>|remote:<endpoint>; `mode` is
/// stream|turn. Pass `output_dir` to also write the results directory.
#[pyfunction]
#[pyo3(signature = (manifest, set = "main", split = "test", agent = "oracle", mode = "stream",
                    window_s = 30.0, fps = 2.0, prompt_interval_s = 5.0, jobs = 1,
                    output_dir = None))]
#[allow(clippy::too_many_arguments)]
fn eval_manifest(
    manifest: &str,
    set: &str,
    split: &str,
    agent: &str,
    mode: &str,
    window_s: f64,
    fps: f64,
    prompt_interval_s: f64,
    jobs: usize,
    output_dir: Option<&str>,
) -> PyResult<PyEvalReport> {
    let config = RunConfig {
        manifest: PathBuf::from(manifest),
        set: parse_set(set)?,
        split: parse_split(split)?,
        agent: agent.parse::<AgentSpec>().map_err(value_err)?,
        mode: match mode {
            "stream" => evaluator::EvalMode::Streaming,
            "turn" => evaluator::EvalMode::Turn,
            other => return Err(value_err(format!("unknown mode {other:?}"))),
        },
        window_s,
        fps,
        prompt_interval_s,
        output_dir: PathBuf::from(output_dir.unwrap_or("")),
        jobs,
    };
    let (report, outcomes) = runner::evaluate_manifest(&config).map_err(value_err)?;
    if let Some(dir) = output_dir {
        runner::write_results(Path::new(dir), &report, &outcomes).map_err(value_err)?;
    }
    Ok(PyEvalReport { inner: report })
}

/// Dataset statistics for one manifest cell, as a dict-like tuple set.
#[pyfunction]
fn dataset_stats(
    manifest: &str,
    set: &str,
    split: &str,
) -> PyResult<std::collections::BTreeMap<String, f64>> {
    let stats = runner::cmd_stats(Path::new(manifest), parse_set(set)?, parse_split(split)?)
        .map_err(value_err)?;
    let mut out = std::collections::BTreeMap::new();
    out.insert("hours".into(), stats.hours);
    out.insert("videos".into(), stats.videos as f64);
    out.insert("instructions".into(), stats.instructions as f64);
    out.insert("followed_success".into(), stats.followed_success as f64);
    out.insert("followed_mistake".into(), stats.followed_mistake as f64);
    out.insert("divergent_success".into(), stats.divergent_success as f64);
    out.insert("divergent_mistake".into(), stats.divergent_mistake as f64);
    out.insert("replan_decisions".into(), stats.replan_decisions as f64);
    Ok(out)
}

/// Check every manifest entry; returns (video_id, ok, error) per file.
#[pyfunction]
fn validate_manifest(manifest: &str) -> PyResult<Vec<(String, bool, Option<String>)>> {
    let report = runner::cmd_validate(Path::new(manifest)).map_err(value_err)?;
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.video_id, c.ok, c.error))
        .collect())
}

/// ROUGE-L F-score between two strings after normalization.
#[pyfunction]
fn rouge_l(candidate: &str, reference: &str) -> PyResult<f64> {
    textmetrics::rouge_l_text(candidate, reference).map_err(value_err)
}

/// Normalized token list: lowercase, whitespace split, punctuation stripped.
#[pyfunction]
fn normalize_tokens(text: &str) -> Vec<String> {
    textmetrics::normalize_text(text).tokens().to_vec()
}

/// Pick the candidate (step_id, text) the feedback most likely describes.
#[pyfunction]
fn identify_performed_step(feedback: &str, candidates: Vec<(String, String)>) -> PyResult<String> {
    let candidates: Vec<(data_model::StepId, String)> = candidates
        .into_iter()
        .map(|(id, text)| (data_model::StepId(id), text))
        .collect();
    replanner::identify_performed_step(feedback, &candidates)
        .map(|id| id.0)
        .map_err(value_err)
}

#[pymodule]
fn guidebench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVideoAnnotation>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyGuidanceEvent>()?;
    m.add_class::<PyTranscript>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(load_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(build_plan, m)?)?;
    m.add_function(wrap_pyfunction!(generate_transcript, m)?)?;
    m.add_function(wrap_pyfunction!(eval_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(validate_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(identify_performed_step, m)?)?;
    Ok(())
}
