//! Annotation schema, validation, and dataset statistics.
//!
//! One annotation document per video, stored as UTF-8 JSON. The schema is a
//! normalized form of the source dataset: timed action segments, optional
//! per-action mistakes, an optional recipe graph, and the manual keep/remove
//! re-plan decisions needed to make ground truth reproducible offline.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Action identifier, unique within one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub i64);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Recipe-graph step identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepId(pub String);

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for StepId {
    fn from(s: &str) -> Self {
        StepId(s.to_string())
    }
}

/// The five timestamped mistake categories. Order errors and missing steps
/// are represented structurally (divergent actions, unperformed graph steps),
/// never as a `MistakeAnnotation`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MistakeCategory {
    Preparation,
    Technique,
    Measurement,
    Temperature,
    Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MistakeAnnotation {
    pub category: MistakeCategory,
    pub description: String,
    /// Seconds from video start; must lie within the owning action's span.
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSegment {
    pub action_id: ActionId,
    /// Resolves into the owning video's recipe graph (advanced set); may be
    /// absent on the main set.
    pub step_ref: Option<StepId>,
    pub description: String,
    pub start_s: f64,
    pub end_s: f64,
    pub mistake: Option<MistakeAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeStep {
    pub step_id: StepId,
    pub text: String,
}

/// Directed acyclic recipe graph; edges run prerequisite -> dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeGraph {
    pub steps: Vec<RecipeStep>,
    pub edges: Vec<(StepId, StepId)>,
}

impl RecipeGraph {
    pub fn step_text(&self, id: &StepId) -> Option<&str> {
        self.steps
            .iter()
            .find(|s| &s.step_id == id)
            .map(|s| s.text.as_str())
    }

    pub fn contains(&self, id: &StepId) -> bool {
        self.steps.iter().any(|s| &s.step_id == id)
    }

    /// Direct prerequisites of `id`.
    pub fn parents<'a>(&'a self, id: &'a StepId) -> impl Iterator<Item = &'a StepId> {
        self.edges
            .iter()
            .filter(move |(_, to)| to == id)
            .map(|(from, _)| from)
    }

    /// All transitive prerequisites of `id` (not including `id` itself).
    pub fn ancestors(&self, id: &StepId) -> HashSet<StepId> {
        let mut seen = HashSet::new();
        let mut stack: Vec<&StepId> = self.parents(id).collect();
        while let Some(p) = stack.pop() {
            if seen.insert(p.clone()) {
                stack.extend(self.parents(p));
            }
        }
        seen
    }

    /// True when `descendant` is reachable from `ancestor` along edges.
    pub fn reaches(&self, ancestor: &StepId, descendant: &StepId) -> bool {
        let mut stack = vec![ancestor];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == descendant {
                return true;
            }
            if seen.insert(n) {
                stack.extend(
                    self.edges
                        .iter()
                        .filter(|(from, _)| from == n)
                        .map(|(_, to)| to),
                );
            }
        }
        false
    }

    fn has_cycle(&self) -> bool {
        // Kahn-style peel; anything left over sits on a cycle.
        let mut indegree: HashMap<&StepId, usize> =
            self.steps.iter().map(|s| (&s.step_id, 0)).collect();
        for (_, to) in &self.edges {
            if let Some(d) = indegree.get_mut(to) {
                *d += 1;
            }
        }
        let mut ready: Vec<&StepId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut emitted = 0;
        while let Some(n) = ready.pop() {
            emitted += 1;
            for (from, to) in &self.edges {
                if from == n {
                    let d = indegree.get_mut(to).expect("edge target validated");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(to);
                    }
                }
            }
        }
        emitted != self.steps.len()
    }
}

/// Which benchmark set a video belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkSet {
    Main,
    Advanced,
}

impl fmt::Display for BenchmarkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchmarkSet::Main => write!(f, "main"),
            BenchmarkSet::Advanced => write!(f, "advanced"),
        }
    }
}

impl std::str::FromStr for BenchmarkSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "main" => Ok(BenchmarkSet::Main),
            "advanced" => Ok(BenchmarkSet::Advanced),
            other => Err(format!("unknown set {other:?} (expected main|advanced)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train|val|test)")),
        }
    }
}

/// Stored manual keep/remove decision for one re-plan point. Keyed by the
/// action that completes the group after which the instructed step is still
/// unfinished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplanAnnotation {
    pub after_action_id: ActionId,
    /// true: re-instruct the current step; false: drop it from the plan.
    pub repeat_current: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub recipe_id: String,
    pub set: BenchmarkSet,
    pub split: Split,
    pub duration_s: f64,
    pub actions: Vec<ActionSegment>,
    pub recipe_graph: Option<RecipeGraph>,
    #[serde(default)]
    pub replans: Vec<ReplanAnnotation>,
    /// Canonical feedback body per action; when absent the transcript falls
    /// back to deterministic templates.
    pub feedback_texts: Option<BTreeMap<ActionId, String>>,
}

impl VideoAnnotation {
    pub fn action(&self, id: ActionId) -> Option<&ActionSegment> {
        self.actions.iter().find(|a| a.action_id == id)
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed document in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("schema violation in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("invariant violation{}: field `{field}`: {message}", action_label(.action_id))]
    Invariant {
        action_id: Option<ActionId>,
        field: &'static str,
        message: String,
    },
}

fn action_label(id: &Option<ActionId>) -> String {
    match id {
        Some(id) => format!(" on action {id}"),
        None => String::new(),
    }
}

/// Load one annotation file and enforce every type invariant.
pub fn load_annotations(path: &Path) -> Result<VideoAnnotation, AnnotationError> {
    let raw = fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let video: VideoAnnotation = serde_json::from_str(&raw).map_err(|e| {
        if e.classify() == serde_json::error::Category::Syntax {
            AnnotationError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        } else {
            AnnotationError::Schema {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        }
    })?;
    validate_annotation(&video)?;
    Ok(video)
}

/// Check every invariant on an already-parsed annotation.
pub fn validate_annotation(video: &VideoAnnotation) -> Result<(), AnnotationError> {
    let invariant = |action_id: Option<ActionId>, field: &'static str, message: String| {
        AnnotationError::Invariant {
            action_id,
            field,
            message,
        }
    };

    if video.duration_s <= 0.0 {
        return Err(invariant(None, "duration_s", "must be positive".into()));
    }
    if video.actions.is_empty() {
        return Err(invariant(None, "actions", "must be non-empty".into()));
    }

    let mut seen_ids = HashSet::new();
    for action in &video.actions {
        let id = action.action_id;
        if !seen_ids.insert(id) {
            return Err(invariant(
                Some(id),
                "action_id",
                "duplicate action_id".into(),
            ));
        }
        if !(0.0 <= action.start_s && action.start_s < action.end_s) {
            return Err(invariant(
                Some(id),
                "start_s",
                format!(
                    "requires 0 <= start_s < end_s, got [{}, {}]",
                    action.start_s, action.end_s
                ),
            ));
        }
        if action.end_s > video.duration_s {
            return Err(invariant(
                Some(id),
                "end_s",
                format!(
                    "end_s {} exceeds duration_s {}",
                    action.end_s, video.duration_s
                ),
            ));
        }
        if let Some(mistake) = &action.mistake {
            if !(action.start_s <= mistake.time_s && mistake.time_s <= action.end_s) {
                return Err(invariant(
                    Some(id),
                    "time_s",
                    format!(
                        "mistake time {} outside action span [{}, {}]",
                        mistake.time_s, action.start_s, action.end_s
                    ),
                ));
            }
        }
    }

    if let Some(graph) = &video.recipe_graph {
        let mut step_ids = HashSet::new();
        for step in &graph.steps {
            if !step_ids.insert(&step.step_id) {
                return Err(invariant(
                    None,
                    "recipe_graph.steps",
                    format!("duplicate step_id {}", step.step_id),
                ));
            }
        }
        for (from, to) in &graph.edges {
            if !step_ids.contains(from) || !step_ids.contains(to) {
                return Err(invariant(
                    None,
                    "recipe_graph.edges",
                    format!("edge ({from}, {to}) references unknown step_id"),
                ));
            }
        }
        if graph.has_cycle() {
            return Err(invariant(
                None,
                "recipe_graph.edges",
                "graph contains a cycle".into(),
            ));
        }
    }

    if video.set == BenchmarkSet::Advanced {
        let graph = video
            .recipe_graph
            .as_ref()
            .ok_or_else(|| invariant(None, "recipe_graph", "required for set=advanced".into()))?;
        for action in &video.actions {
            match &action.step_ref {
                None => {
                    return Err(invariant(
                        Some(action.action_id),
                        "step_ref",
                        "required for set=advanced".into(),
                    ))
                }
                Some(r) if !graph.contains(r) => {
                    return Err(invariant(
                        Some(action.action_id),
                        "step_ref",
                        format!("step_ref {r} not in recipe graph"),
                    ))
                }
                Some(_) => {}
            }
        }
    }

    for replan in &video.replans {
        if video.action(replan.after_action_id).is_none() {
            return Err(invariant(
                Some(replan.after_action_id),
                "after_action_id",
                "does not reference an action of this video".into(),
            ));
        }
    }

    if let Some(texts) = &video.feedback_texts {
        for id in texts.keys() {
            if video.action(*id).is_none() {
                return Err(invariant(
                    Some(*id),
                    "feedback_texts",
                    "key does not reference an action of this video".into(),
                ));
            }
        }
    }

    Ok(())
}

/// Serialize an annotation back to its file form.
pub fn to_json_string(video: &VideoAnnotation) -> String {
    let mut out = serde_json::to_string_pretty(video).expect("annotation serializes");
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub set: BenchmarkSet,
    pub split: Split,
    pub path: PathBuf,
}

/// Index of a dataset on disk: one tab-separated line per video,
/// `video_id<TAB>set<TAB>split<TAB>path`, paths relative to the manifest's
/// directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let raw = fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut entries = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(AnnotationError::Parse {
                    path: path.to_path_buf(),
                    message: format!(
                        "line {}: expected 4 tab-separated fields, got {}",
                        lineno + 1,
                        fields.len()
                    ),
                });
            }
            let set = fields[1].parse().map_err(|e| AnnotationError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            let split = fields[2].parse().map_err(|e| AnnotationError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            entries.push(ManifestEntry {
                video_id: fields[0].to_string(),
                set,
                split,
                path: PathBuf::from(fields[3]),
            });
        }
        Ok(DatasetManifest { root, entries })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Entries for one (set, split) cell.
    pub fn select(&self, set: BenchmarkSet, split: Split) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.set == set && e.split == split)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileCheck {
    pub video_id: String,
    pub path: PathBuf,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<FileCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.ok).count()
    }

    pub fn failed(&self) -> usize {
        self.checks.len() - self.passed()
    }

    pub fn all_ok(&self) -> bool {
        self.failed() == 0
    }
}

/// Load and check every manifest entry. Collects all failures instead of
/// stopping at the first.
pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut checks = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = manifest.resolve(entry);
        let error = match load_annotations(&path) {
            Err(e) => Some(e.to_string()),
            Ok(video) => {
                if video.video_id != entry.video_id {
                    Some(format!(
                        "video_id mismatch: manifest says {:?}, file says {:?}",
                        entry.video_id, video.video_id
                    ))
                } else if video.set != entry.set {
                    Some(format!(
                        "set mismatch: manifest says {}, file says {}",
                        entry.set, video.set
                    ))
                } else if video.split != entry.split {
                    Some(format!(
                        "split mismatch: manifest says {}, file says {}",
                        entry.split, video.split
                    ))
                } else {
                    None
                }
            }
        };
        checks.push(FileCheck {
            video_id: entry.video_id.clone(),
            path,
            ok: error.is_none(),
            error,
        });
    }
    ValidationReport { checks }
}

/// Aggregate statistics for one (set, split) cell, derived from the
/// generated ground-truth transcripts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub hours: f64,
    pub videos: usize,
    pub instructions: usize,
    pub followed_success: usize,
    pub followed_mistake: usize,
    pub divergent_success: usize,
    pub divergent_mistake: usize,
    /// Number of keep/remove decisions consulted while generating the
    /// advanced-set transcripts (0 on the main set).
    pub replan_decisions: usize,
}

/// Compute the statistics table cell for (set, split). Instruction and
/// feedback counts come straight from transcript generation, so they stay
/// consistent with the protocol by construction.
pub fn dataset_stats(
    manifest: &DatasetManifest,
    set: BenchmarkSet,
    split: Split,
) -> Result<SplitStats, crate::transcript::TranscriptError> {
    use crate::transcript::{self, FeedbackClass, GuidanceKind};

    let mut stats = SplitStats {
        hours: 0.0,
        videos: 0,
        instructions: 0,
        followed_success: 0,
        followed_mistake: 0,
        divergent_success: 0,
        divergent_mistake: 0,
        replan_decisions: 0,
    };
    for entry in manifest.select(set, split) {
        let video = load_annotations(&manifest.resolve(entry))?;
        let transcript = transcript::generate_transcript(&video)?;
        stats.videos += 1;
        stats.hours += video.duration_s / 3600.0;
        stats.replan_decisions += transcript.replans_used;
        for event in &transcript.events {
            match event.kind {
                GuidanceKind::Instruction => stats.instructions += 1,
                GuidanceKind::Success | GuidanceKind::Mistake => match event.feedback_class() {
                    Some(FeedbackClass::FollowedSuccess) => stats.followed_success += 1,
                    Some(FeedbackClass::FollowedMistake) => stats.followed_mistake += 1,
                    Some(FeedbackClass::DivergentSuccess) => stats.divergent_success += 1,
                    Some(FeedbackClass::DivergentMistake) => stats.divergent_mistake += 1,
                    None => {}
                },
                GuidanceKind::Done => {}
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_video() -> serde_json::Value {
        serde_json::json!({
            "video_id": "v1",
            "recipe_id": "r1",
            "set": "main",
            "split": "test",
            "duration_s": 10.0,
            "actions": [
                {
                    "action_id": 1,
                    "step_ref": null,
                    "description": "chop the onion",
                    "start_s": 0.0,
                    "end_s": 10.0,
                    "mistake": null
                }
            ],
            "recipe_graph": null,
            "replans": [],
            "feedback_texts": null
        })
    }

    fn load_value(value: &serde_json::Value) -> Result<VideoAnnotation, AnnotationError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("video.json");
        fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
        load_annotations(&path)
    }

    #[test]
    fn loads_minimal_document() {
        let video = load_value(&minimal_video()).unwrap();
        assert_eq!(video.actions.len(), 1);
        assert!(video.actions[0].mistake.is_none());
    }

    #[test]
    fn mistake_outside_span_names_field_and_action() {
        let mut value = minimal_video();
        value["actions"][0]["mistake"] = serde_json::json!({
            "category": "timing",
            "description": "too slow",
            "time_s": 11.0
        });
        let err = load_value(&value).unwrap_err();
        match err {
            AnnotationError::Invariant {
                action_id, field, ..
            } => {
                assert_eq!(action_id, Some(ActionId(1)));
                assert_eq!(field, "time_s");
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let mut value = minimal_video();
        value["surprise"] = serde_json::json!(true);
        assert!(matches!(
            load_value(&value).unwrap_err(),
            AnnotationError::Schema { .. }
        ));
    }

    #[test]
    fn syntax_error_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            load_annotations(&path).unwrap_err(),
            AnnotationError::Parse { .. }
        ));
    }

    #[test]
    fn cyclic_graph_rejected() {
        let mut value = minimal_video();
        value["recipe_graph"] = serde_json::json!({
            "steps": [
                {"step_id": "a", "text": "step a"},
                {"step_id": "b", "text": "step b"}
            ],
            "edges": [["a", "b"], ["b", "a"]]
        });
        let err = load_value(&value).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn advanced_requires_resolving_step_refs() {
        let mut value = minimal_video();
        value["set"] = serde_json::json!("advanced");
        value["recipe_graph"] = serde_json::json!({
            "steps": [{"step_id": "a", "text": "step a"}],
            "edges": []
        });
        // step_ref is null -> rejected.
        let err = load_value(&value).unwrap_err();
        assert!(err.to_string().contains("step_ref"), "{err}");

        value["actions"][0]["step_ref"] = serde_json::json!("a");
        assert!(load_value(&value).is_ok());
    }

    #[test]
    fn duplicate_action_ids_rejected() {
        let mut value = minimal_video();
        let action = value["actions"][0].clone();
        let mut second = action.clone();
        second["start_s"] = serde_json::json!(2.0);
        second["end_s"] = serde_json::json!(5.0);
        value["actions"] = serde_json::json!([action, second]);
        let err = load_value(&value).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn replan_must_reference_action() {
        let mut value = minimal_video();
        value["replans"] = serde_json::json!([{"after_action_id": 99, "repeat_current": true}]);
        let err = load_value(&value).unwrap_err();
        assert!(err.to_string().contains("action 99"), "{err}");
    }

    #[test]
    fn round_trip_preserves_value() {
        let video = load_value(&minimal_video()).unwrap();
        let serialized = to_json_string(&video);
        let reparsed: VideoAnnotation = serde_json::from_str(&serialized).unwrap();
        assert_eq!(video, reparsed);
    }

    #[test]
    fn manifest_parses_and_selects() {
        let dir = tempfile::tempdir().unwrap();
        let video_path = dir.path().join("v1.json");
        fs::write(
            &video_path,
            serde_json::to_string_pretty(&minimal_video()).unwrap(),
        )
        .unwrap();
        let manifest_path = dir.path().join("manifest.tsv");
        fs::write(&manifest_path, "v1\tmain\ttest\tv1.json\n").unwrap();

        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.entries.len(), 1);
        assert_eq!(manifest.select(BenchmarkSet::Main, Split::Test).len(), 1);
        assert_eq!(
            manifest.select(BenchmarkSet::Advanced, Split::Test).len(),
            0
        );

        let report = validate_manifest(&manifest);
        assert!(report.all_ok());
    }

    #[test]
    fn manifest_validation_reports_all_failures() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.json");
        fs::write(
            &good,
            serde_json::to_string_pretty(&minimal_video()).unwrap(),
        )
        .unwrap();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, "{oops").unwrap();
        let manifest_path = dir.path().join("manifest.tsv");
        fs::write(
            &manifest_path,
            "v1\tmain\ttest\tgood.json\nv2\tmain\ttest\tbad.json\nv3\tmain\ttest\tmissing.json\n",
        )
        .unwrap();

        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        let report = validate_manifest(&manifest);
        assert_eq!(report.passed(), 1);
        assert_eq!(report.failed(), 2);
        assert!(report.checks[1]
            .error
            .as_deref()
            .unwrap()
            .contains("bad.json"));
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("manifest.tsv");
        fs::write(&manifest_path, "").unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        let report = validate_manifest(&manifest);
        assert!(report.all_ok());
        assert!(report.checks.is_empty());
    }
}
