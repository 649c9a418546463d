//! Streaming task-guidance evaluation engine.
//!
//! Builds step-by-step plans from timed action annotations and recipe
//! graphs, generates the canonical timed instruction/feedback transcripts,
//! simulates streaming and turn-based guidance sessions against pluggable
//! agents, and computes the benchmark metrics (instruction completion
//! accuracy, mistake precision/recall/F1, ROUGE-L feedback fluency).

pub mod agents;
pub mod data_model;
pub mod evaluator;
pub mod plan_builder;
pub mod replanner;
pub mod runner;
pub mod textmetrics;
pub mod transcript;

pub use data_model::{
    load_annotations, validate_manifest, ActionId, ActionSegment, BenchmarkSet, DatasetManifest,
    MistakeAnnotation, MistakeCategory, RecipeGraph, Split, StepId, VideoAnnotation,
};
pub use evaluator::{EvalConfig, EvalMode, EvalReport, MatchWindow, MistakeConfusion};
pub use plan_builder::{ActionGroupSchedule, Plan, PlanStep};
pub use transcript::{GuidanceEvent, GuidanceKind, SessionTranscript};
