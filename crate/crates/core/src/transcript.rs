//! Ground-truth guidance transcript generation.
//!
//! A transcript is the timed sequence of instructions and feedback a perfect
//! guide would produce for a fixed (non-reactive) video. The first
//! instruction is given at the first action's start time. Each action yields
//! exactly one feedback event: success at its end time, or mistake feedback
//! at the annotated mistake time. When every action of the current action
//! group has finished, the emptied step is dropped from the plan and the next
//! instruction is emitted at that time. On the advanced set an action may
//! diverge from the instruction in force; divergence feedback carries a fixed
//! prefix and, when the instructed step is left unfinished, a stored manual
//! keep/remove decision selects between re-instructing it and dropping it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{ActionId, ActionSegment, AnnotationError, BenchmarkSet, VideoAnnotation};
use crate::plan_builder::{self, ActionGroup, ActionGroupSchedule, Plan, PlanEntry, PlanError};
use crate::textmetrics::normalize_match;

/// Completion message once all steps of the plan are finished.
pub const DONE_TEXT: &str = "You have finished all the steps.";
/// Prefix for feedback on a divergent action performed without mistakes,
/// given at the action's end time.
pub const DIVERGENT_CLEAN_PREFIX: &str = "You did not follow the instruction.";
/// Prefix for feedback on a divergent action containing a mistake, given at
/// the annotated mistake time.
pub const DIVERGENT_MISTAKE_PREFIX: &str = "You are not following the instruction.";

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(
        "video {video_id}: divergence after action {action_id} has no stored keep/remove decision"
    )]
    MissingReplanAnnotation {
        video_id: String,
        action_id: ActionId,
    },
    #[error(
        "video {video_id}: remove decision after action {action_id} leaves no step to instruct"
    )]
    PlanExhausted {
        video_id: String,
        action_id: ActionId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    Instruction,
    Success,
    Mistake,
    Done,
}

impl fmt::Display for GuidanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GuidanceKind::Instruction => "instruction",
            GuidanceKind::Success => "success",
            GuidanceKind::Mistake => "mistake",
            GuidanceKind::Done => "done",
        };
        write!(f, "{s}")
    }
}

/// How a feedback event is counted in the dataset statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackClass {
    FollowedSuccess,
    FollowedMistake,
    /// Divergent action performed without mistakes ("did not follow").
    DivergentSuccess,
    /// Divergent action containing a mistake ("are not following").
    DivergentMistake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceEvent {
    pub time_s: f64,
    pub kind: GuidanceKind,
    pub text: String,
    /// Index into the transcript's full plan: the instructed step for
    /// instructions, the step owning the finished action for feedback, and
    /// the final step for the done event.
    pub step_index: usize,
    pub divergent: bool,
}

impl GuidanceEvent {
    pub fn feedback_class(&self) -> Option<FeedbackClass> {
        match self.kind {
            GuidanceKind::Success => Some(FeedbackClass::FollowedSuccess),
            GuidanceKind::Mistake if !self.divergent => Some(FeedbackClass::FollowedMistake),
            GuidanceKind::Mistake => {
                if self.text.starts_with(DIVERGENT_CLEAN_PREFIX) {
                    Some(FeedbackClass::DivergentSuccess)
                } else {
                    Some(FeedbackClass::DivergentMistake)
                }
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTranscript {
    pub video_id: String,
    pub events: Vec<GuidanceEvent>,
    pub plan: Plan,
    /// Keep/remove decisions consulted during generation (advanced set).
    pub replans_used: usize,
}

impl SessionTranscript {
    pub fn instructions(&self) -> impl Iterator<Item = &GuidanceEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == GuidanceKind::Instruction)
    }

    /// One event per line, in event order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn events_from_jsonl(raw: &str) -> Result<Vec<GuidanceEvent>, serde_json::Error> {
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    Followed,
    Divergent,
}

/// Does the finished action satisfy the instruction in force? Followed iff
/// it matches one of the current step's remaining entries: by step_ref when
/// both sides carry one, by normalized description otherwise.
pub fn classify_divergence(action: &ActionSegment, remaining: &[PlanEntry]) -> Divergence {
    let followed = remaining
        .iter()
        .any(|entry| match (&action.step_ref, &entry.step_ref) {
            (Some(a), Some(e)) => a == e,
            _ => normalize_match(&action.description) == normalize_match(&entry.description),
        });
    if followed {
        Divergence::Followed
    } else {
        Divergence::Divergent
    }
}

// Event ordering at equal timestamps: the opening instruction first, then
// feedback, then instructions, done last.
const RANK_FIRST_INSTRUCTION: u8 = 0;
const RANK_FEEDBACK: u8 = 1;
const RANK_INSTRUCTION: u8 = 2;
const RANK_DONE: u8 = 3;

struct EventSink {
    staged: Vec<(f64, u8, GuidanceEvent)>,
}

impl EventSink {
    fn new() -> Self {
        EventSink { staged: Vec::new() }
    }

    fn push(&mut self, rank: u8, event: GuidanceEvent) {
        self.staged.push((event.time_s, rank, event));
    }

    fn into_ordered(mut self) -> Vec<GuidanceEvent> {
        self.staged
            .sort_by(|(ta, ra, _), (tb, rb, _)| ta.total_cmp(tb).then(ra.cmp(rb)));
        self.staged.into_iter().map(|(_, _, e)| e).collect()
    }
}

fn feedback_body(video: &VideoAnnotation, action: &ActionSegment) -> Option<String> {
    video
        .feedback_texts
        .as_ref()
        .and_then(|m| m.get(&action.action_id))
        .cloned()
}

fn followed_feedback(
    video: &VideoAnnotation,
    action: &ActionSegment,
) -> (f64, GuidanceKind, String) {
    match &action.mistake {
        None => {
            let body = feedback_body(video, action).unwrap_or_else(|| {
                format!("You have successfully completed: {}.", action.description)
            });
            (action.end_s, GuidanceKind::Success, body)
        }
        Some(mistake) => {
            let body = feedback_body(video, action).unwrap_or_else(|| mistake.description.clone());
            (mistake.time_s, GuidanceKind::Mistake, body)
        }
    }
}

fn divergent_feedback(
    video: &VideoAnnotation,
    action: &ActionSegment,
) -> (f64, GuidanceKind, String) {
    match &action.mistake {
        None => {
            let body =
                feedback_body(video, action).unwrap_or_else(|| format!("{}.", action.description));
            (
                action.end_s,
                GuidanceKind::Mistake,
                format!("{DIVERGENT_CLEAN_PREFIX} {body}"),
            )
        }
        Some(mistake) => {
            let body = feedback_body(video, action)
                .unwrap_or_else(|| format!("{}. {}", action.description, mistake.description));
            (
                mistake.time_s,
                GuidanceKind::Mistake,
                format!("{DIVERGENT_MISTAKE_PREFIX} {body}"),
            )
        }
    }
}

/// The action whose finish completes the group: latest end time, later
/// schedule position winning ties. Keys the stored re-plan decisions.
fn group_decision_action(video: &VideoAnnotation, group: &ActionGroup) -> ActionId {
    let mut best: Option<&ActionSegment> = None;
    for id in &group.action_ids {
        let action = video.action(*id).expect("group ids come from the video");
        match best {
            Some(b) if action.end_s < b.end_s => {}
            _ => best = Some(action),
        }
    }
    best.expect("groups are non-empty").action_id
}

/// Main-set transcript: the user follows every instruction, so the plan is
/// consumed strictly in order.
pub fn generate_main_transcript(
    video: &VideoAnnotation,
    plan: &Plan,
    schedule: &ActionGroupSchedule,
) -> Result<SessionTranscript, TranscriptError> {
    if schedule.groups.is_empty() {
        return Err(PlanError::EmptyVideo.into());
    }
    let mut sink = EventSink::new();
    sink.push(
        RANK_FIRST_INSTRUCTION,
        GuidanceEvent {
            time_s: schedule.groups[0].start_s,
            kind: GuidanceKind::Instruction,
            text: plan.steps[0].instruction_text(),
            step_index: 0,
            divergent: false,
        },
    );

    let last = schedule.groups.len() - 1;
    for (i, group) in schedule.groups.iter().enumerate() {
        for id in &group.action_ids {
            let action = video.action(*id).expect("group ids come from the video");
            let (time_s, kind, text) = followed_feedback(video, action);
            sink.push(
                RANK_FEEDBACK,
                GuidanceEvent {
                    time_s,
                    kind,
                    text,
                    step_index: i,
                    divergent: false,
                },
            );
        }
        if i < last {
            sink.push(
                RANK_INSTRUCTION,
                GuidanceEvent {
                    time_s: group.end_s,
                    kind: GuidanceKind::Instruction,
                    text: plan.steps[i + 1].instruction_text(),
                    step_index: i + 1,
                    divergent: false,
                },
            );
        } else {
            sink.push(
                RANK_DONE,
                GuidanceEvent {
                    time_s: group.end_s,
                    kind: GuidanceKind::Done,
                    text: DONE_TEXT.to_string(),
                    step_index: plan.steps.len() - 1,
                    divergent: false,
                },
            );
        }
    }

    Ok(SessionTranscript {
        video_id: video.video_id.clone(),
        events: sink.into_ordered(),
        plan: plan.clone(),
        replans_used: 0,
    })
}

/// Remaining plan state during advanced-set simulation.
struct RemainingPlan {
    /// (original plan index, remaining entries), in plan order.
    steps: Vec<(usize, Vec<PlanEntry>)>,
    /// Original index of the step currently instructed.
    current: usize,
}

impl RemainingPlan {
    fn new(plan: &Plan) -> Self {
        RemainingPlan {
            steps: plan
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| (i, s.entries.clone()))
                .collect(),
            current: 0,
        }
    }

    fn current_entries(&self) -> Option<&[PlanEntry]> {
        self.steps
            .iter()
            .find(|(idx, _)| *idx == self.current)
            .map(|(_, entries)| entries.as_slice())
    }

    fn head(&self) -> Option<usize> {
        self.steps.first().map(|(idx, _)| *idx)
    }

    /// Remove the entry for a performed action; drops the step once empty.
    fn remove_action(&mut self, id: ActionId) -> Option<usize> {
        for (pos, (orig, entries)) in self.steps.iter_mut().enumerate() {
            if let Some(e) = entries.iter().position(|e| e.action_id == Some(id)) {
                let orig = *orig;
                entries.remove(e);
                if entries.is_empty() {
                    self.steps.remove(pos);
                }
                return Some(orig);
            }
        }
        None
    }

    fn remove_step(&mut self, orig: usize) {
        self.steps.retain(|(idx, _)| *idx != orig);
    }

    fn instruction_text(&self, orig: usize) -> Option<String> {
        self.steps
            .iter()
            .find(|(idx, _)| *idx == orig)
            .map(|(_, entries)| {
                entries
                    .iter()
                    .map(|e| e.description.as_str())
                    .collect::<Vec<_>>()
                    .join("; ")
            })
    }
}

/// Advanced-set transcript: actions may diverge from the instruction in
/// force, and unfinished instructed steps are kept or dropped according to
/// the video's stored re-plan decisions.
pub fn generate_advanced_transcript(
    video: &VideoAnnotation,
    plan: &Plan,
    schedule: &ActionGroupSchedule,
) -> Result<SessionTranscript, TranscriptError> {
    if schedule.groups.is_empty() {
        return Err(PlanError::EmptyVideo.into());
    }
    let mut sink = EventSink::new();
    let mut remaining = RemainingPlan::new(plan);
    let mut replans_used = 0usize;

    let first_step = remaining.head().expect("plan is non-empty");
    remaining.current = first_step;
    sink.push(
        RANK_FIRST_INSTRUCTION,
        GuidanceEvent {
            time_s: schedule.groups[0].start_s,
            kind: GuidanceKind::Instruction,
            text: plan.steps[first_step].instruction_text(),
            step_index: first_step,
            divergent: false,
        },
    );

    let last = schedule.groups.len() - 1;
    for (i, group) in schedule.groups.iter().enumerate() {
        for id in &group.action_ids {
            let action = video.action(*id).expect("group ids come from the video");
            let divergence = match remaining.current_entries() {
                Some(entries) => classify_divergence(action, entries),
                // Instructed step already fulfilled mid-group: anything else
                // the user does cannot be following it.
                None => Divergence::Divergent,
            };
            let (time_s, kind, text) = match divergence {
                Divergence::Followed => followed_feedback(video, action),
                Divergence::Divergent => divergent_feedback(video, action),
            };
            let step_index = plan
                .step_of_action(*id)
                .expect("performed actions are planned");
            sink.push(
                RANK_FEEDBACK,
                GuidanceEvent {
                    time_s,
                    kind,
                    text,
                    step_index,
                    divergent: divergence == Divergence::Divergent,
                },
            );
            remaining.remove_action(*id);
        }

        if i == last {
            sink.push(
                RANK_DONE,
                GuidanceEvent {
                    time_s: group.end_s,
                    kind: GuidanceKind::Done,
                    text: DONE_TEXT.to_string(),
                    step_index: plan.steps.len() - 1,
                    divergent: false,
                },
            );
            break;
        }

        // Decide what to instruct next.
        let next_step = if remaining.current_entries().is_some() {
            // The instructed step is unfinished although its action group is
            // over: consult the stored keep/remove decision.
            let key = group_decision_action(video, group);
            let decision = video
                .replans
                .iter()
                .find(|r| r.after_action_id == key)
                .ok_or_else(|| TranscriptError::MissingReplanAnnotation {
                    video_id: video.video_id.clone(),
                    action_id: key,
                })?;
            replans_used += 1;
            if decision.repeat_current {
                remaining.current
            } else {
                remaining.remove_step(remaining.current);
                remaining
                    .head()
                    .ok_or_else(|| TranscriptError::PlanExhausted {
                        video_id: video.video_id.clone(),
                        action_id: key,
                    })?
            }
        } else {
            // Can still come up empty: an earlier remove decision may have
            // dropped the steps of every remaining action.
            remaining
                .head()
                .ok_or_else(|| TranscriptError::PlanExhausted {
                    video_id: video.video_id.clone(),
                    action_id: group_decision_action(video, group),
                })?
        };
        remaining.current = next_step;
        let text = remaining
            .instruction_text(next_step)
            .expect("next step is in the remaining plan");
        sink.push(
            RANK_INSTRUCTION,
            GuidanceEvent {
                time_s: group.end_s,
                kind: GuidanceKind::Instruction,
                text,
                step_index: next_step,
                divergent: false,
            },
        );
    }

    Ok(SessionTranscript {
        video_id: video.video_id.clone(),
        events: sink.into_ordered(),
        plan: plan.clone(),
        replans_used,
    })
}

/// Build the plan for the video's set and generate its transcript.
pub fn generate_transcript(video: &VideoAnnotation) -> Result<SessionTranscript, TranscriptError> {
    let (plan, schedule) = plan_builder::build_plan(video)?;
    match video.set {
        BenchmarkSet::Main => generate_main_transcript(video, &plan, &schedule),
        BenchmarkSet::Advanced => generate_advanced_transcript(video, &plan, &schedule),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{
        MistakeAnnotation, MistakeCategory, RecipeGraph, RecipeStep, ReplanAnnotation, Split,
        StepId,
    };

    fn action(id: i64, start: f64, end: f64, desc: &str) -> ActionSegment {
        ActionSegment {
            action_id: ActionId(id),
            step_ref: None,
            description: desc.to_string(),
            start_s: start,
            end_s: end,
            mistake: None,
        }
    }

    fn with_mistake(mut a: ActionSegment, time: f64, desc: &str) -> ActionSegment {
        a.mistake = Some(MistakeAnnotation {
            category: MistakeCategory::Technique,
            description: desc.to_string(),
            time_s: time,
        });
        a
    }

    fn with_ref(mut a: ActionSegment, step: &str) -> ActionSegment {
        a.step_ref = Some(StepId(step.to_string()));
        a
    }

    fn main_video(actions: Vec<ActionSegment>, duration: f64) -> VideoAnnotation {
        VideoAnnotation {
            video_id: "v".into(),
            recipe_id: "r".into(),
            set: BenchmarkSet::Main,
            split: Split::Test,
            duration_s: duration,
            actions,
            recipe_graph: None,
            replans: vec![],
            feedback_texts: None,
        }
    }

    fn kinds(t: &SessionTranscript) -> Vec<(f64, GuidanceKind)> {
        t.events.iter().map(|e| (e.time_s, e.kind)).collect()
    }

    #[test]
    fn single_action_main_transcript() {
        let video = main_video(vec![action(1, 0.0, 10.0, "chop the onion")], 10.0);
        let t = generate_transcript(&video).unwrap();
        assert_eq!(
            kinds(&t),
            [
                (0.0, GuidanceKind::Instruction),
                (10.0, GuidanceKind::Success),
                (10.0, GuidanceKind::Done)
            ]
        );
        assert_eq!(t.events[0].text, "chop the onion");
        assert_eq!(
            t.events[1].text,
            "You have successfully completed: chop the onion."
        );
        assert_eq!(t.events[2].text, DONE_TEXT);
    }

    #[test]
    fn mistake_feedback_at_annotated_time() {
        let video = main_video(
            vec![
                with_mistake(
                    action(1, 0.0, 10.0, "slice bread"),
                    7.0,
                    "Slices are uneven.",
                ),
                action(2, 10.0, 25.0, "toast bread"),
            ],
            25.0,
        );
        let t = generate_transcript(&video).unwrap();
        assert_eq!(
            kinds(&t),
            [
                (0.0, GuidanceKind::Instruction),
                (7.0, GuidanceKind::Mistake),
                (10.0, GuidanceKind::Instruction),
                (25.0, GuidanceKind::Success),
                (25.0, GuidanceKind::Done)
            ]
        );
        assert_eq!(t.events[1].text, "Slices are uneven.");
        assert!(!t.events[1].divergent);
    }

    #[test]
    fn compound_step_advances_at_group_end() {
        let video = main_video(
            vec![
                action(1, 0.0, 100.0, "simmer the sauce"),
                action(2, 10.0, 20.0, "stir the sauce"),
                action(3, 100.0, 130.0, "plate the pasta"),
            ],
            130.0,
        );
        let t = generate_transcript(&video).unwrap();
        assert_eq!(
            kinds(&t),
            [
                (0.0, GuidanceKind::Instruction),
                (20.0, GuidanceKind::Success),
                (100.0, GuidanceKind::Success),
                (100.0, GuidanceKind::Instruction),
                (130.0, GuidanceKind::Success),
                (130.0, GuidanceKind::Done)
            ]
        );
        assert_eq!(t.events[0].text, "simmer the sauce; stir the sauce");
        // Feedback for the inner action lands before the outer one.
        assert!(t.events[1].text.contains("stir"));
    }

    #[test]
    fn feedback_precedes_instruction_on_ties() {
        let video = main_video(
            vec![
                with_mistake(
                    action(1, 0.0, 25.0, "boil water"),
                    25.0,
                    "Water is boiling over.",
                ),
                action(2, 25.0, 50.0, "add pasta"),
            ],
            50.0,
        );
        let t = generate_transcript(&video).unwrap();
        assert_eq!(t.events[1].kind, GuidanceKind::Mistake);
        assert_eq!(t.events[1].time_s, 25.0);
        assert_eq!(t.events[2].kind, GuidanceKind::Instruction);
        assert_eq!(t.events[2].time_s, 25.0);
    }

    #[test]
    fn every_action_yields_exactly_one_feedback() {
        let video = main_video(
            vec![
                with_mistake(action(1, 0.0, 30.0, "a"), 12.0, "m1"),
                action(2, 30.0, 70.0, "b"),
                action(3, 70.0, 100.0, "c"),
            ],
            100.0,
        );
        let t = generate_transcript(&video).unwrap();
        let feedback = t
            .events
            .iter()
            .filter(|e| matches!(e.kind, GuidanceKind::Success | GuidanceKind::Mistake))
            .count();
        assert_eq!(feedback, video.actions.len());
        let done: Vec<_> = t
            .events
            .iter()
            .filter(|e| e.kind == GuidanceKind::Done)
            .collect();
        assert_eq!(done.len(), 1);
        assert_eq!(t.events.last().unwrap().kind, GuidanceKind::Done);
        assert_eq!(t.events[0].kind, GuidanceKind::Instruction);
    }

    fn chain_graph() -> RecipeGraph {
        RecipeGraph {
            steps: vec![
                RecipeStep {
                    step_id: StepId("s1".into()),
                    text: "first".into(),
                },
                RecipeStep {
                    step_id: StepId("s2".into()),
                    text: "second".into(),
                },
                RecipeStep {
                    step_id: StepId("s3".into()),
                    text: "third".into(),
                },
            ],
            edges: vec![
                (StepId("s1".into()), StepId("s2".into())),
                (StepId("s2".into()), StepId("s3".into())),
            ],
        }
    }

    fn advanced_video(
        actions: Vec<ActionSegment>,
        replans: Vec<ReplanAnnotation>,
        duration: f64,
    ) -> VideoAnnotation {
        VideoAnnotation {
            video_id: "v".into(),
            recipe_id: "r".into(),
            set: BenchmarkSet::Advanced,
            split: Split::Test,
            duration_s: duration,
            actions,
            recipe_graph: Some(chain_graph()),
            replans,
            feedback_texts: None,
        }
    }

    #[test]
    fn followed_advanced_video_matches_main_transcript() {
        let actions = vec![
            with_ref(action(1, 0.0, 30.0, "first"), "s1"),
            with_ref(action(2, 30.0, 60.0, "second"), "s2"),
            with_ref(action(3, 60.0, 90.0, "third"), "s3"),
        ];
        let adv = advanced_video(actions.clone(), vec![], 90.0);
        let adv_t = generate_transcript(&adv).unwrap();

        let mut main = main_video(actions, 90.0);
        main.actions.iter_mut().for_each(|a| a.step_ref = None);
        let main_t = generate_transcript(&main).unwrap();
        assert_eq!(adv_t.events, main_t.events);
        assert_eq!(adv_t.replans_used, 0);
    }

    #[test]
    fn divergence_with_repeat_reinstructs_current_step() {
        // User performs s3 first although s1 is instructed.
        let actions = vec![
            with_ref(action(1, 0.0, 30.0, "third"), "s3"),
            with_ref(action(2, 30.0, 60.0, "first"), "s1"),
            with_ref(action(3, 60.0, 90.0, "second"), "s2"),
        ];
        let replans = vec![ReplanAnnotation {
            after_action_id: ActionId(1),
            repeat_current: true,
        }];
        let t = generate_transcript(&advanced_video(actions, replans, 90.0)).unwrap();

        let texts: Vec<(&str, GuidanceKind, bool)> = t
            .events
            .iter()
            .map(|e| (e.text.as_str(), e.kind, e.divergent))
            .collect();
        assert_eq!(
            texts,
            [
                ("first", GuidanceKind::Instruction, false),
                (
                    "You did not follow the instruction. third.",
                    GuidanceKind::Mistake,
                    true
                ),
                ("first", GuidanceKind::Instruction, false),
                (
                    "You have successfully completed: first.",
                    GuidanceKind::Success,
                    false
                ),
                ("second", GuidanceKind::Instruction, false),
                (
                    "You have successfully completed: second.",
                    GuidanceKind::Success,
                    false
                ),
                (DONE_TEXT, GuidanceKind::Done, false),
            ]
        );
        assert_eq!(t.replans_used, 1);
    }

    #[test]
    fn divergent_action_with_mistake_uses_present_tense_prefix() {
        let actions = vec![
            with_ref(
                with_mistake(action(1, 0.0, 30.0, "third"), 15.0, "Wrong pan."),
                "s3",
            ),
            with_ref(action(2, 30.0, 60.0, "first"), "s1"),
            with_ref(action(3, 60.0, 90.0, "second"), "s2"),
        ];
        let replans = vec![ReplanAnnotation {
            after_action_id: ActionId(1),
            repeat_current: true,
        }];
        let t = generate_transcript(&advanced_video(actions, replans, 90.0)).unwrap();
        let event = &t.events[1];
        assert_eq!(event.time_s, 15.0);
        assert_eq!(
            event.text,
            "You are not following the instruction. third. Wrong pan."
        );
        assert!(event.divergent);
        assert_eq!(
            event.feedback_class(),
            Some(FeedbackClass::DivergentMistake)
        );
    }

    #[test]
    fn missing_replan_decision_is_an_error() {
        let actions = vec![
            with_ref(action(1, 0.0, 30.0, "third"), "s3"),
            with_ref(action(2, 30.0, 60.0, "first"), "s1"),
            with_ref(action(3, 60.0, 90.0, "second"), "s2"),
        ];
        let err = generate_transcript(&advanced_video(actions, vec![], 90.0)).unwrap_err();
        assert!(matches!(
            err,
            TranscriptError::MissingReplanAnnotation {
                action_id: ActionId(1),
                ..
            }
        ));
    }

    #[test]
    fn remove_decision_drops_current_step() {
        // Plan order comes out as [s1, s4, s2, s3]; the user performs s3
        // while s4 is instructed and the stored decision drops s4. The next
        // instruction is then the never-performed s2.
        let graph = RecipeGraph {
            steps: vec![
                RecipeStep {
                    step_id: StepId("s1".into()),
                    text: "first".into(),
                },
                RecipeStep {
                    step_id: StepId("s2".into()),
                    text: "second".into(),
                },
                RecipeStep {
                    step_id: StepId("s3".into()),
                    text: "third".into(),
                },
                RecipeStep {
                    step_id: StepId("s4".into()),
                    text: "fourth".into(),
                },
            ],
            edges: vec![(StepId("s2".into()), StepId("s3".into()))],
        };
        let video = VideoAnnotation {
            video_id: "v".into(),
            recipe_id: "r".into(),
            set: BenchmarkSet::Advanced,
            split: Split::Test,
            duration_s: 120.0,
            actions: vec![
                with_ref(action(1, 0.0, 30.0, "first"), "s1"),
                with_ref(action(2, 30.0, 70.0, "third"), "s3"),
                with_ref(action(3, 70.0, 120.0, "fourth"), "s4"),
            ],
            recipe_graph: Some(graph),
            replans: vec![ReplanAnnotation {
                after_action_id: ActionId(2),
                repeat_current: false,
            }],
            feedback_texts: None,
        };
        let t = generate_transcript(&video).unwrap();
        let instr: Vec<&str> = t.instructions().map(|e| e.text.as_str()).collect();
        assert_eq!(instr, ["first", "fourth", "second"]);
        assert_eq!(t.replans_used, 1);
        // The later action for the dropped step is divergent relative to the
        // missing step now instructed.
        let last_feedback = &t.events[t.events.len() - 2];
        assert_eq!(
            last_feedback.text,
            "You did not follow the instruction. fourth."
        );
        assert!(last_feedback.divergent);
    }

    #[test]
    fn remove_decision_that_empties_the_plan_is_an_error() {
        // User performs s3 out of order, the decision drops the instructed
        // s2, but the video still has a group left and nothing to instruct.
        let actions = vec![
            with_ref(action(1, 0.0, 30.0, "first"), "s1"),
            with_ref(action(2, 30.0, 70.0, "third"), "s3"),
            with_ref(action(3, 70.0, 100.0, "second"), "s2"),
        ];
        let replans = vec![ReplanAnnotation {
            after_action_id: ActionId(2),
            repeat_current: false,
        }];
        let err = generate_transcript(&advanced_video(actions, replans, 100.0)).unwrap_err();
        assert!(matches!(err, TranscriptError::PlanExhausted { .. }));
    }

    #[test]
    fn feedback_text_override_replaces_body_keeps_prefix() {
        let mut video = advanced_video(
            vec![
                with_ref(action(1, 0.0, 30.0, "third"), "s3"),
                with_ref(action(2, 30.0, 60.0, "first"), "s1"),
                with_ref(action(3, 60.0, 90.0, "second"), "s2"),
            ],
            vec![ReplanAnnotation {
                after_action_id: ActionId(1),
                repeat_current: true,
            }],
            90.0,
        );
        let mut texts = std::collections::BTreeMap::new();
        texts.insert(
            ActionId(1),
            "You skipped ahead to the third step.".to_string(),
        );
        video.feedback_texts = Some(texts);
        let t = generate_transcript(&video).unwrap();
        assert_eq!(
            t.events[1].text,
            "You did not follow the instruction. You skipped ahead to the third step."
        );
    }

    #[test]
    fn divergence_classification_normalizes_text() {
        let entry = |desc: &str| PlanEntry {
            description: desc.to_string(),
            action_id: None,
            step_ref: None,
        };
        let performed = action(1, 0.0, 5.0, "  Chop THE Onion! ");
        assert_eq!(
            classify_divergence(&performed, &[entry("chop the onion")]),
            Divergence::Followed
        );
        assert_eq!(
            classify_divergence(&performed, &[entry("slice the tomato")]),
            Divergence::Divergent
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let video = main_video(vec![action(1, 0.0, 10.0, "chop the onion")], 10.0);
        let t = generate_transcript(&video).unwrap();
        let raw = t.to_jsonl();
        let parsed = events_from_jsonl(&raw).unwrap();
        assert_eq!(parsed, t.events);
    }
}
