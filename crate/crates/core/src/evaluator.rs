//! Streaming and turn-based evaluation.
//!
//! The evaluator drives an agent causally over ticks, then matches the
//! emitted events against the ground-truth transcript inside symmetric
//! temporal windows (inclusive boundaries on both sides).
//!
//! Instruction completion: ground-truth instruction i, with completion time
//! T_i (the end of its action group), is counted when the agent held the
//! matching instruction at the moment of its claim, and the claim (a success
//! event, or the issuance of instruction i+1) falls within the window around
//! T_i. Each agent event can satisfy at most one completion.
//!
//! Mistake scoring is gated: agent mistake events and ground-truth mistakes
//! are scored only while the agent's instruction-in-force matches the
//! ground-truth instruction in force at that moment. Gated pairs within the
//! window match greedily by time distance, one-to-one.

use serde::{Deserialize, Serialize};

use crate::agents::{
    Agent, AgentError, AgentEvent, AgentEventKind, SessionInit, SessionMode, Tick,
};
use crate::data_model::VideoAnnotation;
use crate::textmetrics::{normalize_match, rouge_l_text};
use crate::transcript::{GuidanceKind, SessionTranscript};

const TIME_EPS: f64 = 1e-9;

/// Symmetric temporal match window; boundaries are inclusive on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchWindow {
    pub center_s: f64,
    pub width_s: f64,
}

impl MatchWindow {
    pub fn around(center_s: f64, width_s: f64) -> Self {
        MatchWindow { center_s, width_s }
    }

    pub fn contains(&self, t: f64) -> bool {
        (t - self.center_s).abs() <= self.width_s / 2.0 + TIME_EPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Streaming,
    Turn,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    /// Full window width in seconds.
    pub window_s: f64,
    pub fps: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            window_s: 30.0,
            fps: crate::agents::DEFAULT_TICK_FPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MistakeConfusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl MistakeConfusion {
    pub fn merge(&mut self, other: &MistakeConfusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// What the scorer decided about one emitted event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOutcome {
    /// Instruction event; updates the instruction-in-force.
    Instruction,
    /// Counted as the completion of ground-truth instruction `index`.
    Completion { index: usize },
    /// Mistake event matched to a ground-truth mistake (true positive).
    MistakeTruePositive,
    /// Gated mistake event with no ground-truth mistake in its window.
    MistakeFalsePositive,
    /// Mistake event excluded because the instruction-in-force mismatched.
    MistakeUngated,
    /// Success event that did not satisfy any completion.
    Unmatched,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoggedEvent {
    /// Turn-based runs tag events with their step session index.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_session: Option<usize>,
    #[serde(flatten)]
    pub event: AgentEvent,
    pub outcome: EventOutcome,
}

/// Raw result of driving one streaming session.
#[derive(Debug, Clone)]
pub struct StreamingLog {
    pub video_id: String,
    pub events: Vec<AgentEvent>,
    pub agent_failure: Option<String>,
}

/// Scored result for one video, in either mode.
#[derive(Debug, Clone, Serialize)]
pub struct VideoOutcome {
    pub video_id: String,
    pub ic_numerator: usize,
    pub ic_denominator: usize,
    pub confusion: MistakeConfusion,
    pub rouge_l_mean: Option<f64>,
    pub agent_failure: Option<String>,
    pub events: Vec<LoggedEvent>,
    /// True-positive (agent text, ground-truth text) pairs, kept for
    /// external fluency scorers.
    #[serde(skip)]
    pub tp_pairs: Vec<(String, String)>,
    #[serde(skip)]
    pub rouge_sum: f64,
    #[serde(skip)]
    pub rouge_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerVideoRow {
    pub video_id: String,
    pub ic_acc: f64,
    pub ic_numerator: usize,
    pub ic_denominator: usize,
    pub confusion: MistakeConfusion,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent_failure: Option<String>,
}

/// Micro-averaged aggregate over a set of videos.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub window_s: f64,
    pub ic_acc: f64,
    pub ic_numerator: usize,
    pub ic_denominator: usize,
    pub confusion: MistakeConfusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
    pub rouge_l_mean: Option<f64>,
    pub per_video: Vec<PerVideoRow>,
}

/// Tick times for the whole video: k / fps for k touching [0, duration).
pub fn tick_times(duration_s: f64, fps: f64) -> Vec<f64> {
    let count = (duration_s * fps + TIME_EPS).floor() as usize;
    (0..count).map(|k| k as f64 / fps).collect()
}

fn tick_times_range(start_s: f64, end_s: f64, fps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = start_s + k as f64 / fps;
        if t > end_s + TIME_EPS {
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

/// Drive one streaming session over the full video. Agent failures abort the
/// stream; whatever was emitted so far is kept for scoring.
pub fn run_streaming_session(
    video: &VideoAnnotation,
    transcript: &SessionTranscript,
    agent: &mut dyn Agent,
    config: &EvalConfig,
) -> StreamingLog {
    let first_instruction = transcript
        .instructions()
        .next()
        .map(|e| e.text.clone())
        .unwrap_or_default();
    let init = SessionInit {
        session_id: video.video_id.clone(),
        plan_texts: transcript.plan.step_texts(),
        first_instruction,
        mode: SessionMode::Streaming,
    };
    let mut events = Vec::new();
    let mut failure = None;

    let outcome: Result<(), AgentError> = (|| {
        agent.init(&init)?;
        for (k, t) in tick_times(video.duration_s, config.fps)
            .into_iter()
            .enumerate()
        {
            let tick = Tick {
                time_s: t,
                frame_ref: format!("{}#{}", video.video_id, k),
            };
            events.extend(agent.tick(&tick)?);
        }
        events.extend(agent.finish()?);
        Ok(())
    })();
    if let Err(e) = outcome {
        failure = Some(e.to_string());
    }

    StreamingLog {
        video_id: video.video_id.clone(),
        events,
        agent_failure: failure,
    }
}

/// Ground-truth quantities the matchers need, derived once per transcript.
struct GtView {
    /// (time, normalized text, raw text) per instruction event, in order.
    instructions: Vec<(f64, String, String)>,
    /// Completion time per instruction: end of its step's action group, or
    /// None when the instructed step is never fully performed.
    completion_times: Vec<Option<f64>>,
    /// Ground-truth mistakes: (time, raw text, index of instruction in force).
    mistakes: Vec<(f64, String, usize)>,
}

fn build_gt_view(video: &VideoAnnotation, transcript: &SessionTranscript) -> GtView {
    let mut instructions = Vec::new();
    let mut completion_times = Vec::new();
    let mut mistakes = Vec::new();
    for event in &transcript.events {
        match event.kind {
            GuidanceKind::Instruction => {
                instructions.push((
                    event.time_s,
                    normalize_match(&event.text),
                    event.text.clone(),
                ));
                let step = &transcript.plan.steps[event.step_index];
                let all_performed = step.entries.iter().all(|e| e.action_id.is_some());
                let t = if all_performed {
                    step.entries
                        .iter()
                        .filter_map(|e| e.action_id)
                        .filter_map(|id| video.action(id))
                        .map(|a| a.end_s)
                        .fold(None, |acc: Option<f64>, t| {
                            Some(acc.map_or(t, |m| m.max(t)))
                        })
                } else {
                    None
                };
                completion_times.push(t);
            }
            GuidanceKind::Mistake => {
                // Instruction in force = last instruction event before this
                // one in transcript order.
                let idx = instructions.len().saturating_sub(1);
                mistakes.push((event.time_s, event.text.clone(), idx));
            }
            _ => {}
        }
    }
    GtView {
        instructions,
        completion_times,
        mistakes,
    }
}

impl GtView {
    /// Index of the instruction in force at time `t` for agent-side events:
    /// the last instruction issued strictly before `t` (the opening
    /// instruction is in force from the start).
    fn in_force_at(&self, t: f64) -> usize {
        let mut idx = 0;
        for (i, (ti, _, _)) in self.instructions.iter().enumerate() {
            if *ti < t - TIME_EPS {
                idx = i;
            } else {
                break;
            }
        }
        idx
    }
}

/// Normalized instruction-in-force immediately before each agent event.
fn annotate_in_force(events: &[AgentEvent], initial: &str) -> Vec<String> {
    let mut current = normalize_match(initial);
    let mut out = Vec::with_capacity(events.len());
    for event in events {
        out.push(current.clone());
        if event.kind == AgentEventKind::Instruction {
            current = normalize_match(&event.text);
        }
    }
    out
}

struct ScoreAccumulator {
    numerator: usize,
    denominator: usize,
    confusion: MistakeConfusion,
    tp_pairs: Vec<(String, String)>,
    outcomes: Vec<EventOutcome>,
}

impl ScoreAccumulator {
    fn new() -> Self {
        ScoreAccumulator {
            numerator: 0,
            denominator: 0,
            confusion: MistakeConfusion::default(),
            tp_pairs: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    fn fluency_scores(&self) -> Vec<f64> {
        self.tp_pairs
            .iter()
            .filter_map(|(candidate, reference)| rouge_l_text(candidate, reference).ok())
            .collect()
    }
}

/// Mean ROUGE-L F over true-positive (agent text, ground-truth text) pairs;
/// absent when there are none.
pub fn score_fluency(pairs: &[(String, String)]) -> Option<f64> {
    score_fluency_with(pairs, &|candidate, reference| {
        rouge_l_text(candidate, reference).ok()
    })
}

/// Fluency over true-positive pairs with a caller-supplied scorer, for
/// external metrics (an embedding-based scorer, say) that this engine does
/// not ship. Pairs the scorer declines are skipped.
pub fn score_fluency_with(
    pairs: &[(String, String)],
    scorer: &dyn Fn(&str, &str) -> Option<f64>,
) -> Option<f64> {
    let scores: Vec<f64> = pairs
        .iter()
        .filter_map(|(candidate, reference)| scorer(candidate, reference))
        .collect();
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Score one ordered event list against a contiguous run of ground-truth
/// instructions `instr_range` (full range for streaming; a single step for
/// turn-based sessions).
fn score_events(
    gt: &GtView,
    events: &[AgentEvent],
    in_force: &[String],
    instr_range: std::ops::Range<usize>,
    initial_in_force: Option<usize>,
    window_s: f64,
    acc: &mut ScoreAccumulator,
) {
    let mut outcomes: Vec<EventOutcome> = events
        .iter()
        .map(|e| match e.kind {
            AgentEventKind::Instruction => EventOutcome::Instruction,
            _ => EventOutcome::Unmatched,
        })
        .collect();
    let mut consumed = vec![false; events.len()];

    // Instruction completions, earliest unmatched ground truth first.
    for i in instr_range.clone() {
        acc.denominator += 1;
        let Some(t_i) = gt.completion_times[i] else {
            continue;
        };
        let window = MatchWindow::around(t_i, window_s);
        let wanted = &gt.instructions[i].1;
        let next_text = gt.instructions.get(i + 1).map(|(_, n, _)| n.as_str());
        for (j, event) in events.iter().enumerate() {
            if consumed[j] || !window.contains(event.time_s) || &in_force[j] != wanted {
                continue;
            }
            let claims_completion = match event.kind {
                AgentEventKind::Success => true,
                AgentEventKind::Instruction => {
                    next_text.is_some_and(|n| normalize_match(&event.text) == n)
                }
                AgentEventKind::Mistake => false,
            };
            if claims_completion {
                consumed[j] = true;
                acc.numerator += 1;
                outcomes[j] = EventOutcome::Completion { index: i };
                break;
            }
        }
    }

    // Mistake gating. For the agent side, events gate against the
    // ground-truth instruction in force at their own time (or the fixed
    // session instruction in turn-based mode).
    let gt_index_for = |t: f64| -> usize {
        match initial_in_force {
            Some(fixed) => fixed,
            None => gt.in_force_at(t),
        }
    };
    let gated_agent: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(j, e)| {
            e.kind == AgentEventKind::Mistake && {
                let k = gt_index_for(e.time_s);
                instr_range.contains(&k) && in_force[*j] == gt.instructions[k].1
            }
        })
        .map(|(j, _)| j)
        .collect();
    for (j, event) in events.iter().enumerate() {
        if event.kind == AgentEventKind::Mistake && !gated_agent.contains(&j) {
            outcomes[j] = EventOutcome::MistakeUngated;
        }
    }

    let gated_gt: Vec<usize> = gt
        .mistakes
        .iter()
        .enumerate()
        .filter(|(_, (t, _, instr_idx))| {
            instr_range.contains(instr_idx) && {
                // Agent in force at the ground-truth mistake moment: the last
                // instruction the agent issued strictly before it.
                let agent_now = events
                    .iter()
                    .zip(in_force)
                    .take_while(|(e, _)| e.time_s < *t - TIME_EPS)
                    .last()
                    .map(|(e, before)| match e.kind {
                        AgentEventKind::Instruction => normalize_match(&e.text),
                        _ => before.clone(),
                    })
                    .unwrap_or_else(|| {
                        in_force.first().cloned().unwrap_or_else(|| {
                            gt.instructions
                                .get(initial_in_force.unwrap_or(0))
                                .map(|(_, n, _)| n.clone())
                                .unwrap_or_default()
                        })
                    });
                agent_now == gt.instructions[*instr_idx].1
            }
        })
        .map(|(g, _)| g)
        .collect();

    // Greedy nearest-time one-to-one matching between gated events and gated
    // ground-truth mistakes.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for &g in &gated_gt {
        let (gt_time, _, _) = gt.mistakes[g];
        let window = MatchWindow::around(gt_time, window_s);
        for &j in &gated_agent {
            if window.contains(events[j].time_s) {
                pairs.push(((events[j].time_s - gt_time).abs(), g, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_matched = vec![false; gt.mistakes.len()];
    let mut agent_matched = vec![false; events.len()];
    for (_, g, j) in pairs {
        if !gt_matched[g] && !agent_matched[j] {
            gt_matched[g] = true;
            agent_matched[j] = true;
            acc.confusion.tp += 1;
            outcomes[j] = EventOutcome::MistakeTruePositive;
            let (_, gt_text, _) = &gt.mistakes[g];
            acc.tp_pairs.push((events[j].text.clone(), gt_text.clone()));
        }
    }
    for &g in &gated_gt {
        if !gt_matched[g] {
            acc.confusion.fn_ += 1;
        }
    }
    for &j in &gated_agent {
        if !agent_matched[j] {
            acc.confusion.fp += 1;
            outcomes[j] = EventOutcome::MistakeFalsePositive;
        }
    }

    // True negatives: followed, mistake-free instructions with zero gated
    // agent mistake events while in force.
    for i in instr_range.clone() {
        let has_gt_mistake = gt.mistakes.iter().any(|(_, _, idx)| *idx == i);
        if has_gt_mistake {
            continue;
        }
        let noisy = gated_agent
            .iter()
            .any(|&j| gt_index_for(events[j].time_s) == i);
        if !noisy {
            acc.confusion.tn += 1;
        }
    }

    acc.outcomes.extend(outcomes);
}

/// Score a completed streaming session log.
pub fn score_streaming(
    video: &VideoAnnotation,
    transcript: &SessionTranscript,
    log: &StreamingLog,
    config: &EvalConfig,
) -> VideoOutcome {
    let gt = build_gt_view(video, transcript);
    let initial = gt
        .instructions
        .first()
        .map(|(_, _, raw)| raw.clone())
        .unwrap_or_default();
    let in_force = annotate_in_force(&log.events, &initial);
    let mut acc = ScoreAccumulator::new();
    score_events(
        &gt,
        &log.events,
        &in_force,
        0..gt.instructions.len(),
        None,
        config.window_s,
        &mut acc,
    );
    let events = log
        .events
        .iter()
        .zip(acc.outcomes.iter())
        .map(|(event, outcome)| LoggedEvent {
            step_session: None,
            event: event.clone(),
            outcome: *outcome,
        })
        .collect();
    let scores = acc.fluency_scores();
    VideoOutcome {
        video_id: video.video_id.clone(),
        ic_numerator: acc.numerator,
        ic_denominator: acc.denominator,
        confusion: acc.confusion,
        rouge_l_mean: score_fluency(&acc.tp_pairs),
        agent_failure: log.agent_failure.clone(),
        events,
        rouge_sum: scores.iter().sum(),
        rouge_count: scores.len(),
        tp_pairs: acc.tp_pairs,
    }
}

/// Run and score one video in streaming mode.
pub fn evaluate_streaming(
    video: &VideoAnnotation,
    transcript: &SessionTranscript,
    agent: &mut dyn Agent,
    config: &EvalConfig,
) -> VideoOutcome {
    let log = run_streaming_session(video, transcript, agent, config);
    score_streaming(video, transcript, &log, config)
}

/// Turn-based evaluation: every ground-truth instruction gets a fresh agent
/// session covering its own action group (plus half a window of slack), with
/// that instruction supplied as in force. No error propagates across steps.
pub fn run_turn_based(
    video: &VideoAnnotation,
    transcript: &SessionTranscript,
    make_agent: &mut dyn FnMut() -> Box<dyn Agent>,
    config: &EvalConfig,
) -> VideoOutcome {
    let gt = build_gt_view(video, transcript);
    let mut acc = ScoreAccumulator::new();
    let mut logged: Vec<LoggedEvent> = Vec::new();
    let mut failure: Option<String> = None;

    for i in 0..gt.instructions.len() {
        let step = &transcript.plan.steps[step_index_of_instruction(transcript, i)];
        let span = step
            .entries
            .iter()
            .filter_map(|e| e.action_id)
            .filter_map(|id| video.action(id))
            .fold(None::<(f64, f64)>, |acc, a| {
                Some(match acc {
                    None => (a.start_s, a.end_s),
                    Some((s, e)) => (s.min(a.start_s), e.max(a.end_s)),
                })
            });
        let Some((group_start, group_end)) = span else {
            // Never-performed step: nothing to observe, only the denominator
            // moves.
            acc.denominator += 1;
            continue;
        };

        let init = SessionInit {
            session_id: format!("{}#step{}", video.video_id, i),
            plan_texts: transcript.plan.step_texts(),
            first_instruction: gt.instructions[i].2.clone(),
            mode: SessionMode::Turn,
        };
        let end_bound = (group_end + config.window_s / 2.0).min(video.duration_s);
        let mut events = Vec::new();
        let session: Result<(), AgentError> = (|| {
            let mut agent = make_agent();
            agent.init(&init)?;
            for (k, t) in tick_times_range(group_start, end_bound, config.fps)
                .into_iter()
                .enumerate()
            {
                let tick = Tick {
                    time_s: t,
                    frame_ref: format!("{}#{}", video.video_id, k),
                };
                events.extend(agent.tick(&tick)?);
            }
            events.extend(agent.finish()?);
            Ok(())
        })();
        if let Err(e) = session {
            failure.get_or_insert_with(|| format!("step {i}: {e}"));
        }

        let in_force = annotate_in_force(&events, &gt.instructions[i].2);
        let before = acc.outcomes.len();
        score_events(
            &gt,
            &events,
            &in_force,
            i..i + 1,
            Some(i),
            config.window_s,
            &mut acc,
        );
        for (event, outcome) in events.iter().zip(acc.outcomes[before..].iter()) {
            logged.push(LoggedEvent {
                step_session: Some(i),
                event: event.clone(),
                outcome: *outcome,
            });
        }
    }

    let scores = acc.fluency_scores();
    VideoOutcome {
        video_id: video.video_id.clone(),
        ic_numerator: acc.numerator,
        ic_denominator: acc.denominator,
        confusion: acc.confusion,
        rouge_l_mean: score_fluency(&acc.tp_pairs),
        agent_failure: failure,
        events: logged,
        rouge_sum: scores.iter().sum(),
        rouge_count: scores.len(),
        tp_pairs: acc.tp_pairs,
    }
}

fn step_index_of_instruction(transcript: &SessionTranscript, i: usize) -> usize {
    transcript
        .instructions()
        .nth(i)
        .map(|e| e.step_index)
        .expect("instruction index in range")
}

/// Micro-average: sums of numerators and denominators over videos, never an
/// average of per-video ratios.
pub fn aggregate_report(mode: EvalMode, window_s: f64, outcomes: &[VideoOutcome]) -> EvalReport {
    let mut ic_numerator = 0;
    let mut ic_denominator = 0;
    let mut confusion = MistakeConfusion::default();
    let mut rouge_sum = 0.0;
    let mut rouge_count = 0;
    let mut per_video = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        ic_numerator += o.ic_numerator;
        ic_denominator += o.ic_denominator;
        confusion.merge(&o.confusion);
        rouge_sum += o.rouge_sum;
        rouge_count += o.rouge_count;
        per_video.push(PerVideoRow {
            video_id: o.video_id.clone(),
            ic_acc: ratio(o.ic_numerator, o.ic_denominator),
            ic_numerator: o.ic_numerator,
            ic_denominator: o.ic_denominator,
            confusion: o.confusion,
            rouge_l_mean: o.rouge_l_mean,
            agent_failure: o.agent_failure.clone(),
        });
    }

    let precision = (confusion.tp + confusion.fp > 0)
        .then(|| confusion.tp as f64 / (confusion.tp + confusion.fp) as f64);
    let recall = (confusion.tp + confusion.fn_ > 0)
        .then(|| confusion.tp as f64 / (confusion.tp + confusion.fn_) as f64);
    let p = precision.unwrap_or(0.0);
    let r = recall.unwrap_or(0.0);
    let f1 = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };

    EvalReport {
        mode,
        window_s,
        ic_acc: ratio(ic_numerator, ic_denominator),
        ic_numerator,
        ic_denominator,
        confusion,
        precision,
        recall,
        f1,
        rouge_l_mean: (rouge_count > 0).then(|| rouge_sum / rouge_count as f64),
        per_video,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
