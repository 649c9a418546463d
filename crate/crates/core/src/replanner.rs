//! Inference-time re-planning after a divergence.
//!
//! When the user performs a step other than the instructed one, the next
//! instruction depends on three decisions: which step was actually
//! performed, whether the current instruction should be repeated, and which
//! prerequisite steps are now implied done. A deterministic reference
//! implementation ships here so everything runs offline; the same decision
//! interface can be served by an external LLM process speaking a small
//! line-delimited protocol.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{RecipeGraph, StepId};
use crate::plan_builder::Plan;
use crate::textmetrics::{normalize_match, normalize_text, rouge_l};

#[derive(Debug, Error)]
pub enum ReplanError {
    #[error("no candidate steps to identify against")]
    NoCandidates,
    #[error("unknown step: {0}")]
    UnknownStep(String),
    #[error("missing field for prompt rendering: {0}")]
    MissingField(&'static str),
    #[error("re-planner protocol error: {0}")]
    Protocol(String),
    #[error("re-planner io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything the re-planner sees when invoked for one divergence.
#[derive(Debug, Clone)]
pub struct ReplanRequest {
    pub recipe_name: String,
    pub initial_plan: Plan,
    pub completed: Vec<StepId>,
    pub last_instruction: String,
    pub divergence_feedback: String,
    pub recipe_graph: RecipeGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplanDecision {
    pub performed_step_id: StepId,
    pub repeat_current: bool,
    pub updated_plan: Plan,
}

/// Pick the candidate step the feedback most likely describes: highest
/// token-level LCS F-score against the feedback, earliest plan position on
/// ties.
pub fn identify_performed_step(
    feedback: &str,
    candidates: &[(StepId, String)],
) -> Result<StepId, ReplanError> {
    if candidates.is_empty() {
        return Err(ReplanError::NoCandidates);
    }
    let feedback_tokens = normalize_text(feedback);
    let mut best: Option<(f64, usize)> = None;
    for (i, (_, text)) in candidates.iter().enumerate() {
        let tokens = normalize_text(text);
        let score = if tokens.is_empty() || feedback_tokens.is_empty() {
            0.0
        } else {
            rouge_l(&tokens, &feedback_tokens).expect("both sides non-empty")
        };
        let better = match best {
            None => true,
            Some((s, _)) => score > s,
        };
        if better {
            best = Some((score, i));
        }
    }
    let (_, idx) = best.expect("candidates are non-empty");
    Ok(candidates[idx].0.clone())
}

/// Reference repeat rule: repeat the current instruction unless it is an
/// ancestor of the performed step in the recipe graph, in which case its
/// effect is presumed subsumed.
pub fn decide_repeat_reference(
    request: &ReplanRequest,
    performed: &StepId,
) -> Result<bool, ReplanError> {
    let graph = &request.recipe_graph;
    if !graph.contains(performed) {
        return Err(ReplanError::UnknownStep(performed.to_string()));
    }
    let wanted = normalize_match(&request.last_instruction);
    let instructed = graph
        .steps
        .iter()
        .find(|s| normalize_match(&s.text) == wanted)
        .map(|s| &s.step_id)
        .ok_or_else(|| ReplanError::UnknownStep(request.last_instruction.clone()))?;
    Ok(!graph.reaches(instructed, performed))
}

/// Remove the performed step from the plan; when the current instruction is
/// not repeated, also remove every ancestor of the performed step still
/// present. Removing absent steps is a no-op.
pub fn apply_replan(
    plan: &Plan,
    performed: &StepId,
    repeat_current: bool,
    graph: &RecipeGraph,
) -> Plan {
    let mut drop: std::collections::HashSet<StepId> = std::collections::HashSet::new();
    drop.insert(performed.clone());
    if !repeat_current {
        drop.extend(graph.ancestors(performed));
    }
    let steps = plan
        .steps
        .iter()
        .filter_map(|step| {
            let entries: Vec<_> = step
                .entries
                .iter()
                .filter(|e| match &e.step_ref {
                    Some(r) => !drop.contains(r),
                    None => true,
                })
                .cloned()
                .collect();
            if entries.is_empty() {
                None
            } else {
                Some(crate::plan_builder::PlanStep { entries })
            }
        })
        .collect();
    Plan {
        steps,
        origin: plan.origin,
    }
}

fn python_list(items: &[String]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|s| format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", quoted.join(", "))
}

/// Render the two prompts handed to an external re-planner model. The first
/// retrieves the performed step; the second decides whether to repeat the
/// last instruction.
pub fn render_replanner_prompts(request: &ReplanRequest) -> Result<(String, String), ReplanError> {
    if request.recipe_name.is_empty() {
        return Err(ReplanError::MissingField("recipe_name"));
    }
    if request.last_instruction.is_empty() {
        return Err(ReplanError::MissingField("last_instruction"));
    }
    if request.divergence_feedback.is_empty() {
        return Err(ReplanError::MissingField("divergence_feedback"));
    }
    let recipe_steps = python_list(
        &request
            .recipe_graph
            .steps
            .iter()
            .map(|s| s.text.clone())
            .collect::<Vec<_>>(),
    );
    let mut completed_texts = Vec::with_capacity(request.completed.len());
    for id in &request.completed {
        let text = request
            .recipe_graph
            .step_text(id)
            .ok_or_else(|| ReplanError::UnknownStep(id.to_string()))?;
        completed_texts.push(text.to_string());
    }

    let prompt_1 = format!(
        "You are an expert cooking instructor. You are observing a user cooking a given recipe step by step.\n\
         \n\
         ##INSTRUCTIONS:\n\
         Here are the recipe steps: {recipe_steps}.\n\
         \n\
         The last instruction that you provided to the person is: {last_instruction}. \
         The person did not follow your instruction and performed a different recipe step by mistake \
         which did not correspond to the provided instruction. \
         So you provided this feedback to the person: {last_feedback}. \
         Which recipe step did the person likely perform instead of the step in the last instruction. \
         RETURN THE RECIPE STEP AS A PYTHON STRING. \
         ENSURE THAT YOU OUTPUT A RECIPE STEP AND DO NOT OUTPUT ANYTHING OTHER THAN A RECIPE STEP.\n",
        recipe_steps = recipe_steps,
        last_instruction = request.last_instruction,
        last_feedback = request.divergence_feedback,
    );

    let prompt_2 = format!(
        "You are an expert cooking assistant. You are helping a user to make {recipe_name}, \
         according to the following recipe steps: {recipe_steps}.\n\
         \n\
         ##INSTRUCTIONS:\n\
         The user has already completed {count} steps: {completed}.\n\
         Decide whether it is appropriate now to ask the user to {last_instructed_action}, \
         considering the effect of all the steps that the user performed.\n\
         Your answer must begin with 'Yes' or 'No', followed by an explanation.\n",
        recipe_name = request.recipe_name,
        recipe_steps = recipe_steps,
        count = request.completed.len(),
        completed = python_list(&completed_texts),
        last_instructed_action = request.last_instruction,
    );

    Ok((prompt_1, prompt_2))
}

/// Candidate (step_id, text) pairs in plan order, one per distinct step_ref.
pub fn plan_candidates(plan: &Plan) -> Vec<(StepId, String)> {
    let mut out: Vec<(StepId, String)> = Vec::new();
    for step in &plan.steps {
        for entry in &step.entries {
            if let Some(r) = &entry.step_ref {
                if !out.iter().any(|(id, _)| id == r) {
                    out.push((r.clone(), entry.description.clone()));
                }
            }
        }
    }
    out
}

/// Run the full reference decision: identify the performed step from the
/// divergence feedback, decide on repetition from graph reachability, and
/// update the remaining plan.
pub fn replan_reference(request: &ReplanRequest) -> Result<ReplanDecision, ReplanError> {
    let remaining = remaining_plan(request);
    let candidates = plan_candidates(&request.initial_plan);
    let performed = identify_performed_step(&request.divergence_feedback, &candidates)?;
    let repeat_current = decide_repeat_reference(request, &performed)?;
    let updated_plan = apply_replan(
        &remaining,
        &performed,
        repeat_current,
        &request.recipe_graph,
    );
    Ok(ReplanDecision {
        performed_step_id: performed,
        repeat_current,
        updated_plan,
    })
}

fn remaining_plan(request: &ReplanRequest) -> Plan {
    let mut plan = request.initial_plan.clone();
    for done in &request.completed {
        plan = apply_replan(&plan, done, true, &request.recipe_graph);
    }
    plan
}

/// Parse the second-call answer: the reply must begin with "Yes" or "No"
/// (case-insensitive); "Yes" means the current instruction is repeated.
pub fn parse_repeat_answer(answer: &str) -> Result<bool, ReplanError> {
    let trimmed = answer.trim_start();
    let lower = trimmed.to_lowercase();
    if lower.starts_with("yes") {
        Ok(true)
    } else if lower.starts_with("no") {
        Ok(false)
    } else {
        Err(ReplanError::Protocol(format!(
            "expected a leading Yes/No, got {:?}",
            answer.chars().take(32).collect::<String>()
        )))
    }
}

/// A backend answering the two re-planner calls. Implementations may be
/// remote; one instance serves one session, so concurrent sessions hold
/// concurrent backends.
pub trait ReplanBackend {
    fn identify_performed(&mut self, session_id: &str, prompt: &str)
        -> Result<StepId, ReplanError>;
    fn decide_repeat(&mut self, session_id: &str, prompt: &str) -> Result<bool, ReplanError>;
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum WireRequest<'a> {
    Identify {
        session_id: &'a str,
        prompt: &'a str,
    },
    Decide {
        session_id: &'a str,
        prompt: &'a str,
    },
}

#[derive(Debug, Deserialize)]
struct IdentifyReply {
    performed_step_id: StepId,
}

#[derive(Debug, Deserialize)]
struct DecideReply {
    answer: String,
}

/// Line-delimited JSON client over a spawned subprocess: one request line,
/// one reply line. The first call returns `{"performed_step_id": ...}`, the
/// second `{"answer": "Yes ..."}` whose leading Yes/No is parsed.
pub struct SubprocessReplanner {
    child: Child,
    reader: BufReader<std::process::ChildStdout>,
}

impl SubprocessReplanner {
    pub fn spawn(mut command: Command) -> Result<Self, ReplanError> {
        command.stdin(Stdio::piped()).stdout(Stdio::piped());
        let mut child = command.spawn()?;
        let stdout = child.stdout.take().expect("stdout is piped");
        Ok(SubprocessReplanner {
            child,
            reader: BufReader::new(stdout),
        })
    }

    fn exchange(&mut self, request: &WireRequest<'_>) -> Result<String, ReplanError> {
        let stdin = self
            .child
            .stdin
            .as_mut()
            .ok_or_else(|| ReplanError::Protocol("re-planner stdin closed".into()))?;
        let mut line =
            serde_json::to_string(request).map_err(|e| ReplanError::Protocol(e.to_string()))?;
        line.push('\n');
        stdin.write_all(line.as_bytes())?;
        stdin.flush()?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply)?;
        if n == 0 {
            return Err(ReplanError::Protocol("re-planner closed its stdout".into()));
        }
        Ok(reply)
    }
}

impl ReplanBackend for SubprocessReplanner {
    fn identify_performed(
        &mut self,
        session_id: &str,
        prompt: &str,
    ) -> Result<StepId, ReplanError> {
        let reply = self.exchange(&WireRequest::Identify { session_id, prompt })?;
        let parsed: IdentifyReply = serde_json::from_str(reply.trim())
            .map_err(|e| ReplanError::Protocol(format!("bad identify reply: {e}")))?;
        Ok(parsed.performed_step_id)
    }

    fn decide_repeat(&mut self, session_id: &str, prompt: &str) -> Result<bool, ReplanError> {
        let reply = self.exchange(&WireRequest::Decide { session_id, prompt })?;
        let parsed: DecideReply = serde_json::from_str(reply.trim())
            .map_err(|e| ReplanError::Protocol(format!("bad decide reply: {e}")))?;
        parse_repeat_answer(&parsed.answer)
    }
}

impl Drop for SubprocessReplanner {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{BenchmarkSet, RecipeStep};
    use crate::plan_builder::{PlanEntry, PlanStep};

    fn sid(s: &str) -> StepId {
        StepId(s.to_string())
    }

    fn graph(steps: &[(&str, &str)], edges: &[(&str, &str)]) -> RecipeGraph {
        RecipeGraph {
            steps: steps
                .iter()
                .map(|(id, text)| RecipeStep {
                    step_id: sid(id),
                    text: text.to_string(),
                })
                .collect(),
            edges: edges.iter().map(|(a, b)| (sid(a), sid(b))).collect(),
        }
    }

    fn plan_of(steps: &[(&str, &str)]) -> Plan {
        Plan {
            steps: steps
                .iter()
                .map(|(id, text)| PlanStep {
                    entries: vec![PlanEntry {
                        description: text.to_string(),
                        action_id: None,
                        step_ref: Some(sid(id)),
                    }],
                })
                .collect(),
            origin: BenchmarkSet::Advanced,
        }
    }

    fn request(
        graph: RecipeGraph,
        plan: Plan,
        last_instruction: &str,
        feedback: &str,
    ) -> ReplanRequest {
        ReplanRequest {
            recipe_name: "bruschetta".into(),
            initial_plan: plan,
            completed: vec![],
            last_instruction: last_instruction.into(),
            divergence_feedback: feedback.into(),
            recipe_graph: graph,
        }
    }

    #[test]
    fn identify_verbatim_quote_wins() {
        let candidates = vec![
            (sid("a"), "chop the onion".to_string()),
            (sid("b"), "slice the tomato".to_string()),
        ];
        let got = identify_performed_step("chop the onion", &candidates).unwrap();
        assert_eq!(got, sid("a"));
    }

    #[test]
    fn identify_scores_divergence_feedback() {
        // Brute-force check: LCS("you did not follow the instruction you
        // chopped the onion", "chop the onion") vs the other candidate.
        let candidates = vec![
            (sid("a"), "chop the onion".to_string()),
            (sid("b"), "slice the tomato".to_string()),
        ];
        let feedback = "You did not follow the instruction. You chopped the onion.";
        let got = identify_performed_step(feedback, &candidates).unwrap();
        assert_eq!(got, sid("a"));
    }

    #[test]
    fn identify_breaks_ties_by_plan_position() {
        let candidates = vec![
            (sid("first"), "stir the pot".to_string()),
            (sid("second"), "stir the pot".to_string()),
        ];
        let got = identify_performed_step("stir the pot", &candidates).unwrap();
        assert_eq!(got, sid("first"));
    }

    #[test]
    fn identify_requires_candidates() {
        assert!(matches!(
            identify_performed_step("anything", &[]),
            Err(ReplanError::NoCandidates)
        ));
    }

    #[test]
    fn identify_returns_a_candidate() {
        let candidates = vec![
            (sid("a"), "boil water".to_string()),
            (sid("b"), "grate cheese".to_string()),
        ];
        let got = identify_performed_step("completely unrelated words", &candidates).unwrap();
        assert!(candidates.iter().any(|(id, _)| *id == got));
    }

    #[test]
    fn repeat_unless_instructed_is_ancestor() {
        let g = graph(
            &[
                ("a", "boil water"),
                ("b", "add pasta"),
                ("c", "grate cheese"),
            ],
            &[("a", "b")],
        );
        let plan = plan_of(&[
            ("a", "boil water"),
            ("b", "add pasta"),
            ("c", "grate cheese"),
        ]);
        // Independent steps: repeat.
        let req = request(g.clone(), plan.clone(), "grate cheese", "feedback");
        assert!(decide_repeat_reference(&req, &sid("b")).unwrap());
        // Direct prerequisite: do not repeat.
        let req = request(g, plan, "boil water", "feedback");
        assert!(!decide_repeat_reference(&req, &sid("b")).unwrap());
    }

    #[test]
    fn repeat_decision_matches_reachability_oracle() {
        // Random-ish DAG over 6 nodes; the oracle is a plain DFS written
        // independently of RecipeGraph::reaches.
        fn dfs_reaches(edges: &[(usize, usize)], from: usize, to: usize) -> bool {
            if from == to {
                return true;
            }
            let mut seen = [false; 16];
            let mut stack = vec![from];
            while let Some(n) = stack.pop() {
                if n == to {
                    return true;
                }
                if !seen[n] {
                    seen[n] = true;
                    stack.extend(edges.iter().filter(|(a, _)| *a == n).map(|(_, b)| *b));
                }
            }
            false
        }

        let names = ["n0", "n1", "n2", "n3", "n4", "n5"];
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state = state
                .wrapping_mul(2862933555777941757)
                .wrapping_add(3037000493);
            (state >> 33) as usize
        };
        for _ in 0..50 {
            // Forward edges only, so the graph is acyclic.
            let mut edges = Vec::new();
            for i in 0..6 {
                for j in (i + 1)..6 {
                    if next() % 3 == 0 {
                        edges.push((i, j));
                    }
                }
            }
            let g = graph(
                &names
                    .map(|n| (n, n))
                    .to_vec()
                    .iter()
                    .map(|(a, b)| (*a, *b))
                    .collect::<Vec<_>>(),
                &edges
                    .iter()
                    .map(|(a, b)| (names[*a], names[*b]))
                    .collect::<Vec<_>>(),
            );
            let plan = plan_of(names.map(|n| (n, n)).as_ref());
            let instructed = next() % 6;
            let performed = next() % 6;
            let req = request(g, plan, names[instructed], "feedback");
            let want_repeat = !dfs_reaches(&edges, instructed, performed);
            assert_eq!(
                decide_repeat_reference(&req, &sid(names[performed])).unwrap(),
                want_repeat,
                "instructed {instructed} performed {performed} edges {edges:?}"
            );
        }
    }

    #[test]
    fn apply_replan_repeat_removes_only_performed() {
        let g = graph(
            &[("a", "a"), ("b", "b"), ("c", "c")],
            &[("a", "b"), ("b", "c")],
        );
        let plan = plan_of(&[("a", "a"), ("b", "b"), ("c", "c")]);
        let updated = apply_replan(&plan, &sid("b"), true, &g);
        let refs: Vec<&str> = updated
            .steps
            .iter()
            .map(|s| s.entries[0].step_ref.as_ref().unwrap().0.as_str())
            .collect();
        assert_eq!(refs, ["a", "c"]);
    }

    #[test]
    fn apply_replan_removes_transitive_ancestors() {
        let g = graph(
            &[("a", "a"), ("b", "b"), ("c", "c"), ("d", "d")],
            &[("a", "b"), ("b", "c")],
        );
        let plan = plan_of(&[("a", "a"), ("b", "b"), ("c", "c"), ("d", "d")]);
        let updated = apply_replan(&plan, &sid("c"), false, &g);
        let refs: Vec<&str> = updated
            .steps
            .iter()
            .map(|s| s.entries[0].step_ref.as_ref().unwrap().0.as_str())
            .collect();
        assert_eq!(refs, ["d"]);
    }

    #[test]
    fn apply_replan_absent_step_is_noop() {
        let g = graph(&[("a", "a")], &[]);
        let plan = plan_of(&[("a", "a")]);
        let updated = apply_replan(&plan, &sid("zz"), true, &g);
        assert_eq!(updated, plan);
    }

    #[test]
    fn apply_replan_never_grows_the_plan() {
        let g = graph(&[("a", "a"), ("b", "b"), ("c", "c")], &[("a", "c")]);
        let plan = plan_of(&[("a", "a"), ("b", "b"), ("c", "c")]);
        for step in ["a", "b", "c", "zz"] {
            for repeat in [true, false] {
                let updated = apply_replan(&plan, &sid(step), repeat, &g);
                assert!(updated.steps.len() <= plan.steps.len());
            }
        }
    }

    #[test]
    fn prompts_substitute_every_placeholder() {
        let g = graph(&[("a", "boil water"), ("b", "add pasta")], &[("a", "b")]);
        let plan = plan_of(&[("a", "boil water"), ("b", "add pasta")]);
        let req = request(
            g,
            plan,
            "boil water",
            "You did not follow the instruction. add pasta.",
        );
        let (p1, p2) = render_replanner_prompts(&req).unwrap();
        for p in [&p1, &p2] {
            assert!(
                !p.contains('[') || !p.contains("_steps]"),
                "unsubstituted placeholder: {p}"
            );
            assert!(!p.contains("[last_"), "unsubstituted placeholder: {p}");
            assert!(!p.contains("[recipe_"), "unsubstituted placeholder: {p}");
            assert!(!p.contains("[past_"), "unsubstituted placeholder: {p}");
        }
        assert!(p2.contains("already completed 0 steps"));
        assert!(p1.contains("'boil water', 'add pasta'"));
    }

    #[test]
    fn prompt_rendering_requires_fields() {
        let g = graph(&[("a", "a")], &[]);
        let plan = plan_of(&[("a", "a")]);
        let mut req = request(g, plan, "a", "fb");
        req.recipe_name = String::new();
        assert!(matches!(
            render_replanner_prompts(&req),
            Err(ReplanError::MissingField("recipe_name"))
        ));
    }

    #[test]
    fn parse_yes_no_answers() {
        assert!(parse_repeat_answer("Yes, because the step is unrelated.").unwrap());
        assert!(!parse_repeat_answer("No. The step is already done.").unwrap());
        assert!(!parse_repeat_answer("  no").unwrap());
        assert!(parse_repeat_answer("maybe").is_err());
    }

    #[test]
    fn reference_replan_end_to_end() {
        let g = graph(
            &[
                ("a", "boil water"),
                ("b", "add pasta"),
                ("c", "grate cheese"),
            ],
            &[("a", "b")],
        );
        let plan = plan_of(&[
            ("a", "boil water"),
            ("b", "add pasta"),
            ("c", "grate cheese"),
        ]);
        let req = request(
            g,
            plan,
            "boil water",
            "You did not follow the instruction. add pasta.",
        );
        let decision = replan_reference(&req).unwrap();
        assert_eq!(decision.performed_step_id, sid("b"));
        assert!(!decision.repeat_current);
        // b removed as performed, a removed as its ancestor.
        let refs: Vec<&str> = decision
            .updated_plan
            .steps
            .iter()
            .map(|s| s.entries[0].step_ref.as_ref().unwrap().0.as_str())
            .collect();
        assert_eq!(refs, ["c"]);
    }

    #[test]
    fn subprocess_backend_round_trip() {
        let script = r#"
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    if req["type"] == "identify":
        print(json.dumps({"performed_step_id": "b"}), flush=True)
    else:
        print(json.dumps({"answer": "No, that step is already covered."}), flush=True)
"#;
        let mut cmd = Command::new("python3");
        cmd.arg("-c").arg(script);
        let mut backend = SubprocessReplanner::spawn(cmd).unwrap();
        let performed = backend.identify_performed("s1", "prompt one").unwrap();
        assert_eq!(performed, sid("b"));
        let repeat = backend.decide_repeat("s1", "prompt two").unwrap();
        assert!(!repeat);
    }
}
