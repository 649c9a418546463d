//! Step-by-step plan construction.
//!
//! Main set: sort actions by start time (ascending) with end time descending
//! as the tie key, then fold temporally contained actions into compound
//! steps. Advanced set: append the recipe steps never performed in the video,
//! topologically sort everything against the recipe graph, and merge
//! consecutive descriptions only where the main-set plan already grouped
//! them.

use serde::Serialize;
use thiserror::Error;

use crate::data_model::{
    ActionId, ActionSegment, BenchmarkSet, RecipeGraph, StepId, VideoAnnotation,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("video has no actions")]
    EmptyVideo,
    #[error("recipe graph contains a cycle; no linearization exists")]
    Cycle,
    #[error("video cannot be topologically sorted: {0}")]
    Unsortable(String),
    #[error("advanced plan requires a recipe graph")]
    MissingGraph,
}

/// One planned item: an action performed in the video, or (advanced set)
/// a recipe step the user never performed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub description: String,
    pub action_id: Option<ActionId>,
    pub step_ref: Option<StepId>,
}

/// One step of the plan; compound steps carry several entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanStep {
    pub entries: Vec<PlanEntry>,
}

impl PlanStep {
    pub fn descriptions(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.description.as_str())
    }

    pub fn is_compound(&self) -> bool {
        self.entries.len() > 1
    }

    /// The instruction sentence for this step: all entry descriptions,
    /// joined in plan order.
    pub fn instruction_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| e.description.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub origin: BenchmarkSet,
}

impl Plan {
    pub fn step_texts(&self) -> Vec<String> {
        self.steps.iter().map(PlanStep::instruction_text).collect()
    }

    /// Index of the step holding `action_id`, if any.
    pub fn step_of_action(&self, action_id: ActionId) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.entries.iter().any(|e| e.action_id == Some(action_id)))
    }
}

/// The actions behind one plan-step-sized unit of work, with the span that
/// triggers the next instruction. Advanced plans keep the main set's groups
/// even when the plan order diverges, so groups carry action ids rather than
/// pointing at plan steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionGroup {
    pub action_ids: Vec<ActionId>,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionGroupSchedule {
    pub groups: Vec<ActionGroup>,
}

/// Stable sort by starting time ascending, ending time descending. Ties on
/// both keys keep input order.
pub fn sort_actions(actions: &[ActionSegment]) -> Vec<ActionSegment> {
    let mut sorted = actions.to_vec();
    sorted.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(b.end_s.total_cmp(&a.end_s))
    });
    sorted
}

/// Inclusive interval containment: [10, 20] contains [10, 20].
fn contains(outer: &ActionSegment, inner: &ActionSegment) -> bool {
    outer.start_s <= inner.start_s && inner.end_s <= outer.end_s
}

/// Fold sorted actions into compound groups. An action joins the open group
/// when some member of that group temporally contains it; otherwise it
/// starts a new group.
pub fn group_compound(sorted: &[ActionSegment]) -> Vec<Vec<ActionSegment>> {
    let mut groups: Vec<Vec<ActionSegment>> = Vec::new();
    for action in sorted {
        match groups.last_mut() {
            Some(group) if group.iter().any(|member| contains(member, action)) => {
                group.push(action.clone());
            }
            _ => groups.push(vec![action.clone()]),
        }
    }
    groups
}

fn schedule_from_groups(groups: &[Vec<ActionSegment>]) -> ActionGroupSchedule {
    let groups = groups
        .iter()
        .map(|group| ActionGroup {
            action_ids: group.iter().map(|a| a.action_id).collect(),
            start_s: group
                .iter()
                .map(|a| a.start_s)
                .fold(f64::INFINITY, f64::min),
            end_s: group
                .iter()
                .map(|a| a.end_s)
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    ActionGroupSchedule { groups }
}

fn entry_for(action: &ActionSegment) -> PlanEntry {
    PlanEntry {
        description: action.description.clone(),
        action_id: Some(action.action_id),
        step_ref: action.step_ref.clone(),
    }
}

/// Build the main-set plan: one step per compound group, in time order.
pub fn build_main_plan(video: &VideoAnnotation) -> Result<(Plan, ActionGroupSchedule), PlanError> {
    if video.actions.is_empty() {
        return Err(PlanError::EmptyVideo);
    }
    let sorted = sort_actions(&video.actions);
    let groups = group_compound(&sorted);
    let steps = groups
        .iter()
        .map(|group| PlanStep {
            entries: group.iter().map(entry_for).collect(),
        })
        .collect();
    Ok((
        Plan {
            steps,
            origin: BenchmarkSet::Main,
        },
        schedule_from_groups(&groups),
    ))
}

/// Kahn's algorithm with a deterministic tie-break: among simultaneously
/// available nodes, the one earliest in `priority` is emitted first.
pub fn kahn_topo_sort(graph: &RecipeGraph, priority: &[StepId]) -> Result<Vec<StepId>, PlanError> {
    let rank_of = |id: &StepId| -> Result<usize, PlanError> {
        priority
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| PlanError::Unsortable(format!("step {id} missing from priority list")))
    };

    let mut indegree: Vec<(usize, &StepId, usize)> = Vec::with_capacity(graph.steps.len());
    for step in &graph.steps {
        let deg = graph
            .edges
            .iter()
            .filter(|(_, to)| *to == step.step_id)
            .count();
        indegree.push((rank_of(&step.step_id)?, &step.step_id, deg));
    }

    let mut order = Vec::with_capacity(graph.steps.len());
    while order.len() < graph.steps.len() {
        let Some(pick) = indegree
            .iter()
            .filter(|(_, id, deg)| *deg == 0 && !order.contains(*id))
            .min_by_key(|(rank, _, _)| *rank)
            .map(|(_, id, _)| (*id).clone())
        else {
            return Err(PlanError::Cycle);
        };
        for (_, id, deg) in indegree.iter_mut() {
            if graph
                .edges
                .iter()
                .any(|(from, to)| *from == pick && to == *id)
            {
                *deg -= 1;
            }
        }
        order.push(pick);
    }
    Ok(order)
}

/// Build the advanced-set plan. Performed actions keep their main-set order
/// as the topological tie-break priority; recipe steps never performed are
/// appended after them. The returned schedule stays identical to the
/// main-set schedule: divergence shows up as a mismatch between plan order
/// and group order, not as a different schedule.
pub fn build_advanced_plan(
    video: &VideoAnnotation,
) -> Result<(Plan, ActionGroupSchedule), PlanError> {
    if video.actions.is_empty() {
        return Err(PlanError::EmptyVideo);
    }
    let graph = video.recipe_graph.as_ref().ok_or(PlanError::MissingGraph)?;
    let sorted = sort_actions(&video.actions);
    let groups = group_compound(&sorted);

    // Performed steps in main-set order first, missing steps appended in
    // graph declaration order.
    let mut priority: Vec<StepId> = Vec::new();
    for action in &sorted {
        let step_ref = action.step_ref.as_ref().ok_or_else(|| {
            PlanError::Unsortable(format!("action {} has no step_ref", action.action_id))
        })?;
        if !graph.contains(step_ref) {
            return Err(PlanError::Unsortable(format!(
                "action {} references step {step_ref} absent from the recipe graph",
                action.action_id
            )));
        }
        if !priority.contains(step_ref) {
            priority.push(step_ref.clone());
        }
    }
    for step in &graph.steps {
        if !priority.contains(&step.step_id) {
            priority.push(step.step_id.clone());
        }
    }

    let order = kahn_topo_sort(graph, &priority)?;

    let mut steps: Vec<PlanStep> = Vec::new();
    for step_id in &order {
        let performed: Vec<&ActionSegment> = sorted
            .iter()
            .filter(|a| a.step_ref.as_ref() == Some(step_id))
            .collect();
        let entries = if performed.is_empty() {
            let text = graph
                .step_text(step_id)
                .expect("step ids come from the graph")
                .to_string();
            vec![PlanEntry {
                description: text,
                action_id: None,
                step_ref: Some(step_id.clone()),
            }]
        } else {
            performed.into_iter().map(entry_for).collect()
        };
        steps.push(PlanStep { entries });
    }

    let steps = merge_like_main(steps, &groups);

    Ok((
        Plan {
            steps,
            origin: BenchmarkSet::Advanced,
        },
        schedule_from_groups(&groups),
    ))
}

/// Merge consecutive steps into one only when the main-set plan has a
/// compound step with exactly those descriptions.
fn merge_like_main(steps: Vec<PlanStep>, main_groups: &[Vec<ActionSegment>]) -> Vec<PlanStep> {
    let mut compound_keys: Vec<Vec<String>> = main_groups
        .iter()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let mut key: Vec<String> = g.iter().map(|a| a.description.clone()).collect();
            key.sort();
            key
        })
        .collect();
    compound_keys.sort_by_key(|k| std::cmp::Reverse(k.len()));

    if compound_keys.is_empty() {
        return steps;
    }

    let mut merged: Vec<PlanStep> = Vec::new();
    let mut i = 0;
    'outer: while i < steps.len() {
        for key in &compound_keys {
            // Find the shortest run starting at i whose flattened
            // descriptions form exactly this compound step.
            let mut run_descriptions: Vec<String> = Vec::new();
            let mut j = i;
            while j < steps.len() && run_descriptions.len() < key.len() {
                run_descriptions.extend(steps[j].descriptions().map(str::to_string));
                j += 1;
            }
            if j > i + 1 && run_descriptions.len() == key.len() {
                let mut sorted_run = run_descriptions.clone();
                sorted_run.sort();
                if &sorted_run == key {
                    let entries = steps[i..j]
                        .iter()
                        .flat_map(|s| s.entries.iter().cloned())
                        .collect();
                    merged.push(PlanStep { entries });
                    i = j;
                    continue 'outer;
                }
            }
        }
        merged.push(steps[i].clone());
        i += 1;
    }
    merged
}

/// Dispatch on the video's set.
pub fn build_plan(video: &VideoAnnotation) -> Result<(Plan, ActionGroupSchedule), PlanError> {
    match video.set {
        BenchmarkSet::Main => build_main_plan(video),
        BenchmarkSet::Advanced => build_advanced_plan(video),
    }
}
