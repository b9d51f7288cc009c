//! Multi-turn tool-call trajectory synthesis.
//!
//! The golden-plan mode walks a composed plan: each turn pairs a reasoning
//! trace with the plan's golden call, and a simulator produces the
//! observation, so no step depends on the network. A state transition
//! mechanism decides what happens after each observation: proceed, branch
//! on a condition, ask the user for masked parameters, or terminate.
//! Open-ended long-horizon synthesis lives in [`longhorizon`].

pub mod longhorizon;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationRequest, GrammarId, TextGenerator};
use crate::catalog::{Tool, ToolCatalog};
use crate::entities::value_for_param;
use crate::plan::{ComposedPlan, PlanEdgeKind, STEP_PLACEHOLDER_PREFIX};
use crate::textutil::fnv1a64;

/// A concrete tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: BTreeMap<String, serde_json::Value>,
}

impl ToolCall {
    pub fn to_json(&self) -> serde_json::Value {
        let mut arguments = serde_json::Map::new();
        for (k, v) in &self.arguments {
            arguments.insert(k.clone(), v.clone());
        }
        serde_json::json!({"name": self.name, "arguments": arguments})
    }
}

/// What the agent does in one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum AgentAction {
    Calls { calls: Vec<ToolCall> },
    /// Ask the user for missing required parameters.
    Clarify {
        content: String,
        params: BTreeSet<String>,
    },
    /// Non-terminal progress reply between rounds.
    Reply { content: String },
    /// Terminal summary.
    Finish { content: String },
}

/// One (think, action, observation) record, with the user text that
/// triggered it when this turn opened a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(default)]
    pub query: Option<String>,
    pub think: String,
    pub action: AgentAction,
    #[serde(default)]
    pub observation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryLabel {
    Successful,
    Unsuccessful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub turns: Vec<Turn>,
    pub label: TrajectoryLabel,
    pub domain_tag: String,
}

/// Decision taken after an observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    Standard,
    ConditionalBranch(usize),
    UserClarification(BTreeSet<String>),
    Termination,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("reasoning names {found:?} but the golden action is {expected}")]
    ConsistencyFailure { expected: String, found: Vec<String> },
    #[error("conditional edge references field `{field}` absent from the observation")]
    UnresolvableCondition { field: String },
    #[error("plan is not executable: {0}")]
    BadPlan(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Produces environment observations for tool calls.
pub trait Simulator: Send + Sync {
    fn observe(&self, tool: &Tool, call: &ToolCall) -> Result<String, BackendError>;
}

/// Templated simulator keyed by the tool's output schema: a success
/// envelope with one synthetic value per output field, deterministic in
/// (tool, arguments).
#[derive(Debug, Clone, Default)]
pub struct StubSimulator;

impl Simulator for StubSimulator {
    fn observe(&self, tool: &Tool, call: &ToolCall) -> Result<String, BackendError> {
        let seed = fnv1a64(
            format!("{}|{}", tool.name, serde_json::to_string(&call.arguments).unwrap())
                .as_bytes(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut result = serde_json::Map::new();
        for field in &tool.output_schema {
            let value = match field.semantic_type.as_str() {
                "number" | "integer" => {
                    serde_json::json!(value_for_param(&field.name, "number", &mut rng)
                        .parse::<i64>()
                        .unwrap_or(1))
                }
                "list" => serde_json::json!([value_for_param(&field.name, "string", &mut rng)]),
                _ if field.name.contains("status") => serde_json::json!("success"),
                _ => serde_json::json!(value_for_param(&field.name, "string", &mut rng)),
            };
            result.insert(field.name.clone(), value);
        }
        let envelope = serde_json::json!({
            "status": "success",
            "message": format!("{} completed", tool.name),
            "tool_result": result,
        });
        Ok(envelope.to_string())
    }
}

/// Backends one episode needs.
pub struct TrajectoryBackends<'a> {
    pub generator: &'a dyn TextGenerator,
    pub simulator: &'a dyn Simulator,
}

/// Mutable state of one golden-plan episode.
pub struct EpisodeState<'a> {
    pub plan: &'a ComposedPlan,
    pub catalog: &'a ToolCatalog,
    order: Vec<usize>,
    /// Position in `order` of the next node to execute.
    cursor: usize,
    executed: BTreeSet<usize>,
    skipped: BTreeSet<usize>,
    observations: BTreeMap<usize, serde_json::Value>,
    clarified: BTreeMap<String, String>,
    seed: u64,
}

impl<'a> EpisodeState<'a> {
    pub fn new(
        plan: &'a ComposedPlan,
        catalog: &'a ToolCatalog,
        seed: u64,
    ) -> Result<Self, TrajectoryError> {
        let order = plan
            .topo_order()
            .map_err(|e| TrajectoryError::BadPlan(e.to_string()))?;
        Ok(Self {
            plan,
            catalog,
            order,
            cursor: 0,
            executed: BTreeSet::new(),
            skipped: BTreeSet::new(),
            observations: BTreeMap::new(),
            clarified: BTreeMap::new(),
            seed,
        })
    }

    pub fn current_node(&self) -> Option<usize> {
        self.order.get(self.cursor).copied()
    }

    fn last_executed(&self) -> Option<usize> {
        self.order[..self.cursor]
            .iter()
            .rev()
            .find(|i| self.executed.contains(i))
            .copied()
    }

    /// Record the user's answer to a clarification request.
    pub fn provide_clarification(&mut self, param: &str, value: &str) {
        self.clarified.insert(param.to_string(), value.to_string());
    }

    /// Pending masked parameters of the next call.
    fn pending_masks(&self, node: usize) -> BTreeSet<String> {
        self.plan.nodes[node]
            .masked_params
            .iter()
            .filter(|p| !self.clarified.contains_key(*p))
            .cloned()
            .collect()
    }

    /// Resolve the golden call for a node: placeholders are filled from
    /// recorded observations, masked parameters from clarified values.
    pub fn golden_call(&self, node: usize) -> Result<ToolCall, TrajectoryError> {
        let sub = &self.plan.nodes[node];
        let mut arguments: BTreeMap<String, serde_json::Value> = BTreeMap::new();
        for (name, value) in &sub.bound_args {
            if let Some(rest) = value.strip_prefix(STEP_PLACEHOLDER_PREFIX) {
                let (step, field) = rest
                    .split_once('.')
                    .ok_or_else(|| TrajectoryError::BadPlan(format!("bad placeholder {value}")))?;
                let step_idx: usize = step
                    .parse()
                    .map_err(|_| TrajectoryError::BadPlan(format!("bad placeholder {value}")))?;
                let source_node = *self.order.get(step_idx - 1).ok_or_else(|| {
                    TrajectoryError::BadPlan(format!("placeholder {value} out of range"))
                })?;
                let observation = self.observations.get(&source_node).ok_or_else(|| {
                    TrajectoryError::BadPlan(format!(
                        "placeholder {value} references an unexecuted step"
                    ))
                })?;
                let resolved = find_field(observation, field)
                    .cloned()
                    .unwrap_or(serde_json::Value::String(String::new()));
                arguments.insert(name.clone(), resolved);
            } else {
                arguments.insert(name.clone(), serde_json::Value::String(value.clone()));
            }
        }
        for param in &sub.masked_params {
            if let Some(value) = self.clarified.get(param) {
                arguments.insert(param.clone(), serde_json::Value::String(value.clone()));
            }
        }
        Ok(ToolCall {
            name: sub.tool.clone(),
            arguments,
        })
    }

    fn record_execution(&mut self, node: usize, observation: &str) {
        let parsed: serde_json::Value = crate::textutil::parse_loose_json(observation)
            .unwrap_or(serde_json::Value::String(observation.to_string()));
        self.observations.insert(node, parsed);
        self.executed.insert(node);
        self.cursor += 1;
    }
}

/// Search an observation document for a field by name (top level first,
/// then nested objects and arrays).
pub fn find_field<'v>(value: &'v serde_json::Value, name: &str) -> Option<&'v serde_json::Value> {
    match value {
        serde_json::Value::Object(map) => {
            if let Some(hit) = map.get(name) {
                return Some(hit);
            }
            map.values().find_map(|v| find_field(v, name))
        }
        serde_json::Value::Array(items) => items.iter().find_map(|v| find_field(v, name)),
        _ => None,
    }
}

/// Evaluate a conditional-edge condition against an observation.
/// Supported shapes: `field == value`, `field indicates success`,
/// `field non-empty`.
pub fn resolve_condition(
    condition: &str,
    observation: &serde_json::Value,
) -> Result<bool, TrajectoryError> {
    let condition = condition.trim();
    if let Some((field, expected)) = condition.split_once("==") {
        let field = field.trim();
        let expected = expected.trim().trim_matches(|c| c == '"' || c == '\'');
        let value = find_field(observation, field).ok_or_else(|| {
            TrajectoryError::UnresolvableCondition { field: field.to_string() }
        })?;
        let actual = match value {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        return Ok(actual == expected);
    }
    if let Some(field) = condition.strip_suffix("indicates success") {
        let field = field.trim();
        let value = find_field(observation, field).ok_or_else(|| {
            TrajectoryError::UnresolvableCondition { field: field.to_string() }
        })?;
        return Ok(match value {
            serde_json::Value::Bool(b) => *b,
            serde_json::Value::String(s) => {
                let lower = s.to_lowercase();
                lower.contains("success") || lower == "ok" || s.contains("成功")
            }
            _ => false,
        });
    }
    if let Some(field) = condition.strip_suffix("non-empty") {
        let field = field.trim();
        let value = find_field(observation, field).ok_or_else(|| {
            TrajectoryError::UnresolvableCondition { field: field.to_string() }
        })?;
        return Ok(match value {
            serde_json::Value::Null => false,
            serde_json::Value::String(s) => !s.is_empty(),
            serde_json::Value::Array(a) => !a.is_empty(),
            serde_json::Value::Object(o) => !o.is_empty(),
            _ => true,
        });
    }
    // unrecognized condition languages fail closed as unresolvable
    Err(TrajectoryError::UnresolvableCondition {
        field: condition.to_string(),
    })
}

/// Decide what happens next given the latest observation. Conditional
/// edges whose condition resolves false skip their target node.
pub fn transition(
    state: &mut EpisodeState<'_>,
    observation: &serde_json::Value,
) -> Result<Transition, TrajectoryError> {
    loop {
        let Some(next) = state.current_node() else {
            return Ok(Transition::Termination);
        };
        let masks = state.pending_masks(next);
        if !masks.is_empty() {
            return Ok(Transition::UserClarification(masks));
        }
        let incoming_conditional = state.last_executed().and_then(|prev| {
            state.plan.edges.iter().find_map(|e| match &e.kind {
                PlanEdgeKind::Conditional(c) if e.from == prev && e.to == next => {
                    Some(c.clone())
                }
                _ => None,
            })
        });
        match incoming_conditional {
            Some(condition) => {
                if resolve_condition(&condition, observation)? {
                    return Ok(Transition::ConditionalBranch(next));
                }
                // condition is false: this sub-task is not executed
                state.skipped.insert(next);
                state.cursor += 1;
            }
            None => return Ok(Transition::Standard),
        }
    }
}

fn consistency_check(
    think: &str,
    golden: &str,
    catalog: &ToolCatalog,
) -> Result<(), TrajectoryError> {
    let mentioned: Vec<String> = catalog
        .ids()
        .iter()
        .filter(|id| think.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !mentioned.is_empty() && !mentioned.iter().any(|m| m == golden) {
        return Err(TrajectoryError::ConsistencyFailure {
            expected: golden.to_string(),
            found: mentioned,
        });
    }
    Ok(())
}

/// Synthesize one (think, action, observation) turn for the node at the
/// episode cursor. The action is the plan's golden call; the reasoning
/// trace must name that tool.
pub fn synthesize_turn(
    state: &mut EpisodeState<'_>,
    backends: &TrajectoryBackends<'_>,
) -> Result<Turn, TrajectoryError> {
    let node = state
        .current_node()
        .ok_or_else(|| TrajectoryError::BadPlan("no pending node".into()))?;
    let call = state.golden_call(node)?;
    let sub = &state.plan.nodes[node];
    let payload = serde_json::json!({
        "query": state.plan.query_turns.join(" "),
        "history": state
            .executed
            .iter()
            .map(|i| state.plan.nodes[*i].intent.clone())
            .collect::<Vec<_>>(),
        "tool": sub.tool,
        "intent": sub.intent,
    });
    let request = GenerationRequest::new(
        format!("Write the reasoning for the next step.\n{payload}"),
        GrammarId::Reasoning,
        state.seed ^ node as u64,
    );
    let think = backends.generator.generate(&request)?;
    consistency_check(&think, &sub.tool, state.catalog)?;

    let tool = state
        .catalog
        .get(&sub.tool)
        .ok_or_else(|| TrajectoryError::BadPlan(format!("unknown tool {}", sub.tool)))?;
    let observation = backends.simulator.observe(tool, &call)?;
    state.record_execution(node, &observation);
    Ok(Turn {
        query: None,
        think,
        action: AgentAction::Calls { calls: vec![call] },
        observation: Some(observation),
    })
}

/// Execution limits for an episode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub max_steps: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self { max_steps: 24 }
    }
}

/// Drive one golden-plan episode to completion.
///
/// The label is machine-checked: successful iff every plan node was
/// executed or skipped by a false condition within the step limit.
pub fn synthesize_plan_trajectory(
    plan: &ComposedPlan,
    catalog: &ToolCatalog,
    backends: &TrajectoryBackends<'_>,
    limits: EpisodeLimits,
    seed: u64,
) -> Result<Trajectory, TrajectoryError> {
    let mut state = EpisodeState::new(plan, catalog, seed)?;
    let mut turns: Vec<Turn> = Vec::new();
    let mut pending_query = Some(plan.query_turns.join(" "));
    let mut last_observation = serde_json::Value::Null;
    let mut steps = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636c_6172);

    loop {
        if steps >= limits.max_steps {
            return Ok(Trajectory {
                turns,
                label: TrajectoryLabel::Unsuccessful,
                domain_tag: "golden_plan".into(),
            });
        }
        match transition(&mut state, &last_observation)? {
            Transition::Termination => {
                let done: Vec<String> = state
                    .executed
                    .iter()
                    .map(|i| plan.nodes[*i].intent.clone())
                    .collect();
                turns.push(Turn {
                    query: pending_query.take(),
                    think: "Every required sub-task is complete; time to summarize.".into(),
                    action: AgentAction::Finish {
                        content: format!("All steps are done: {}", done.join(" / ")),
                    },
                    observation: None,
                });
                let all_handled = state.executed.len() + state.skipped.len() == plan.nodes.len();
                return Ok(Trajectory {
                    turns,
                    label: if all_handled {
                        TrajectoryLabel::Successful
                    } else {
                        TrajectoryLabel::Unsuccessful
                    },
                    domain_tag: "golden_plan".into(),
                });
            }
            Transition::UserClarification(params) => {
                let ask = params.iter().cloned().collect::<Vec<_>>().join(", ");
                turns.push(Turn {
                    query: pending_query.take(),
                    think: format!("Required parameter(s) {ask} are missing; I must ask the user."),
                    action: AgentAction::Clarify {
                        content: format!("Could you tell me the {ask}?"),
                        params: params.clone(),
                    },
                    observation: None,
                });
                let mut answer_parts = Vec::new();
                for param in &params {
                    let value = value_for_param(param, "string", &mut rng);
                    answer_parts.push(format!("The {param} is {value}."));
                    state.provide_clarification(param, &value);
                }
                pending_query = Some(answer_parts.join(" "));
                steps += 1;
            }
            Transition::Standard | Transition::ConditionalBranch(_) => {
                let mut turn = synthesize_turn(&mut state, backends)?;
                turn.query = pending_query.take();
                if let Some(obs) = &turn.observation {
                    last_observation = crate::textutil::parse_loose_json(obs)
                        .unwrap_or(serde_json::Value::Null);
                }
                turns.push(turn);
                steps += 1;
            }
        }
    }
}

/// Serialize a trajectory as chat messages: assistant turns carry
/// `<think>`/`<action>` tags, observations come back as user turns
/// wrapped in `<observation>`.
pub fn to_chat_messages(trajectory: &Trajectory) -> serde_json::Value {
    let mut messages = Vec::new();
    for turn in &trajectory.turns {
        if let Some(query) = &turn.query {
            messages.push(serde_json::json!({"role": "user", "content": query}));
        }
        let action_payload = match &turn.action {
            AgentAction::Calls { calls } => {
                if calls.len() == 1 {
                    calls[0].to_json().to_string()
                } else {
                    serde_json::Value::Array(calls.iter().map(|c| c.to_json()).collect())
                        .to_string()
                }
            }
            AgentAction::Clarify { content, .. } | AgentAction::Reply { content } => {
                serde_json::json!({"name": "reply", "arguments": {"content": content}}).to_string()
            }
            AgentAction::Finish { content } => {
                serde_json::json!({"name": "finish", "arguments": {"content": content}})
                    .to_string()
            }
        };
        messages.push(serde_json::json!({
            "role": "assistant",
            "content": format!("<think>\n{}\n</think>\n<action>{}</action>", turn.think, action_payload),
        }));
        if let Some(observation) = &turn.observation {
            messages.push(serde_json::json!({
                "role": "user",
                "content": format!("<observation>{observation}</observation>"),
            }));
        }
    }
    serde_json::json!({"messages": messages})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::TemplateBackend;
    use crate::catalog::{build_graphs, Relation, SelectionKind, ToolSelection};
    use crate::entities::demo_catalog;
    use crate::plan::{synthesize_atomic, Composer, Operator, SubTask};
    use crate::quality::TaskKind;

    fn backends<'a>(
        generator: &'a TemplateBackend,
        simulator: &'a StubSimulator,
    ) -> TrajectoryBackends<'a> {
        TrajectoryBackends {
            generator,
            simulator,
        }
    }

    fn serial_plan(catalog: &ToolCatalog, seed: u64) -> ComposedPlan {
        let graphs = build_graphs(catalog);
        let selection = ToolSelection {
            kind: SelectionKind::Serial,
            tools: vec!["search_hotel".into(), "book_hotel".into()],
            relation: Relation::Causal,
        };
        let atomic =
            synthesize_atomic(&selection, catalog, &graphs, &TemplateBackend, seed).unwrap();
        ComposedPlan::from_atomic(&atomic)
    }

    #[test]
    fn golden_action_carries_the_bound_arguments() {
        let catalog = demo_catalog();
        // sub-task bound the way the booking fixture binds it
        let plan = ComposedPlan {
            id: "p".into(),
            query_turns: vec!["book the hotel".into()],
            nodes: vec![SubTask {
                tool: "book_hotel".into(),
                intent: "Book a hotel room in a given city".into(),
                bound_args: [
                    ("app".to_string(), "美团".to_string()),
                    ("city_slot".to_string(), "杭州".to_string()),
                    ("hotel_slot".to_string(), "西湖酒店".to_string()),
                ]
                .into_iter()
                .collect(),
                masked_params: BTreeSet::new(),
            }],
            edges: vec![],
            provenance: vec![],
            reply: "done".into(),
        };
        let state = EpisodeState::new(&plan, &catalog, 1).unwrap();
        let call = state.golden_call(0).unwrap();
        assert_eq!(call.name, "book_hotel");
        assert_eq!(call.arguments["city_slot"], "杭州");
    }

    #[test]
    fn stub_simulator_reports_success_and_booking_id() {
        let catalog = demo_catalog();
        let tool = catalog.get("book_hotel").unwrap();
        let call = ToolCall {
            name: "book_hotel".into(),
            arguments: BTreeMap::new(),
        };
        let observation = StubSimulator.observe(tool, &call).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&observation).unwrap();
        assert_eq!(parsed["status"], "success");
        assert!(parsed["tool_result"]["booking_id"].is_string());
        // deterministic
        assert_eq!(observation, StubSimulator.observe(tool, &call).unwrap());
    }

    #[test]
    fn consistency_failure_when_reasoning_names_another_tool() {
        let catalog = demo_catalog();
        let err = consistency_check(
            "I should call search_location to find restaurants.",
            "book_hotel",
            &catalog,
        )
        .unwrap_err();
        match err {
            TrajectoryError::ConsistencyFailure { expected, found } => {
                assert_eq!(expected, "book_hotel");
                assert_eq!(found, vec!["search_location".to_string()]);
            }
            other => panic!("unexpected {other}"),
        }
        consistency_check("I will call book_hotel now.", "book_hotel", &catalog).unwrap();
    }

    #[test]
    fn transition_standard_then_termination() {
        let catalog = demo_catalog();
        let plan = serial_plan(&catalog, 7);
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let b = backends(&generator, &simulator);
        let mut state = EpisodeState::new(&plan, &catalog, 7).unwrap();
        assert_eq!(
            transition(&mut state, &serde_json::Value::Null).unwrap(),
            Transition::Standard
        );
        synthesize_turn(&mut state, &b).unwrap();
        assert_eq!(
            transition(&mut state, &serde_json::Value::Null).unwrap(),
            Transition::Standard
        );
        synthesize_turn(&mut state, &b).unwrap();
        assert_eq!(
            transition(&mut state, &serde_json::Value::Null).unwrap(),
            Transition::Termination
        );
    }

    #[test]
    fn transition_asks_for_masked_parameters() {
        let catalog = demo_catalog();
        let mut plan = serial_plan(&catalog, 9);
        plan.nodes[0]
            .masked_params
            .insert("check_in_date_slot".to_string());
        plan.nodes[0].bound_args.remove("check_in_date_slot");
        let mut state = EpisodeState::new(&plan, &catalog, 9).unwrap();
        match transition(&mut state, &serde_json::Value::Null).unwrap() {
            Transition::UserClarification(params) => {
                assert!(params.contains("check_in_date_slot"));
            }
            other => panic!("unexpected {other:?}"),
        }
        state.provide_clarification("check_in_date_slot", "2026-11-05");
        assert_eq!(
            transition(&mut state, &serde_json::Value::Null).unwrap(),
            Transition::Standard
        );
    }

    #[test]
    fn conditional_branch_follows_the_matched_observation_field() {
        let catalog = demo_catalog();
        let graphs = build_graphs(&catalog);
        let plan = serial_plan(&catalog, 3);
        let composer = Composer::new(&catalog, &graphs);
        let conditional = composer
            .compose(Operator::Transform, &[&plan], 11)
            .unwrap();
        let condition = conditional
            .edges
            .iter()
            .find_map(|e| match &e.kind {
                PlanEdgeKind::Conditional(c) => Some(c.clone()),
                _ => None,
            })
            .unwrap();

        // replay a booking-style observation through the matcher
        let success = serde_json::json!({
            "status": "success",
            "tool_result": {"reservation_status": "预定成功", "hotel_slot": "西湖酒店"}
        });
        // the templated condition references the upstream output schema
        assert!(resolve_condition(&condition, &success).unwrap());
        assert!(resolve_condition("reservation_status == 预定成功", &success).unwrap());
        assert!(!resolve_condition("reservation_status == 已取消", &success).unwrap());
        let missing = serde_json::json!({"status": "success"});
        assert!(matches!(
            resolve_condition("reservation_status == 预定成功", &missing),
            Err(TrajectoryError::UnresolvableCondition { .. })
        ));

        // end to end: the branch target executes when the condition holds
        let mut state = EpisodeState::new(&conditional, &catalog, 3).unwrap();
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let b = backends(&generator, &simulator);
        synthesize_turn(&mut state, &b).unwrap();
        let observation = state.observations.values().next().unwrap().clone();
        match transition(&mut state, &observation).unwrap() {
            Transition::ConditionalBranch(target) => assert_eq!(target, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_episode_is_successful_and_serializable() {
        let catalog = demo_catalog();
        let plan = serial_plan(&catalog, 5);
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let trajectory = synthesize_plan_trajectory(
            &plan,
            &catalog,
            &backends(&generator, &simulator),
            EpisodeLimits::default(),
            5,
        )
        .unwrap();
        assert_eq!(trajectory.label, TrajectoryLabel::Successful);
        // the placeholder argument resolved to the simulated hotel value
        let AgentAction::Calls { calls } = &trajectory.turns[1].action else {
            panic!("second turn must call book_hotel")
        };
        assert_eq!(calls[0].name, "book_hotel");
        assert!(calls[0].arguments["hotel_slot"].is_string());
        assert_ne!(calls[0].arguments["hotel_slot"], "");

        let chat = to_chat_messages(&trajectory);
        let messages = chat["messages"].as_array().unwrap();
        assert_eq!(messages[0]["role"], "user");
        for message in messages {
            let content = message["content"].as_str().unwrap();
            if message["role"] == "assistant" {
                crate::quality::validate_schema(content, TaskKind::ToolPlan).unwrap();
            }
            if content.starts_with("<observation>") {
                assert!(content.ends_with("</observation>"));
            }
        }
        // deterministic under the stub backends
        let again = synthesize_plan_trajectory(
            &plan,
            &catalog,
            &backends(&generator, &simulator),
            EpisodeLimits::default(),
            5,
        )
        .unwrap();
        assert_eq!(trajectory, again);
    }

    #[test]
    fn step_limit_marks_the_episode_unsuccessful() {
        let catalog = demo_catalog();
        let plan = serial_plan(&catalog, 6);
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let trajectory = synthesize_plan_trajectory(
            &plan,
            &catalog,
            &backends(&generator, &simulator),
            EpisodeLimits { max_steps: 1 },
            6,
        )
        .unwrap();
        assert_eq!(trajectory.label, TrajectoryLabel::Unsuccessful);
    }
}
