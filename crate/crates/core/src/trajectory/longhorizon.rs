//! Long-horizon task construction, seed trajectory synthesis and
//! filtering, and seed-based scaling.
//!
//! A task bundles an initial setup (requirement, known info, rules), a
//! candidate tool list drawn from sampled atomic tasks, and a termination
//! predicate: all requirements fulfilled, or tool usage crossing the
//! configured fraction of the candidates. Successful, format-valid
//! trajectories become seeds; each seed carries its used tools plus the
//! top related tools, one per distinct atomic task.

use std::collections::{BTreeMap, BTreeSet};


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::*;
use crate::backend::Embedder;
use crate::plan::AtomicPlan;
use crate::quality::TaskKind;
use crate::reward::{parse_output, ExecutedCall, ParsedOutput};

/// An atomic task: an identified atomic plan usable as a building block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicTask {
    pub id: String,
    pub plan: AtomicPlan,
}

impl AtomicTask {
    pub fn tools(&self) -> Vec<String> {
        self.plan.steps.iter().map(|s| s.tool.clone()).collect()
    }
}

/// Initial task setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub requirement: String,
    pub known_info: String,
    pub rules: Vec<String>,
}

/// Termination predicate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationSpec {
    /// Fraction of candidate tools whose use alone ends the episode.
    pub tool_usage_fraction: f64,
}

impl Default for TerminationSpec {
    fn default() -> Self {
        Self {
            tool_usage_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Short,
    Medium,
    Long,
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "short" | "easy" => Ok(Difficulty::Short),
            "medium" => Ok(Difficulty::Medium),
            "long" | "hard" => Ok(Difficulty::Long),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

/// Construction knobs. Difficulty tiers give the number of atomic tasks
/// sampled; the candidate tool count must exceed `min_tools`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongHorizonConfig {
    pub min_tools: usize,
    pub top_k: usize,
    pub tier_short: usize,
    pub tier_medium: usize,
    pub tier_long: usize,
}

impl Default for LongHorizonConfig {
    fn default() -> Self {
        Self {
            min_tools: 5,
            top_k: 3,
            tier_short: 3,
            tier_medium: 6,
            tier_long: 10,
        }
    }
}

impl LongHorizonConfig {
    pub fn tier(&self, difficulty: Difficulty) -> usize {
        match difficulty {
            Difficulty::Short => self.tier_short,
            Difficulty::Medium => self.tier_medium,
            Difficulty::Long => self.tier_long,
        }
    }
}

/// A constructed long-horizon task. `approved` is the manual-verification
/// flag; pipelines may require it before a task enters training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongHorizonTask {
    pub id: String,
    pub init: InitSpec,
    pub candidate_tools: Vec<String>,
    pub termination: TerminationSpec,
    pub min_tools: usize,
    pub approved: bool,
    pub atomics: Vec<AtomicTask>,
}

#[derive(Debug, Error)]
pub enum LongHorizonError {
    #[error("atomic pool too small: need {needed} tasks with > {min_tools} distinct tools, have {available}")]
    PoolTooSmall {
        needed: usize,
        available: usize,
        min_tools: usize,
    },
    #[error("generated sample rejected: {0:?}")]
    GenerationRejected(Vec<String>),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// The termination predicate: all requirements fulfilled, or the used
/// tool count reaching the configured fraction of the candidates.
pub fn termination_met(task: &LongHorizonTask, tools_used: usize, all_fulfilled: bool) -> bool {
    all_fulfilled
        || tools_used as f64 >= task.termination.tool_usage_fraction * task.candidate_tools.len() as f64
}

/// Sample atomic tasks for the difficulty tier and generate the initial
/// setup. The sampled set is extended until the distinct-tool count
/// exceeds the configured threshold.
pub fn construct_task(
    pool: &[AtomicTask],
    difficulty: Difficulty,
    generator: &dyn TextGenerator,
    config: &LongHorizonConfig,
    rng_seed: u64,
) -> Result<LongHorizonTask, LongHorizonError> {
    let needed = config.tier(difficulty);
    if pool.len() < needed {
        return Err(LongHorizonError::PoolTooSmall {
            needed,
            available: pool.len(),
            min_tools: config.min_tools,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let distinct_tools = |indices: &[usize]| -> BTreeSet<String> {
        indices
            .iter()
            .flat_map(|i| pool[*i].tools())
            .collect::<BTreeSet<_>>()
    };
    // walk the pool in a seeded order, preferring atomics that add new
    // tools, so tasks combine without repetitions
    let mut order: Vec<usize> = (0..pool.len()).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
    }
    let mut picked: Vec<usize> = Vec::new();
    let mut covered: BTreeSet<String> = BTreeSet::new();
    for &candidate in &order {
        if picked.len() >= needed && covered.len() > config.min_tools {
            break;
        }
        let tools = pool[candidate].tools();
        if tools.iter().any(|t| !covered.contains(t)) {
            covered.extend(tools);
            picked.push(candidate);
        }
    }
    // top up with arbitrary remaining atomics if diversity ran out
    for &candidate in &order {
        if picked.len() >= needed {
            break;
        }
        if !picked.contains(&candidate) {
            picked.push(candidate);
        }
    }
    if picked.len() < needed || distinct_tools(&picked).len() <= config.min_tools {
        return Err(LongHorizonError::PoolTooSmall {
            needed,
            available: pool.len(),
            min_tools: config.min_tools,
        });
    }
    picked.sort();
    let atomics: Vec<AtomicTask> = picked.iter().map(|i| pool[*i].clone()).collect();
    let candidate_tools: Vec<String> = distinct_tools(&picked).into_iter().collect();

    let payload = serde_json::json!({
        "atomics": atomics
            .iter()
            .map(|a| serde_json::json!({
                "id": a.id,
                "query": a.plan.query,
                "tools": a.tools(),
            }))
            .collect::<Vec<_>>(),
    });
    let request = GenerationRequest::new(
        format!("Write the initial setup for a long-horizon task.\n{payload}"),
        GrammarId::TaskInit,
        rng_seed,
    );
    let raw = generator.generate(&request)?;
    let parsed: serde_json::Value = serde_json::from_str(raw.trim()).map_err(|e| {
        LongHorizonError::GenerationRejected(vec![format!("init is not valid JSON: {e}")])
    })?;
    let init = InitSpec {
        requirement: parsed["requirement"].as_str().unwrap_or_default().to_string(),
        known_info: parsed["known_info"].as_str().unwrap_or_default().to_string(),
        rules: parsed["rules"]
            .as_array()
            .map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default(),
    };
    if init.requirement.is_empty() {
        return Err(LongHorizonError::GenerationRejected(vec![
            "init lacks a requirement".into(),
        ]));
    }

    Ok(LongHorizonTask {
        id: format!("lh-{:016x}", fnv1a64(format!("{rng_seed}|{needed}").as_bytes())),
        init,
        candidate_tools,
        termination: TerminationSpec::default(),
        min_tools: config.min_tools,
        approved: false,
        atomics,
    })
}

/// Synthesize one long-horizon trajectory: rounds of
/// `{query, (think + tool call, observation) x n}` closed by a summary.
///
/// Labeling is machine-checked: successful only when every atomic
/// requirement was fulfilled within the step limit; hitting the limit, or
/// using every candidate tool with requirements still open, labels the
/// trajectory unsuccessful.
pub fn synthesize_trajectory(
    task: &LongHorizonTask,
    catalog: &ToolCatalog,
    backends: &TrajectoryBackends<'_>,
    limits: EpisodeLimits,
    rng_seed: u64,
) -> Result<Trajectory, LongHorizonError> {
    let mut turns: Vec<Turn> = Vec::new();
    let mut used_tools: BTreeSet<String> = BTreeSet::new();
    let mut steps = 0usize;
    let mut fulfilled = 0usize;
    let domain_tag = dominant_domain(task, catalog);
    let mut clar_rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x7573_6572);

    for (round, atomic) in task.atomics.iter().enumerate() {
        // the next query is generated from the remaining requirements
        let remaining: Vec<&str> = task.atomics[round..]
            .iter()
            .map(|a| a.plan.query.as_str())
            .collect();
        let query = if round == 0 {
            format!("{} {}", task.init.requirement, task.init.known_info)
        } else {
            let payload = serde_json::json!({
                "remaining": remaining,
                "fulfilled": fulfilled,
            });
            backends.generator.generate(&GenerationRequest::new(
                format!("Write the user's next request.\n{payload}"),
                GrammarId::NextQuery,
                rng_seed ^ round as u64,
            ))?
        };
        let mut pending_query = Some(query);

        let plan = ComposedPlan::from_atomic(&atomic.plan);
        let mut state = EpisodeState::new(&plan, catalog, rng_seed ^ (round as u64) << 8)?;
        let mut last_observation = serde_json::Value::Null;
        loop {
            match transition(&mut state, &last_observation)? {
                Transition::Termination => break,
                Transition::UserClarification(params) => {
                    let ask = params.iter().cloned().collect::<Vec<_>>().join(", ");
                    turns.push(Turn {
                        query: pending_query.take(),
                        think: format!("I still need the {ask} before calling the tool."),
                        action: AgentAction::Clarify {
                            content: format!("Could you tell me the {ask}?"),
                            params: params.clone(),
                        },
                        observation: None,
                    });
                    let mut answers = Vec::new();
                    for param in &params {
                        let value = value_for_param(param, "string", &mut clar_rng);
                        answers.push(format!("The {param} is {value}."));
                        state.provide_clarification(param, &value);
                    }
                    pending_query = Some(answers.join(" "));
                }
                Transition::Standard | Transition::ConditionalBranch(_) => {
                    if steps >= limits.max_steps {
                        return Ok(Trajectory {
                            turns,
                            label: TrajectoryLabel::Unsuccessful,
                            domain_tag,
                        });
                    }
                    let mut turn = synthesize_turn(&mut state, backends)?;
                    turn.query = pending_query.take();
                    if let AgentAction::Calls { calls } = &turn.action {
                        for call in calls {
                            used_tools.insert(call.name.clone());
                        }
                    }
                    if let Some(obs) = &turn.observation {
                        last_observation = crate::textutil::parse_loose_json(obs)
                            .unwrap_or(serde_json::Value::Null);
                    }
                    turns.push(turn);
                    steps += 1;
                }
            }
        }
        fulfilled += 1;
        let unmet = fulfilled < task.atomics.len();
        if unmet && used_tools.len() == task.candidate_tools.len() {
            // every candidate tool used, problem still open: unsuccessful
            // (the 0.8 fraction of the termination predicate is a valid
            // early stop only for fulfilled requirements)
            return Ok(Trajectory {
                turns,
                label: TrajectoryLabel::Unsuccessful,
                domain_tag,
            });
        }
        if unmet {
            // acknowledge the finished round so the next user query keeps
            // the strict human/gpt alternation
            turns.push(Turn {
                query: None,
                think: String::new(),
                action: AgentAction::Reply {
                    content: "That part is done. What would you like me to handle next?".into(),
                },
                observation: None,
            });
        }
    }

    let all_fulfilled = fulfilled == task.atomics.len();
    turns.push(Turn {
        query: None,
        think: "All requests are handled; I can close with a summary.".into(),
        action: AgentAction::Finish {
            content: format!(
                "Everything you asked for is done ({} request(s), {} tool(s) used).",
                fulfilled,
                used_tools.len()
            ),
        },
        observation: None,
    });
    let label = if all_fulfilled && termination_met(task, used_tools.len(), all_fulfilled) {
        TrajectoryLabel::Successful
    } else {
        TrajectoryLabel::Unsuccessful
    };
    Ok(Trajectory {
        turns,
        label,
        domain_tag,
    })
}

fn dominant_domain(task: &LongHorizonTask, catalog: &ToolCatalog) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for tool in &task.candidate_tools {
        if let Some(t) = catalog.get(tool) {
            *counts.entry(t.domain_tag.clone()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|(tag, count)| (*count, std::cmp::Reverse(tag.clone())))
        .map(|(tag, _)| {
            let mut chars = tag.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                None => "General".to_string(),
            }
        })
        .unwrap_or_else(|| "General".to_string())
}

/// Serialize to the ShareGPT conversation format: human/gpt turns, tool
/// calls tagged with `<think>`/`<tool_call>`, observations wrapped in
/// `<observation>`.
pub fn to_sharegpt(trajectory: &Trajectory) -> serde_json::Value {
    let mut conversations = Vec::new();
    for turn in &trajectory.turns {
        if let Some(query) = &turn.query {
            conversations.push(serde_json::json!({"from": "human", "value": query}));
        }
        match &turn.action {
            AgentAction::Calls { calls } => {
                let blocks: Vec<String> = calls
                    .iter()
                    .map(|c| format!("<tool_call>\n{}\n</tool_call>", c.to_json()))
                    .collect();
                conversations.push(serde_json::json!({
                    "from": "gpt",
                    "value": format!("<think>\n{}\n</think>\n{}\n", turn.think, blocks.join("\n")),
                }));
            }
            AgentAction::Clarify { content, .. }
            | AgentAction::Reply { content }
            | AgentAction::Finish { content } => {
                conversations.push(serde_json::json!({"from": "gpt", "value": content}));
            }
        }
        if let Some(observation) = &turn.observation {
            conversations.push(serde_json::json!({
                "from": "human",
                "value": format!("<observation>{observation}</observation>"),
            }));
        }
    }
    serde_json::json!({
        "conversations": conversations,
        "domain": trajectory.domain_tag,
    })
}

/// Check the ShareGPT round structure: alternating human/gpt starting
/// with human, tool-call turns parseable under the long-horizon grammar
/// and answered by an observation, and a plain-text closing reply.
pub fn validate_round_structure(sample: &serde_json::Value) -> Result<(), String> {
    let conversations = sample["conversations"]
        .as_array()
        .ok_or("sample lacks a conversations array")?;
    if conversations.len() < 2 {
        return Err("conversation needs at least one round".into());
    }
    for (i, message) in conversations.iter().enumerate() {
        let from = message["from"].as_str().ok_or("message lacks `from`")?;
        let value = message["value"].as_str().ok_or("message lacks `value`")?;
        let expected = if i % 2 == 0 { "human" } else { "gpt" };
        if from != expected {
            return Err(format!("message {i} should be from {expected}, is from {from}"));
        }
        if value.trim().is_empty() {
            return Err(format!("message {i} is empty"));
        }
        if from == "gpt" && value.contains("<tool_call>") {
            parse_output(TaskKind::LongHorizon, value)
                .map_err(|e| format!("message {i} fails the tool-call grammar: {e}"))?;
            match conversations.get(i + 1) {
                Some(next) => {
                    let next_value = next["value"].as_str().unwrap_or_default();
                    if !next_value.trim_start().starts_with("<observation>") {
                        return Err(format!("tool call at message {i} lacks an observation"));
                    }
                }
                None => return Err(format!("tool call at message {i} ends the conversation")),
            }
        }
    }
    let last = conversations.last().unwrap();
    if last["from"] != "gpt" || last["value"].as_str().unwrap_or_default().contains("<tool_call>") {
        return Err("conversation must close with a plain agent reply".into());
    }
    Ok(())
}

/// A filtered seed: a successful, format-valid trajectory with its
/// augmented tool list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSample {
    pub task_id: String,
    pub sharegpt: serde_json::Value,
    pub tool_list: Vec<String>,
}

/// Keep the successful, format-valid trajectories and augment each with
/// the `top_k` most task-related unused tools, every one from a distinct
/// atomic task outside the seed's own task.
pub fn filter_seeds(
    episodes: &[(LongHorizonTask, Trajectory)],
    pool: &[AtomicTask],
    catalog: &ToolCatalog,
    embedder: &dyn Embedder,
    top_k: usize,
) -> Vec<SeedSample> {
    let mut seeds = Vec::new();
    for (task, trajectory) in episodes {
        if trajectory.label != TrajectoryLabel::Successful {
            continue;
        }
        let sharegpt = to_sharegpt(trajectory);
        if validate_round_structure(&sharegpt).is_err() {
            continue;
        }
        let mut used: BTreeSet<String> = BTreeSet::new();
        for turn in &trajectory.turns {
            if let AgentAction::Calls { calls } = &turn.action {
                for call in calls {
                    used.insert(call.name.clone());
                }
            }
        }

        let context = format!("{} {}", task.init.requirement, task.init.known_info);
        let own_atomics: BTreeSet<&str> = task.atomics.iter().map(|a| a.id.as_str()).collect();
        let mut candidates: Vec<(f64, String, String)> = Vec::new(); // (score, tool, atomic id)
        for atomic in pool {
            if own_atomics.contains(atomic.id.as_str()) {
                continue;
            }
            for tool_id in atomic.tools() {
                if used.contains(&tool_id) {
                    continue;
                }
                let Some(tool) = catalog.get(&tool_id) else { continue };
                let score = match embedder
                    .embed(&[tool.description.clone(), context.clone()])
                {
                    Ok(vs) => vs[0].cosine(&vs[1]) as f64,
                    Err(_) => 0.0,
                };
                candidates.push((score, tool_id, atomic.id.clone()));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let mut picked: Vec<String> = Vec::new();
        let mut atomic_seen: BTreeSet<String> = BTreeSet::new();
        for (_, tool_id, atomic_id) in candidates {
            if picked.len() == top_k {
                break;
            }
            if picked.contains(&tool_id) || !atomic_seen.insert(atomic_id) {
                continue; // one tool per distinct atomic task
            }
            picked.push(tool_id);
        }

        let mut tool_list: Vec<String> = used.into_iter().collect();
        tool_list.extend(picked);
        seeds.push(SeedSample {
            task_id: task.id.clone(),
            sharegpt,
            tool_list,
        });
    }
    seeds
}

/// Generate a new sample from a seed and validate it: same round
/// structure, tool calls restricted to the seed's tool list, argument
/// schemas consistent with the catalog (or preceded by a clarification
/// turn), and reasoning consistent with the called tool.
pub fn scale_from_seed(
    seed: &SeedSample,
    catalog: &ToolCatalog,
    generator: &dyn TextGenerator,
    rng_seed: u64,
) -> Result<serde_json::Value, LongHorizonError> {
    let payload = serde_json::json!({"seed_sample": seed.sharegpt});
    let request = GenerationRequest::new(
        format!("Generate a new trajectory similar to the seed sample.\n{payload}"),
        GrammarId::TrajectoryScale,
        rng_seed,
    );
    let raw = generator.generate(&request)?;
    let sample: serde_json::Value = serde_json::from_str(raw.trim()).map_err(|e| {
        LongHorizonError::GenerationRejected(vec![format!("not valid JSON: {e}")])
    })?;
    let mut reasons = Vec::new();
    if let Err(reason) = validate_round_structure(&sample) {
        reasons.push(reason);
    }
    let allowed: BTreeSet<&str> = seed.tool_list.iter().map(|s| s.as_str()).collect();
    let conversations = sample["conversations"].as_array().cloned().unwrap_or_default();
    let mut saw_clarification = false;
    for message in &conversations {
        if message["from"] != "gpt" {
            continue;
        }
        let value = message["value"].as_str().unwrap_or_default();
        if !value.contains("<tool_call>") {
            if value.contains('?') {
                saw_clarification = true;
            }
            continue;
        }
        let Ok(ParsedOutput::LongHorizon { call }) = parse_output(TaskKind::LongHorizon, value)
        else {
            continue; // already reported by the round-structure check
        };
        let ExecutedCall::Tool { name, arguments } = call else {
            continue; // the reply tool needs no schema check
        };
        if !allowed.contains(name.as_str()) {
            reasons.push(format!("unknown tool: {name} is outside the seed tool list"));
            continue;
        }
        if let Some(tool) = catalog.get(&name) {
            for param in tool.required_parameters() {
                if !arguments.contains_key(&param.name) && !saw_clarification {
                    reasons.push(format!(
                        "argument schema: {name} call misses required `{}`",
                        param.name
                    ));
                }
            }
        }
        if let Some(think) = extract_think(value) {
            let mentioned: Vec<String> = catalog
                .ids()
                .iter()
                .filter(|id| think.contains(*id))
                .map(|s| s.to_string())
                .collect();
            if !mentioned.is_empty() && !mentioned.iter().any(|m| *m == name) {
                reasons.push(format!(
                    "reasoning names {mentioned:?} but the call is {name}"
                ));
            }
        }
    }
    if reasons.is_empty() {
        Ok(sample)
    } else {
        Err(LongHorizonError::GenerationRejected(reasons))
    }
}

fn extract_think(value: &str) -> Option<&str> {
    let start = value.find("<think>")? + "<think>".len();
    let end = value[start..].find("</think>")? + start;
    Some(&value[start..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::TemplateBackend;
    use crate::catalog::{build_graphs, Relation, SelectionKind, ToolSelection};
    use crate::entities::demo_catalog;
    use crate::plan::synthesize_atomic;

    fn atomic_pool(catalog: &ToolCatalog) -> Vec<AtomicTask> {
        let graphs = build_graphs(catalog);
        let mut pool = Vec::new();
        let selections = vec![
            (SelectionKind::Serial, vec!["search_hotel", "book_hotel"]),
            (SelectionKind::Serial, vec!["search_flight", "book_flight"]),
            (SelectionKind::Serial, vec!["search_product", "add_to_cart"]),
            (SelectionKind::Serial, vec!["add_to_cart", "place_order"]),
            (SelectionKind::Isolated, vec!["clear_cart"]),
            (SelectionKind::Isolated, vec!["check_weather"]),
            (SelectionKind::Isolated, vec!["query_calendar"]),
            (SelectionKind::Isolated, vec!["send_email"]),
            (SelectionKind::Serial, vec!["search_movie", "book_movie_ticket"]),
            (SelectionKind::Isolated, vec!["play_music"]),
            (SelectionKind::Serial, vec!["get_user_details", "cancel_reservation"]),
            (SelectionKind::Isolated, vec!["create_reminder"]),
        ];
        for (i, (kind, tools)) in selections.into_iter().enumerate() {
            let relation = match kind {
                SelectionKind::Isolated => Relation::None,
                SelectionKind::Serial => Relation::Causal,
                SelectionKind::Parallel => Relation::Independent,
            };
            let selection = ToolSelection {
                kind,
                tools: tools.iter().map(|s| s.to_string()).collect(),
                relation,
            };
            let plan =
                synthesize_atomic(&selection, catalog, &graphs, &TemplateBackend, i as u64)
                    .unwrap();
            pool.push(AtomicTask {
                id: format!("atomic-{i}"),
                plan,
            });
        }
        pool
    }

    #[test]
    fn construct_task_rejects_small_pools() {
        let catalog = demo_catalog();
        let pool = &atomic_pool(&catalog)[..2];
        let err = construct_task(
            pool,
            Difficulty::Medium,
            &TemplateBackend,
            &LongHorizonConfig::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, LongHorizonError::PoolTooSmall { .. }));
    }

    #[test]
    fn constructed_tasks_cover_their_atomic_tools() {
        let catalog = demo_catalog();
        let pool = atomic_pool(&catalog);
        let task = construct_task(
            &pool,
            Difficulty::Medium,
            &TemplateBackend,
            &LongHorizonConfig::default(),
            5,
        )
        .unwrap();
        assert!(task.candidate_tools.len() > task.min_tools);
        for atomic in &task.atomics {
            for tool in atomic.tools() {
                assert!(task.candidate_tools.contains(&tool));
            }
        }
        assert!(!task.init.requirement.is_empty());
        assert!(!task.approved);
    }

    #[test]
    fn termination_fraction_arithmetic() {
        let task = LongHorizonTask {
            id: "t".into(),
            init: InitSpec {
                requirement: "r".into(),
                known_info: "k".into(),
                rules: vec![],
            },
            candidate_tools: (0..10).map(|i| format!("tool{i}")).collect(),
            termination: TerminationSpec::default(),
            min_tools: 5,
            approved: false,
            atomics: vec![],
        };
        // 0.8 of 10 candidates: fires at exactly 8 used tools
        assert!(termination_met(&task, 8, false));
        assert!(!termination_met(&task, 7, false));
        assert!(termination_met(&task, 0, true));
    }

    #[test]
    fn scripted_episode_is_successful_and_respects_round_structure() {
        let catalog = demo_catalog();
        let pool = atomic_pool(&catalog);
        let task = construct_task(
            &pool,
            Difficulty::Short,
            &TemplateBackend,
            &LongHorizonConfig::default(),
            11,
        )
        .unwrap();
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let backends = TrajectoryBackends {
            generator: &generator,
            simulator: &simulator,
        };
        let trajectory =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits::default(), 11)
                .unwrap();
        assert_eq!(trajectory.label, TrajectoryLabel::Successful);
        let sharegpt = to_sharegpt(&trajectory);
        validate_round_structure(&sharegpt).unwrap();
        // label successful implies the termination predicate held
        let used: BTreeSet<String> = trajectory
            .turns
            .iter()
            .filter_map(|t| match &t.action {
                AgentAction::Calls { calls } => Some(calls.iter().map(|c| c.name.clone())),
                _ => None,
            })
            .flatten()
            .collect();
        assert!(termination_met(&task, used.len(), true));
        // deterministic under the stub backends
        let again =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits::default(), 11)
                .unwrap();
        assert_eq!(trajectory, again);
    }

    #[test]
    fn step_limit_labels_unsuccessful() {
        let catalog = demo_catalog();
        let pool = atomic_pool(&catalog);
        let task = construct_task(
            &pool,
            Difficulty::Short,
            &TemplateBackend,
            &LongHorizonConfig::default(),
            3,
        )
        .unwrap();
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let backends = TrajectoryBackends {
            generator: &generator,
            simulator: &simulator,
        };
        let trajectory =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits { max_steps: 1 }, 3)
                .unwrap();
        assert_eq!(trajectory.label, TrajectoryLabel::Unsuccessful);
    }

    #[test]
    fn all_tools_used_with_open_requirements_is_unsuccessful() {
        let catalog = demo_catalog();
        let pool = atomic_pool(&catalog);
        // two requirements over the same single tool
        let clear = pool.iter().find(|a| a.tools() == vec!["clear_cart"]).unwrap();
        let mut again = clear.clone();
        again.id = "atomic-clear-again".into();
        let task = LongHorizonTask {
            id: "t2".into(),
            init: InitSpec {
                requirement: "clear my carts twice".into(),
                known_info: String::new(),
                rules: vec![],
            },
            candidate_tools: vec!["clear_cart".into()],
            termination: TerminationSpec::default(),
            min_tools: 0,
            approved: false,
            atomics: vec![clear.clone(), again],
        };
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let backends = TrajectoryBackends {
            generator: &generator,
            simulator: &simulator,
        };
        let trajectory =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits::default(), 1)
                .unwrap();
        assert_eq!(trajectory.label, TrajectoryLabel::Unsuccessful);
    }

    #[test]
    fn seed_filtering_excludes_failures_and_respects_provenance() {
        let catalog = demo_catalog();
        let pool = atomic_pool(&catalog);
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let backends = TrajectoryBackends {
            generator: &generator,
            simulator: &simulator,
        };
        let config = LongHorizonConfig::default();
        let task = construct_task(&pool, Difficulty::Short, &TemplateBackend, &config, 21).unwrap();
        let good =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits::default(), 21)
                .unwrap();
        let bad =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits { max_steps: 1 }, 21)
                .unwrap();
        let embedder = crate::backend::HashedBowEmbedder::default();
        let episodes = vec![(task.clone(), good), (task.clone(), bad)];
        let seeds = filter_seeds(&episodes, &pool, &catalog, &embedder, 3);
        assert_eq!(seeds.len(), 1, "only the successful trajectory becomes a seed");
        let seed = &seeds[0];
        let own_tools: BTreeSet<String> =
            task.atomics.iter().flat_map(|a| a.tools()).collect();
        let added: Vec<&String> = seed
            .tool_list
            .iter()
            .filter(|t| !own_tools.contains(*t))
            .collect();
        assert!(added.len() <= 3);

        // top_k = 0 keeps exactly the used tools
        let episodes2 = vec![episodes[0].clone()];
        let no_extra = filter_seeds(&episodes2, &pool, &catalog, &embedder, 0);
        assert!(!no_extra[0].tool_list.is_empty());
        for tool in &no_extra[0].tool_list {
            assert!(own_tools.contains(tool), "unexpected augmented tool {tool}");
        }
    }

    #[test]
    fn seed_augmentation_takes_one_tool_per_atomic_task() {
        // the seed's own task uses clear_cart; the pool offers one atomic
        // holding BOTH hotel tools (the two nearest by vocabulary) and a
        // second atomic holding a flight tool. With top_k = 2 the second
        // hotel tool must be skipped in favor of the distinct-task one.
        let catalog = demo_catalog();
        let pool_all = atomic_pool(&catalog);
        let clear = pool_all
            .iter()
            .find(|a| a.tools() == vec!["clear_cart"])
            .unwrap()
            .clone();
        let hotels = pool_all
            .iter()
            .find(|a| a.tools() == vec!["search_hotel", "book_hotel"])
            .unwrap()
            .clone();
        let flights = pool_all
            .iter()
            .find(|a| a.tools() == vec!["search_flight", "book_flight"])
            .unwrap()
            .clone();
        let pool = vec![clear.clone(), hotels.clone(), flights.clone()];

        let task = LongHorizonTask {
            id: "prov".into(),
            init: InitSpec {
                // vocabulary close to the hotel tools
                requirement: "book a hotel room in a city for my stay".into(),
                known_info: "search hotels in the city and book a room".into(),
                rules: vec![],
            },
            candidate_tools: vec!["clear_cart".into()],
            termination: TerminationSpec::default(),
            min_tools: 0,
            approved: false,
            atomics: vec![clear],
        };
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let backends = TrajectoryBackends {
            generator: &generator,
            simulator: &simulator,
        };
        let trajectory =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits::default(), 2)
                .unwrap();
        assert_eq!(trajectory.label, TrajectoryLabel::Successful);
        let embedder = crate::backend::HashedBowEmbedder::default();
        let seeds = filter_seeds(&[(task, trajectory)], &pool, &catalog, &embedder, 2);
        let added: Vec<&String> = seeds[0]
            .tool_list
            .iter()
            .filter(|t| *t != "clear_cart")
            .collect();
        assert_eq!(added.len(), 2);
        // nearest-neighbor oracle: both hotel tools outrank the flight
        // tools, but only one may come from the hotel atomic
        let hotel_count = added
            .iter()
            .filter(|t| hotels.tools().contains(t))
            .count();
        let flight_count = added
            .iter()
            .filter(|t| flights.tools().contains(t))
            .count();
        assert_eq!(hotel_count, 1, "added: {added:?}");
        assert_eq!(flight_count, 1, "added: {added:?}");
    }

    #[test]
    fn scaling_accepts_the_echo_and_rejects_corruptions() {
        let catalog = demo_catalog();
        let pool = atomic_pool(&catalog);
        let generator = TemplateBackend;
        let simulator = StubSimulator;
        let backends = TrajectoryBackends {
            generator: &generator,
            simulator: &simulator,
        };
        let config = LongHorizonConfig::default();
        let task = construct_task(&pool, Difficulty::Short, &TemplateBackend, &config, 31).unwrap();
        let trajectory =
            synthesize_trajectory(&task, &catalog, &backends, EpisodeLimits::default(), 31)
                .unwrap();
        let embedder = crate::backend::HashedBowEmbedder::default();
        let seeds = filter_seeds(
            &[(task.clone(), trajectory)],
            &pool,
            &catalog,
            &embedder,
            3,
        );
        let seed = &seeds[0];

        // the deterministic scaler renames entities but keeps structure
        let scaled = scale_from_seed(seed, &catalog, &TemplateBackend, 501).unwrap();
        validate_round_structure(&scaled).unwrap();
        assert_eq!(
            scaled["conversations"].as_array().unwrap().len(),
            seed.sharegpt["conversations"].as_array().unwrap().len(),
            "scaled sample must be structurally isomorphic to the seed"
        );

        // a generator that renames a called tool to something outside the list
        struct RogueTool<'a>(&'a SeedSample);
        impl TextGenerator for RogueTool<'_> {
            fn generate(&self, _: &GenerationRequest) -> Result<String, BackendError> {
                let mut sample = self.0.sharegpt.clone();
                let target = format!("\"name\":\"{}\"", self.0.tool_list.first().unwrap());
                let mut hit = false;
                if let Some(conversations) = sample["conversations"].as_array_mut() {
                    for message in conversations {
                        if message["from"] != "gpt" {
                            continue;
                        }
                        let value = message["value"].as_str().unwrap_or_default().to_string();
                        if value.contains(&target) {
                            hit = true;
                            message["value"] = serde_json::Value::String(
                                value.replace(&target, "\"name\":\"made_up_tool\""),
                            );
                        }
                    }
                }
                assert!(hit, "corruption target not found in the seed");
                Ok(sample.to_string())
            }
        }
        let err = scale_from_seed(seed, &catalog, &RogueTool(seed), 1).unwrap_err();
        match err {
            LongHorizonError::GenerationRejected(reasons) => {
                assert!(
                    reasons.iter().any(|r| r.contains("unknown tool")
                        || r.contains("reasoning")),
                    "reasons: {reasons:?}"
                );
            }
            other => panic!("unexpected {other}"),
        }
    }
}
