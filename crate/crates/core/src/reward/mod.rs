//! Rule-based multi-task reward: the five output grammars, per-task
//! reward components, and the weighted total.
//!
//! Parsing is total: every input yields a parsed output or a
//! [`FormatError`] with position and expectation, never a panic. A format
//! failure zeroes the whole reward; otherwise the task component is added
//! with its weight.

mod f1;

pub use f1::{f1_chain, f1_graph, match_nodes, MatchPair, NodeMatching};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Embedder;
use crate::quality::TaskKind;
use crate::schedule::{parse_itinerary, verify, ScheduleProblem};
use crate::textutil::parse_loose_json;
use crate::workflow::{parse_workflow, topological_order, WorkflowDag};

/// Format violation with byte position and expectation.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("format error at byte {position}: expected {expectation}")]
pub struct FormatError {
    pub position: usize,
    pub expectation: String,
}

fn fail(position: usize, expectation: impl Into<String>) -> FormatError {
    FormatError {
        position,
        expectation: expectation.into(),
    }
}

/// Reward weights and similarity thresholds. Component weights default to
/// 1.0; the similarity threshold tau defaults to 0.85 and applies to plan
/// steps, replies, and reply-tool content alike.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub alpha_format: f64,
    pub alpha_plan: f64,
    pub alpha_tool: f64,
    pub alpha_workflow: f64,
    pub alpha_schedule: f64,
    pub tau: f64,
    pub node_match_threshold: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha_format: 1.0,
            alpha_plan: 1.0,
            alpha_tool: 1.0,
            alpha_workflow: 1.0,
            alpha_schedule: 1.0,
            tau: 0.85,
            node_match_threshold: 0.85,
        }
    }
}

/// One entry of a parsed tool list; bare names carry no arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Option<serde_json::Map<String, serde_json::Value>>,
}

/// A parsed long-horizon action: a concrete tool call or the reply tool
/// requesting missing information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExecutedCall {
    Tool {
        name: String,
        arguments: serde_json::Map<String, serde_json::Value>,
    },
    Reply {
        content: String,
    },
}

/// Structured content recovered from a model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum ParsedOutput {
    Decomposition {
        steps: Vec<String>,
        reply: Option<String>,
    },
    ToolPlan {
        calls: Vec<PlannedCall>,
    },
    Schedule {
        text: String,
    },
    Workflow {
        dag: WorkflowDag,
    },
    LongHorizon {
        call: ExecutedCall,
    },
}

/// Find `<tag>...</tag>` starting at `from` (only whitespace may precede
/// it). Returns (inner text, end offset just past the closing tag).
fn take_tag<'t>(
    text: &'t str,
    tag: &str,
    from: usize,
) -> Result<(&'t str, usize), FormatError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let rest = &text[from..];
    let skipped = rest.len() - rest.trim_start().len();
    let at = from + skipped;
    if !text[at..].starts_with(&open) {
        return Err(fail(at, format!("opening {open}")));
    }
    let inner_start = at + open.len();
    let inner_len = text[inner_start..]
        .find(&close)
        .ok_or_else(|| fail(text.len(), format!("closing {close}")))?;
    let inner = &text[inner_start..inner_start + inner_len];
    Ok((inner, inner_start + inner_len + close.len()))
}

fn expect_end(text: &str, from: usize) -> Result<(), FormatError> {
    if text[from..].trim().is_empty() {
        Ok(())
    } else {
        Err(fail(from, "end of output after the closing tag"))
    }
}

/// Parse a model output under its task grammar.
pub fn parse_output(kind: TaskKind, text: &str) -> Result<ParsedOutput, FormatError> {
    match kind {
        TaskKind::Decomposition => parse_decomposition(text),
        TaskKind::ToolPlan => parse_tool_plan(text),
        TaskKind::Scheduling => parse_scheduling(text),
        TaskKind::Workflow => parse_workflow(text)
            .map(|dag| ParsedOutput::Workflow { dag })
            .map_err(|e| fail(e.position, e.expectation)),
        TaskKind::LongHorizon => parse_long_horizon(text),
    }
}

fn parse_decomposition(text: &str) -> Result<ParsedOutput, FormatError> {
    let mut cursor = 0usize;
    if text.trim_start().starts_with("<Query>") {
        let (_, end) = take_tag(text, "Query", cursor)?;
        cursor = end;
    }
    let (plan_inner, end) = take_tag(text, "Plan", cursor)?;
    cursor = end;
    let reply = if text[cursor..].trim_start().starts_with("<Reply>") {
        let (inner, end) = take_tag(text, "Reply", cursor)?;
        cursor = end;
        Some(inner.trim().to_string())
    } else {
        None
    };
    expect_end(text, cursor)?;

    // steps numbered contiguously from 1, separated by whitespace
    let mut steps = Vec::new();
    let mut expected = 1usize;
    let mut starts: Vec<usize> = Vec::new();
    let mut search = 0usize;
    loop {
        let marker = format!("Step{expected}.");
        match plan_inner[search..].find(&marker) {
            Some(rel) => {
                let at = search + rel;
                if expected > 1 {
                    steps.push(plan_inner[starts[expected - 2]..at].trim().to_string());
                }
                starts.push(at + marker.len());
                search = at + marker.len();
                expected += 1;
            }
            None => break,
        }
    }
    if starts.is_empty() {
        return Err(fail(0, "Step1. inside <Plan>"));
    }
    steps.push(plan_inner[*starts.last().unwrap()..].trim().to_string());
    // a leftover higher-numbered marker means the numbering skipped
    if let Some(rel) = plan_inner[*starts.last().unwrap()..].find("Step") {
        let tail = &plan_inner[*starts.last().unwrap() + rel..];
        if tail
            .strip_prefix("Step")
            .map(|t| t.chars().next().map(|c| c.is_ascii_digit()).unwrap_or(false))
            .unwrap_or(false)
        {
            return Err(fail(*starts.last().unwrap() + rel, format!("Step{expected} expected")));
        }
    }
    if let Some(idx) = steps.iter().position(|s| s.is_empty()) {
        return Err(fail(starts[idx], format!("text for Step{}", idx + 1)));
    }
    Ok(ParsedOutput::Decomposition { steps, reply })
}

fn parse_tool_plan(text: &str) -> Result<ParsedOutput, FormatError> {
    let (_think, end) = take_tag(text, "think", 0)?;
    let (action, end) = take_tag(text, "action", end)?;
    expect_end(text, end)?;
    let calls = parse_action_payload(action.trim())
        .map_err(|reason| fail(0, format!("tool list in <action>: {reason}")))?;
    Ok(ParsedOutput::ToolPlan { calls })
}

fn parse_action_payload(action: &str) -> Result<Vec<PlannedCall>, String> {
    let body = action
        .strip_prefix("ToolList:")
        .map(str::trim)
        .unwrap_or(action);
    if body.starts_with('{') {
        return Ok(vec![planned_call_from_json(body)?]);
    }
    if let Some(inner) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
        let mut calls = Vec::new();
        for item in split_top_level(inner) {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            if item.starts_with('{') {
                calls.push(planned_call_from_json(item)?);
            } else {
                calls.push(PlannedCall {
                    name: item.trim_matches(|c| c == '"' || c == '\'').to_string(),
                    arguments: None,
                });
            }
        }
        if calls.is_empty() {
            return Err("empty tool list".into());
        }
        return Ok(calls);
    }
    Err("neither a ToolList:[...] nor a call object".into())
}

fn planned_call_from_json(raw: &str) -> Result<PlannedCall, String> {
    let value = parse_loose_json(raw)?;
    let name = value["name"]
        .as_str()
        .ok_or_else(|| "call object lacks a name".to_string())?
        .to_string();
    let arguments = value
        .get("arguments")
        .and_then(|a| a.as_object())
        .cloned();
    Ok(PlannedCall {
        name,
        arguments: Some(arguments.unwrap_or_default()),
    })
}

/// Split on commas at bracket depth zero, respecting quotes.
fn split_top_level(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut current = String::new();
    for ch in text.chars() {
        match quote {
            Some(q) => {
                if ch == q {
                    quote = None;
                }
                current.push(ch);
            }
            None => match ch {
                '"' | '\'' => {
                    quote = Some(ch);
                    current.push(ch);
                }
                '{' | '[' => {
                    depth += 1;
                    current.push(ch);
                }
                '}' | ']' => {
                    depth -= 1;
                    current.push(ch);
                }
                ',' if depth == 0 => {
                    parts.push(std::mem::take(&mut current));
                }
                _ => current.push(ch),
            },
        }
    }
    if !current.trim().is_empty() {
        parts.push(current);
    }
    parts
}

fn parse_scheduling(text: &str) -> Result<ParsedOutput, FormatError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with("<think>") {
        let (_think, end) = take_tag(text, "think", 0)?;
        let (answer, end) = take_tag(text, "answer", end)?;
        expect_end(text, end)?;
        return Ok(ParsedOutput::Schedule {
            text: answer.trim().to_string(),
        });
    }
    if trimmed.starts_with("<answer>") {
        return Err(fail(0, "<think> before <answer>"));
    }
    // raw answer text (the SFT-format sample carries no tags)
    if trimmed.is_empty() {
        return Err(fail(0, "non-empty schedule text"));
    }
    if trimmed.contains("<answer>") != trimmed.contains("</answer>") {
        return Err(fail(text.len(), "paired <answer> tags"));
    }
    Ok(ParsedOutput::Schedule {
        text: text.trim().to_string(),
    })
}

fn parse_long_horizon(text: &str) -> Result<ParsedOutput, FormatError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with("<think>") {
        let (_think, end) = take_tag(text, "think", 0)?;
        let rest = &text[end..];
        if rest.trim_start().starts_with("<tool_call>") {
            let (payload, end) = take_tag(text, "tool_call", end)?;
            expect_end(text, end)?;
            return Ok(ParsedOutput::LongHorizon {
                call: executed_call_from_json(payload.trim(), end)?,
            });
        }
        if rest.trim().is_empty() {
            return Err(fail(end, "a <tool_call> or terminal reply after <think>"));
        }
        return Ok(ParsedOutput::LongHorizon {
            call: ExecutedCall::Reply {
                content: rest.trim().to_string(),
            },
        });
    }
    if trimmed.contains("<tool_call>") {
        return Err(fail(0, "<think> before <tool_call>"));
    }
    if trimmed.is_empty() {
        return Err(fail(0, "non-empty terminal reply"));
    }
    Ok(ParsedOutput::LongHorizon {
        call: ExecutedCall::Reply {
            content: text.trim().to_string(),
        },
    })
}

fn executed_call_from_json(raw: &str, position: usize) -> Result<ExecutedCall, FormatError> {
    // tool invocations must be strictly valid JSON: brackets and quotes paired
    let value: serde_json::Value = serde_json::from_str(raw)
        .map_err(|e| fail(position, format!("valid JSON tool call payload ({e})")))?;
    let name = value["name"]
        .as_str()
        .ok_or_else(|| fail(position, "tool call with a name field"))?
        .to_string();
    let arguments = value
        .get("arguments")
        .and_then(|a| a.as_object())
        .cloned()
        .unwrap_or_default();
    if name == "reply" {
        let content = arguments
            .get("content")
            .and_then(|c| c.as_str())
            .unwrap_or_default()
            .to_string();
        return Ok(ExecutedCall::Reply { content });
    }
    Ok(ExecutedCall::Tool { name, arguments })
}

/// Gold standard for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum GoldStandard {
    Decomposition {
        steps: Vec<String>,
        reply: Option<String>,
    },
    ToolPlan {
        calls: Vec<PlannedCall>,
    },
    Schedule {
        problem: Box<ScheduleProblem>,
    },
    Workflow {
        dag: WorkflowDag,
    },
    LongHorizon {
        call: ExecutedCall,
    },
}

impl GoldStandard {
    /// Build the gold standard by parsing gold text under the same
    /// grammar (schedule tasks carry their problem instead).
    pub fn from_gold_text(kind: TaskKind, text: &str) -> Result<Self, FormatError> {
        Ok(match parse_output(kind, text)? {
            ParsedOutput::Decomposition { steps, reply } => {
                GoldStandard::Decomposition { steps, reply }
            }
            ParsedOutput::ToolPlan { calls } => GoldStandard::ToolPlan { calls },
            ParsedOutput::Workflow { dag } => GoldStandard::Workflow { dag },
            ParsedOutput::LongHorizon { call } => GoldStandard::LongHorizon { call },
            ParsedOutput::Schedule { .. } => {
                return Err(fail(0, "schedule golds are problem instances, not text"))
            }
        })
    }
}

fn cosine(embedder: &dyn Embedder, a: &str, b: &str) -> f64 {
    match embedder.embed(&[a.to_string(), b.to_string()]) {
        Ok(vs) => vs[0].cosine(&vs[1]) as f64,
        Err(_) => 0.0,
    }
}

/// Decomposition reward: step count must match and every aligned step
/// (plus the reply, when the gold has one) must reach the similarity
/// threshold.
pub fn reward_plan(
    pred_steps: &[String],
    pred_reply: Option<&str>,
    gold_steps: &[String],
    gold_reply: Option<&str>,
    embedder: &dyn Embedder,
    tau: f64,
) -> f64 {
    if pred_steps.len() != gold_steps.len() {
        return 0.0;
    }
    for (p, g) in pred_steps.iter().zip(gold_steps) {
        if cosine(embedder, p, g) < tau {
            return 0.0;
        }
    }
    if let Some(gold) = gold_reply {
        match pred_reply {
            Some(pred) if cosine(embedder, pred, gold) >= tau => {}
            _ => return 0.0,
        }
    }
    1.0
}

/// Numeric-aware, whitespace-trimmed structural equality for argument
/// values.
fn value_eq(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => {
            x.as_f64().zip(y.as_f64()).map(|(x, y)| x == y).unwrap_or(x == y)
        }
        (String(x), String(y)) => x.trim() == y.trim(),
        (Array(x), Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| value_eq(a, b))
        }
        (Object(x), Object(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.get(k).map(|w| value_eq(v, w)).unwrap_or(false))
        }
        (x, y) => x == y,
    }
}

fn args_eq(
    a: &serde_json::Map<String, serde_json::Value>,
    b: &serde_json::Map<String, serde_json::Value>,
) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(k, v)| b.get(k).map(|w| value_eq(v, w)).unwrap_or(false))
}

/// Tool-list reward: exact match in tool identity and execution order;
/// arguments are compared where the gold specifies them.
pub fn reward_tool_list(pred: &[PlannedCall], gold: &[PlannedCall]) -> f64 {
    if pred.len() != gold.len() {
        return 0.0;
    }
    for (p, g) in pred.iter().zip(gold) {
        if p.name != g.name {
            return 0.0;
        }
        if let Some(gold_args) = &g.arguments {
            let empty = serde_json::Map::new();
            let pred_args = p.arguments.as_ref().unwrap_or(&empty);
            if !args_eq(pred_args, gold_args) {
                return 0.0;
            }
        }
    }
    1.0
}

/// Schedule reward: parse the free-text plan into an itinerary and check
/// it against the instance's constraints.
pub fn reward_schedule(text: &str, problem: &ScheduleProblem) -> (f64, Vec<String>) {
    match parse_itinerary(problem, text) {
        Ok(itinerary) => {
            let violations = verify(problem, &itinerary);
            if violations.is_empty() {
                (1.0, Vec::new())
            } else {
                (0.0, violations)
            }
        }
        Err(e) => (0.0, vec![format!("itinerary parse error: {}", e.message)]),
    }
}

/// Workflow reward: mean of the chain-level and graph-level F1 scores.
pub fn reward_workflow(
    pred: &WorkflowDag,
    gold: &WorkflowDag,
    embedder: &dyn Embedder,
    threshold: f64,
) -> f64 {
    let (Ok(pred_topo), Ok(gold_topo)) = (topological_order(pred), topological_order(gold))
    else {
        return 0.0; // a cyclic graph is not a workflow
    };
    let matching = match_nodes(&pred.nodes, &gold.nodes, embedder, threshold);
    let chain = f1_chain(&pred_topo, &gold_topo, &matching);
    let graph = f1_graph(pred, gold, &matching);
    (chain + graph) / 2.0
}

/// Long-horizon reward: exact call equality, or reply similarity for the
/// information-requesting reply tool.
pub fn reward_longhorizon(
    pred: &ExecutedCall,
    gold: &ExecutedCall,
    embedder: &dyn Embedder,
    tau: f64,
) -> f64 {
    match (pred, gold) {
        (
            ExecutedCall::Tool { name: pn, arguments: pa },
            ExecutedCall::Tool { name: gn, arguments: ga },
        ) => {
            if pn == gn && args_eq(pa, ga) {
                1.0
            } else {
                0.0
            }
        }
        (ExecutedCall::Reply { content: p }, ExecutedCall::Reply { content: g })
            if cosine(embedder, p, g) >= tau =>
        {
            1.0
        }
        _ => 0.0,
    }
}

/// Per-component values and the weighted total for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub component: f64,
    pub total: f64,
    pub diagnostics: Vec<String>,
}

/// Score one model output against its gold standard.
pub fn reward_total(
    kind: TaskKind,
    text: &str,
    gold: &GoldStandard,
    config: &RewardConfig,
    embedder: &dyn Embedder,
) -> RewardBreakdown {
    let parsed = match parse_output(kind, text) {
        Ok(parsed) => parsed,
        Err(e) => {
            return RewardBreakdown {
                format: 0.0,
                component: 0.0,
                total: 0.0,
                diagnostics: vec![e.to_string()],
            }
        }
    };
    let mut diagnostics = Vec::new();
    let (component, alpha_task) = match (&parsed, gold) {
        (
            ParsedOutput::Decomposition { steps, reply },
            GoldStandard::Decomposition { steps: gold_steps, reply: gold_reply },
        ) => (
            reward_plan(
                steps,
                reply.as_deref(),
                gold_steps,
                gold_reply.as_deref(),
                embedder,
                config.tau,
            ),
            config.alpha_plan,
        ),
        (ParsedOutput::ToolPlan { calls }, GoldStandard::ToolPlan { calls: gold_calls }) => {
            (reward_tool_list(calls, gold_calls), config.alpha_tool)
        }
        (ParsedOutput::Schedule { text }, GoldStandard::Schedule { problem }) => {
            let (value, violations) = reward_schedule(text, problem);
            diagnostics.extend(violations);
            (value, config.alpha_schedule)
        }
        (ParsedOutput::Workflow { dag }, GoldStandard::Workflow { dag: gold_dag }) => (
            reward_workflow(dag, gold_dag, embedder, config.node_match_threshold),
            config.alpha_workflow,
        ),
        (ParsedOutput::LongHorizon { call }, GoldStandard::LongHorizon { call: gold_call }) => (
            reward_longhorizon(call, gold_call, embedder, config.tau),
            config.alpha_tool,
        ),
        _ => {
            diagnostics.push("gold standard does not match the task kind".into());
            (0.0, 0.0)
        }
    };
    RewardBreakdown {
        format: 1.0,
        component,
        total: config.alpha_format + alpha_task * component,
        diagnostics,
    }
}
