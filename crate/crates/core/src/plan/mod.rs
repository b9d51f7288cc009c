//! Plan synthesis: atomic plans built from tool selections, a set of
//! composition operators over them, and the sample text format.
//!
//! Atomic plans come in three kinds: isolated (one tool), serial (two
//! tools with a causal dependency), and parallel (two related but
//! independent tools). Composition turns them into multi-intent,
//! conditional, and multi-turn tasks; every composition step is recorded
//! in a provenance log that can be replayed to reproduce the plan
//! byte-for-byte.

mod compose;

pub use compose::{ComposeError, Composer};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationRequest, GrammarId, TextGenerator};
use crate::catalog::{Relation, SelectionKind, ToolCatalog, ToolGraphs, ToolSelection};
use crate::textutil::fnv1a64;

/// Placeholder prefix marking a parameter fed by an earlier step's output,
/// e.g. `$step1.flight_id`.
pub const STEP_PLACEHOLDER_PREFIX: &str = "$step";

/// One executable sub-task: a target tool invocation with partially bound
/// arguments. Masked parameters are required arguments deliberately
/// withheld so the agent must ask the user for them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTask {
    pub tool: String,
    pub intent: String,
    #[serde(default)]
    pub bound_args: BTreeMap<String, String>,
    #[serde(default)]
    pub masked_params: BTreeSet<String>,
}

/// A minimal semantic unit: one or two tool executions plus the query
/// they answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicPlan {
    pub id: String,
    pub kind: SelectionKind,
    pub query: String,
    pub steps: Vec<SubTask>,
    pub relation: Relation,
    pub reply: String,
}

impl AtomicPlan {
    pub fn validate(&self, catalog: &ToolCatalog) -> Result<(), PlanError> {
        let expected = match self.kind {
            SelectionKind::Isolated => (1, Relation::None),
            SelectionKind::Serial => (2, Relation::Causal),
            SelectionKind::Parallel => (2, Relation::Independent),
        };
        if self.steps.len() != expected.0 {
            return Err(PlanError::InvalidStructure(format!(
                "{} plan must have exactly {} step(s), got {}",
                self.kind,
                expected.0,
                self.steps.len()
            )));
        }
        if self.relation != expected.1 {
            return Err(PlanError::InvalidStructure(format!(
                "{} plan carries the wrong relation",
                self.kind
            )));
        }
        for step in &self.steps {
            validate_subtask(step, catalog)?;
        }
        if self.query.trim().is_empty() {
            return Err(PlanError::InvalidStructure("empty query".into()));
        }
        Ok(())
    }
}

fn validate_subtask(step: &SubTask, catalog: &ToolCatalog) -> Result<(), PlanError> {
    if step.intent.trim().is_empty() {
        return Err(PlanError::InvalidStructure(format!(
            "step for {} has an empty intent",
            step.tool
        )));
    }
    let tool = catalog
        .get(&step.tool)
        .ok_or_else(|| PlanError::InvalidStructure(format!("unknown tool {}", step.tool)))?;
    for masked in &step.masked_params {
        match tool.parameter(masked) {
            Some(p) if p.required => {}
            _ => {
                return Err(PlanError::InvalidStructure(format!(
                    "masked parameter {masked} is not a required parameter of {}",
                    step.tool
                )))
            }
        }
    }
    Ok(())
}

/// Composition operators over plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Concatenate,
    Add,
    Group,
    Mask,
    Transform,
    Split,
}

impl Operator {
    pub const ALL: [Operator; 6] = [
        Operator::Concatenate,
        Operator::Add,
        Operator::Group,
        Operator::Mask,
        Operator::Transform,
        Operator::Split,
    ];

    pub fn arity(&self) -> usize {
        match self {
            Operator::Concatenate | Operator::Add | Operator::Group => 2,
            Operator::Mask | Operator::Transform | Operator::Split => 1,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Operator::Concatenate => "concatenate",
            Operator::Add => "add",
            Operator::Group => "group",
            Operator::Mask => "mask",
            Operator::Transform => "transform",
            Operator::Split => "split",
        };
        f.write_str(name)
    }
}

/// Edge between plan nodes: fixed order, or conditional on the upstream
/// observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "condition")]
pub enum PlanEdgeKind {
    Sequence,
    Conditional(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub kind: PlanEdgeKind,
}

/// One composition event in a plan's audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub operator: Operator,
    pub inputs: Vec<String>,
    pub output: String,
    pub seed: u64,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// A composed plan: possibly multi-turn query, sub-task nodes, and a DAG
/// of sequence/conditional edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedPlan {
    pub id: String,
    pub query_turns: Vec<String>,
    pub nodes: Vec<SubTask>,
    pub edges: Vec<PlanEdge>,
    pub provenance: Vec<ProvenanceRecord>,
    pub reply: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("invalid plan structure: {0}")]
    InvalidStructure(String),
    #[error("plan contains a cycle through nodes {0:?}")]
    Cycle(Vec<usize>),
}

impl ComposedPlan {
    /// Lift an atomic plan into the composed representation.
    pub fn from_atomic(plan: &AtomicPlan) -> Self {
        let edges = match plan.kind {
            SelectionKind::Serial => vec![PlanEdge {
                from: 0,
                to: 1,
                kind: PlanEdgeKind::Sequence,
            }],
            _ => Vec::new(),
        };
        Self {
            id: plan.id.clone(),
            query_turns: vec![plan.query.clone()],
            nodes: plan.steps.clone(),
            edges,
            provenance: Vec::new(),
            reply: plan.reply.clone(),
        }
    }

    /// Deterministic topological order of node indices (ties broken by
    /// ascending index).
    pub fn topo_order(&self) -> Result<Vec<usize>, PlanError> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.from >= n || e.to >= n {
                return Err(PlanError::InvalidStructure(format!(
                    "edge ({}, {}) out of range",
                    e.from, e.to
                )));
            }
            adj[e.from].push(e.to);
            indegree[e.to] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|i| indegree[*i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for &child in &adj[next] {
                indegree[child] -= 1;
                if indegree[child] == 0 {
                    ready.insert(child);
                }
            }
        }
        if order.len() < n {
            let cycle: Vec<usize> = (0..n).filter(|i| indegree[*i] > 0).collect();
            return Err(PlanError::Cycle(cycle));
        }
        Ok(order)
    }

    pub fn validate(&self, catalog: &ToolCatalog) -> Result<(), PlanError> {
        if self.nodes.is_empty() {
            return Err(PlanError::InvalidStructure("plan has no nodes".into()));
        }
        if self.query_turns.is_empty() || self.query_turns.iter().any(|t| t.trim().is_empty()) {
            return Err(PlanError::InvalidStructure("empty query turn".into()));
        }
        for step in &self.nodes {
            validate_subtask(step, catalog)?;
        }
        for e in &self.edges {
            if e.from >= self.nodes.len() || e.to >= self.nodes.len() {
                return Err(PlanError::InvalidStructure(format!(
                    "edge ({}, {}) out of range",
                    e.from, e.to
                )));
            }
            if let PlanEdgeKind::Conditional(c) = &e.kind {
                if c.trim().is_empty() {
                    return Err(PlanError::InvalidStructure(
                        "conditional edge with empty condition".into(),
                    ));
                }
            }
        }
        self.topo_order()?;
        Ok(())
    }

    /// Sub-tasks in execution order.
    pub fn ordered_nodes(&self) -> Result<Vec<&SubTask>, PlanError> {
        Ok(self.topo_order()?.into_iter().map(|i| &self.nodes[i]).collect())
    }

    pub fn tool_set(&self) -> BTreeSet<&str> {
        self.nodes.iter().map(|n| n.tool.as_str()).collect()
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("backend failure for prompt {prompt_id:016x}: {source}")]
    Backend {
        prompt_id: u64,
        source: BackendError,
    },
    #[error("malformed generation: {0}")]
    MalformedGeneration(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Generate an atomic plan for a tool selection through a text backend.
///
/// The backend receives the tool documentation as a JSON payload and must
/// answer in the atomic-plan grammar; its steps must name exactly the
/// selected tools in order, which is how "the query mentions every
/// selected tool's intent" is enforced structurally.
pub fn synthesize_atomic(
    selection: &ToolSelection,
    catalog: &ToolCatalog,
    graphs: &ToolGraphs,
    generator: &dyn TextGenerator,
    rng_seed: u64,
) -> Result<AtomicPlan, SynthesisError> {
    let mut tool_payloads = Vec::new();
    for (index, tool_id) in selection.tools.iter().enumerate() {
        let tool = catalog.get(tool_id).ok_or_else(|| {
            SynthesisError::MalformedGeneration(format!("selection names unknown tool {tool_id}"))
        })?;
        let mut params = Vec::new();
        for p in &tool.parameters {
            let mut entry = serde_json::json!({
                "name": p.name,
                "semantic_type": p.semantic_type,
                "required": p.required,
                "description": p.description,
            });
            // a serial consumer's dependent parameter is fed by step 1
            if index == 1 && selection.kind == SelectionKind::Serial {
                if let Some(edge) = graphs.dependency.edge(&selection.tools[0], tool_id) {
                    if edge.parameter == p.name {
                        entry["bound"] = serde_json::Value::String(format!(
                            "{STEP_PLACEHOLDER_PREFIX}1.{}",
                            edge.output_field
                        ));
                    }
                }
            }
            params.push(entry);
        }
        tool_payloads.push(serde_json::json!({
            "name": tool.name,
            "description": tool.description,
            "parameters": params,
        }));
    }
    let payload = serde_json::json!({
        "kind": selection.kind.to_string(),
        "tools": tool_payloads,
    });
    let prompt = format!(
        "Write a user query and a step-by-step plan for the following tools. \
         Answer in the atomic-plan JSON grammar.\n{payload}"
    );
    let request = GenerationRequest::new(prompt, GrammarId::AtomicPlan, rng_seed);
    let prompt_id = fnv1a64(request.prompt.as_bytes());
    let raw = generator
        .generate(&request)
        .map_err(|source| SynthesisError::Backend { prompt_id, source })?;

    let parsed: serde_json::Value = serde_json::from_str(raw.trim())
        .map_err(|e| SynthesisError::MalformedGeneration(format!("not valid JSON: {e}")))?;
    let query = parsed["query"]
        .as_str()
        .filter(|q| !q.trim().is_empty())
        .ok_or_else(|| SynthesisError::MalformedGeneration("missing query".into()))?
        .to_string();
    let reply = parsed["reply"].as_str().unwrap_or("Plan complete.").to_string();
    let steps_raw = parsed["steps"]
        .as_array()
        .ok_or_else(|| SynthesisError::MalformedGeneration("missing steps".into()))?;
    if steps_raw.len() != selection.tools.len() {
        return Err(SynthesisError::MalformedGeneration(format!(
            "expected {} steps, got {}",
            selection.tools.len(),
            steps_raw.len()
        )));
    }
    let mut steps = Vec::new();
    for (expected_tool, step) in selection.tools.iter().zip(steps_raw) {
        let tool = step["tool"].as_str().unwrap_or_default();
        if tool != expected_tool {
            return Err(SynthesisError::MalformedGeneration(format!(
                "step names tool {tool}, selection requires {expected_tool}"
            )));
        }
        let intent = step["intent"]
            .as_str()
            .filter(|i| !i.trim().is_empty())
            .ok_or_else(|| SynthesisError::MalformedGeneration("step without intent".into()))?
            .to_string();
        let bound_args = step["args"]
            .as_object()
            .map(|m| {
                m.iter()
                    .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
                    .collect()
            })
            .unwrap_or_default();
        steps.push(SubTask {
            tool: tool.to_string(),
            intent,
            bound_args,
            masked_params: BTreeSet::new(),
        });
    }
    let plan = AtomicPlan {
        id: format!(
            "u-{}-{:016x}",
            selection.kind,
            fnv1a64(format!("{}|{rng_seed}", selection.tools.join(",")).as_bytes())
        ),
        kind: selection.kind,
        query,
        steps,
        relation: selection.relation,
        reply,
    };
    plan.validate(catalog)?;
    Ok(plan)
}

/// Render a plan as the sample text format:
///
/// ```text
/// <Query>...</Query>
/// <Plan>Step1. ...
/// Step2. ...</Plan>
/// <Reply>...</Reply>
/// ```
pub fn render_sample(plan: &ComposedPlan) -> String {
    let order = plan.topo_order().unwrap_or_else(|_| (0..plan.nodes.len()).collect());
    let steps: Vec<String> = order
        .iter()
        .enumerate()
        .map(|(k, idx)| format!("Step{}. {}", k + 1, plan.nodes[*idx].intent))
        .collect();
    format!(
        "<Query>{}</Query>\n<Plan>{}</Plan>\n<Reply>{}</Reply>",
        plan.query_turns.join("\n"),
        steps.join("\n"),
        plan.reply
    )
}

/// Replay a provenance log over the original atomic plans. Returns the
/// final composed plan, which must equal the logged output byte-for-byte.
pub fn replay_provenance(
    records: &[ProvenanceRecord],
    atomics: &BTreeMap<String, AtomicPlan>,
    composer: &Composer<'_>,
) -> Result<ComposedPlan, ComposeError> {
    let mut built: BTreeMap<String, ComposedPlan> = BTreeMap::new();
    let mut last: Option<ComposedPlan> = None;
    for record in records {
        let mut inputs: Vec<ComposedPlan> = Vec::new();
        for input_id in &record.inputs {
            let plan = if let Some(done) = built.get(input_id) {
                done.clone()
            } else if let Some(atomic) = atomics.get(input_id) {
                ComposedPlan::from_atomic(atomic)
            } else {
                return Err(ComposeError::IncompatibleInputs {
                    operator: record.operator,
                    reason: format!("replay input {input_id} is unknown"),
                });
            };
            inputs.push(plan);
        }
        let refs: Vec<&ComposedPlan> = inputs.iter().collect();
        let output = composer.compose(record.operator, &refs, record.seed)?;
        if output.id != record.output {
            return Err(ComposeError::IncompatibleInputs {
                operator: record.operator,
                reason: format!(
                    "replay produced id {} but the log recorded {}",
                    output.id, record.output
                ),
            });
        }
        built.insert(output.id.clone(), output.clone());
        last = Some(output);
    }
    last.ok_or(ComposeError::EmptyProvenance)
}
