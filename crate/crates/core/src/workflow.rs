//! Workflow DAGs: gold-plan construction with distractor candidates,
//! deterministic topological ordering, validity checks, and the
//! `Node:/Edge:` text format with its parser.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A node reference in serialized form: START, END, or a 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeRef {
    Start,
    Index(usize),
    End,
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Start => write!(f, "START"),
            NodeRef::Index(i) => write!(f, "{i}"),
            NodeRef::End => write!(f, "END"),
        }
    }
}

/// A workflow DAG over indexed sub-task texts plus START/END sentinels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowDag {
    /// Sub-task texts; node `k` in edges refers to `nodes[k - 1]`.
    pub nodes: Vec<String>,
    pub edges: BTreeSet<(NodeRef, NodeRef)>,
    /// Which nodes came from the gold plan.
    pub gold_mask: Vec<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("cycle detected through nodes {0:?}")]
    CycleDetected(Vec<usize>),
    #[error("candidate pool too small: need {needed}, have {available}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("invalid gold plan: {0}")]
    InvalidGold(String),
}

/// Parse failure with byte position and expectation.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("workflow parse error at byte {position}: expected {expectation}")]
pub struct WorkflowParseError {
    pub position: usize,
    pub expectation: String,
}

impl WorkflowDag {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Non-sentinel edges, as 0-based (from, to) pairs.
    pub fn inner_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().filter_map(|(a, b)| match (a, b) {
            (NodeRef::Index(x), NodeRef::Index(y)) => Some((*x - 1, *y - 1)),
            _ => None,
        })
    }

    /// Structural reasons this graph is invalid; empty means valid.
    pub fn structural_reasons(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        let n = self.nodes.len();
        for (a, b) in &self.edges {
            for endpoint in [a, b] {
                if let NodeRef::Index(i) = endpoint {
                    if *i == 0 || *i > n {
                        reasons.push(format!("edge references unknown node {i}"));
                    }
                }
            }
            if matches!(b, NodeRef::Start) {
                reasons.push("START node has an in-edge".into());
            }
            if matches!(a, NodeRef::End) {
                reasons.push("END node has an out-edge".into());
            }
            if a == b {
                reasons.push(format!("self-edge on {a}"));
            }
        }
        if !reasons.is_empty() {
            return reasons;
        }
        if topological_order(self).is_err() {
            reasons.push("graph contains a cycle".into());
        }
        // reachability from START and to END over all nodes
        let mut from_start = vec![false; n];
        let mut to_end = vec![false; n];
        let fwd: Vec<(usize, usize)> = self.inner_edges().collect();
        let start_children: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|(a, b)| match (a, b) {
                (NodeRef::Start, NodeRef::Index(i)) => Some(*i - 1),
                _ => None,
            })
            .collect();
        let end_parents: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|(a, b)| match (a, b) {
                (NodeRef::Index(i), NodeRef::End) => Some(*i - 1),
                _ => None,
            })
            .collect();
        let mut stack = start_children;
        while let Some(i) = stack.pop() {
            if !from_start[i] {
                from_start[i] = true;
                stack.extend(fwd.iter().filter(|(a, _)| *a == i).map(|(_, b)| *b));
            }
        }
        let mut stack = end_parents;
        while let Some(i) = stack.pop() {
            if !to_end[i] {
                to_end[i] = true;
                stack.extend(fwd.iter().filter(|(_, b)| *b == i).map(|(a, _)| *a));
            }
        }
        for i in 0..n {
            if !from_start[i] {
                reasons.push(format!("node {} unreachable from START sentinel", i + 1));
            }
            if !to_end[i] {
                reasons.push(format!("node {} does not reach END sentinel", i + 1));
            }
        }
        reasons
    }
}

/// Kahn's algorithm with deterministic tie-breaking by ascending node
/// index. Returns 1-based indices; sentinels are excluded.
pub fn topological_order(dag: &WorkflowDag) -> Result<Vec<usize>, WorkflowError> {
    let n = dag.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in dag.inner_edges() {
        if a < n && b < n {
            adj[a].push(b);
            indegree[b] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|i| indegree[*i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next + 1);
        for &child in &adj[next] {
            indegree[child] -= 1;
            if indegree[child] == 0 {
                ready.insert(child);
            }
        }
    }
    if order.len() < n {
        // witness: walk the remaining nodes until a repeat shows the cycle
        let remaining: BTreeSet<usize> = (0..n).filter(|i| indegree[*i] > 0).collect();
        let start = *remaining.iter().next().unwrap();
        let mut seen = Vec::new();
        let mut current = start;
        loop {
            if let Some(pos) = seen.iter().position(|&x| x == current) {
                let cycle: Vec<usize> = seen[pos..].iter().map(|i| i + 1).collect();
                return Err(WorkflowError::CycleDetected(cycle));
            }
            seen.push(current);
            current = *adj[current]
                .iter()
                .find(|c| remaining.contains(c))
                .expect("remaining node inside a cycle has a remaining successor");
        }
    }
    Ok(order)
}

/// An ordered gold plan: sub-task texts plus dependencies among them
/// (0-based indices into `steps`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPlan {
    pub task: String,
    pub steps: Vec<String>,
    #[serde(default)]
    pub deps: Vec<(usize, usize)>,
}

/// A workflow DAG plus the candidate list rendered to the model
/// (gold actions and distractors, shuffled).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkflowSample {
    pub task: String,
    pub dag: WorkflowDag,
    pub candidates: Vec<String>,
}

/// Build the gold workflow DAG and a distractor-augmented candidate list.
/// Distractors appear only in the candidate list, never in the DAG.
pub fn build_workflow(
    gold: &GoldPlan,
    pool: &[String],
    n_distractors: usize,
    rng_seed: u64,
) -> Result<WorkflowSample, WorkflowError> {
    if gold.steps.is_empty() {
        return Err(WorkflowError::InvalidGold("gold plan has no steps".into()));
    }
    let n = gold.steps.len();
    for (a, b) in &gold.deps {
        if *a >= n || *b >= n {
            return Err(WorkflowError::InvalidGold(format!(
                "dependency ({a}, {b}) out of range"
            )));
        }
    }
    let mut edges: BTreeSet<(NodeRef, NodeRef)> = gold
        .deps
        .iter()
        .map(|(a, b)| (NodeRef::Index(a + 1), NodeRef::Index(b + 1)))
        .collect();
    let has_in: BTreeSet<usize> = gold.deps.iter().map(|(_, b)| *b).collect();
    let has_out: BTreeSet<usize> = gold.deps.iter().map(|(a, _)| *a).collect();
    for i in 0..n {
        if !has_in.contains(&i) {
            edges.insert((NodeRef::Start, NodeRef::Index(i + 1)));
        }
        if !has_out.contains(&i) {
            edges.insert((NodeRef::Index(i + 1), NodeRef::End));
        }
    }
    let dag = WorkflowDag {
        nodes: gold.steps.clone(),
        edges,
        gold_mask: vec![true; n],
    };
    topological_order(&dag)?;

    let gold_set: BTreeSet<&String> = gold.steps.iter().collect();
    let eligible: Vec<&String> = pool.iter().filter(|p| !gold_set.contains(p)).collect();
    if eligible.len() < n_distractors {
        return Err(WorkflowError::PoolTooSmall {
            needed: n_distractors,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen = index_sample(&mut rng, eligible.len(), n_distractors);
    let mut candidates: Vec<String> = gold.steps.clone();
    candidates.extend(chosen.iter().map(|i| eligible[i].clone()));
    candidates.shuffle(&mut rng);

    Ok(WorkflowSample {
        task: gold.task.clone(),
        dag,
        candidates,
    })
}

/// Validity of a DAG against its gold plan. Empty result means valid.
///
/// Checks: every gold step present, topological order restricted to gold
/// nodes matches the gold step order, no cycles, sentinel wiring sound.
pub fn validate_workflow(dag: &WorkflowDag, gold: &GoldPlan) -> Vec<String> {
    let mut reasons = dag.structural_reasons();
    let mut gold_positions: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, step) in gold.steps.iter().enumerate() {
        gold_positions.insert(step.as_str(), i);
    }
    for step in &gold.steps {
        if !dag.nodes.iter().any(|n| n == step) {
            reasons.push(format!("missing gold node: {step}"));
        }
    }
    if reasons.is_empty() {
        if let Ok(order) = topological_order(dag) {
            let derived: Vec<usize> = order
                .iter()
                .filter_map(|idx| gold_positions.get(dag.nodes[idx - 1].as_str()).copied())
                .collect();
            let expected: Vec<usize> = (0..gold.steps.len()).collect();
            if derived != expected {
                reasons.push(format!(
                    "order deviation: topological gold sequence {derived:?} != {expected:?}"
                ));
            }
        }
    }
    reasons
}

/// Serialize to the node/edge text format:
///
/// ```text
/// Node:
/// 1: first sub-task
/// 2: second sub-task
/// Edge: (START,1) (1,2) (2,END)
/// ```
pub fn serialize_workflow(dag: &WorkflowDag) -> String {
    let mut out = String::from("Node:\n");
    for (i, node) in dag.nodes.iter().enumerate() {
        out.push_str(&format!("{}: {}\n", i + 1, node));
    }
    out.push_str("Edge:");
    for (a, b) in &dag.edges {
        out.push_str(&format!(" ({a},{b})"));
    }
    out
}

/// Parse the node/edge text format. Accepts `Node:`/`Nodes:` and
/// `Edge:`/`Edges:` headers, `1:` or `1.` node markers, and edge pairs
/// separated by whitespace or commas.
pub fn parse_workflow(text: &str) -> Result<WorkflowDag, WorkflowParseError> {
    let edge_header = regex::Regex::new(r"(?i)\bedges?\s*:").unwrap();
    let edge_match = edge_header
        .find_iter(text)
        .last()
        .ok_or_else(|| WorkflowParseError {
            position: text.len(),
            expectation: "an `Edge:` section".into(),
        })?;
    let node_section = &text[..edge_match.start()];
    let edge_section = &text[edge_match.end()..];

    // the header colon is optional: one-line graphs write `Node 1:...`
    let node_header = regex::Regex::new(r"(?i)\bnodes?\s*:?").unwrap();
    let node_start = node_header
        .find(node_section)
        .map(|m| m.end())
        .ok_or_else(|| WorkflowParseError {
            position: 0,
            expectation: "a `Node:` section".into(),
        })?;
    let body = &node_section[node_start..];

    // markers are matched against the next expected index, so digits inside
    // sub-task texts (times, years) do not start a new entry
    let mut nodes: Vec<String> = Vec::new();
    let mut expected = 1usize;
    let mut cursor = 0usize;
    let mut spans: Vec<usize> = Vec::new(); // start offsets of each entry text
    loop {
        let marker = format!("{expected}");
        let found = body[cursor..].find(&marker).and_then(|rel| {
            let at = cursor + rel;
            let after = at + marker.len();
            let delim_ok = body[after..].starts_with(':') || body[after..].starts_with('.');
            let before_ok = body[..at]
                .chars()
                .last()
                .map(|c| c.is_whitespace() || c == '(' )
                .unwrap_or(true);
            (delim_ok && before_ok).then_some((at, after + 1))
        });
        match found {
            Some((at, text_start)) => {
                if expected > 1 {
                    nodes.push(body[spans[expected - 2]..at].trim().trim_end_matches(',').to_string());
                }
                spans.push(text_start);
                expected += 1;
                cursor = text_start;
            }
            None => break,
        }
    }
    if spans.is_empty() {
        return Err(WorkflowParseError {
            position: node_start,
            expectation: "node entry `1:`".into(),
        });
    }
    nodes.push(body[*spans.last().unwrap()..].trim().to_string());
    if let Some(pos) = nodes.iter().position(|n| n.is_empty()) {
        return Err(WorkflowParseError {
            position: spans[pos],
            expectation: format!("non-empty text for node {}", pos + 1),
        });
    }
    let n = nodes.len();

    let pair = regex::Regex::new(r"\(\s*([A-Za-z0-9_]+)\s*,\s*([A-Za-z0-9_]+)\s*\)").unwrap();
    let mut edges = BTreeSet::new();
    let mut any = false;
    for caps in pair.captures_iter(edge_section) {
        any = true;
        let position = edge_match.end() + caps.get(0).unwrap().start();
        let resolve = |token: &str| -> Result<NodeRef, WorkflowParseError> {
            match token {
                "START" => Ok(NodeRef::Start),
                "END" => Ok(NodeRef::End),
                other => match other.parse::<usize>() {
                    Ok(i) if i >= 1 && i <= n => Ok(NodeRef::Index(i)),
                    _ => Err(WorkflowParseError {
                        position,
                        expectation: format!("node reference in 1..={n}, START, or END"),
                    }),
                },
            }
        };
        let a = resolve(&caps[1])?;
        let b = resolve(&caps[2])?;
        edges.insert((a, b));
    }
    if !any {
        return Err(WorkflowParseError {
            position: edge_match.end(),
            expectation: "at least one `(a,b)` edge".into(),
        });
    }

    Ok(WorkflowDag {
        nodes,
        edges,
        gold_mask: vec![true; n],
    })
}
