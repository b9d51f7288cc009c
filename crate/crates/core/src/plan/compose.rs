//! The six composition operators over plans.
//!
//! Each application is deterministic in (operator, inputs, seed) and
//! appends one provenance record, so a composed plan can be reproduced by
//! replaying its log over the original atomic plans.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::*;
use crate::catalog::{ToolCatalog, ToolGraphs};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("operator {operator} rejected its inputs: {reason}")]
    IncompatibleInputs { operator: Operator, reason: String },
    #[error("plan has no required parameters left to mask")]
    NothingToMask,
    #[error("operator {operator} takes {expected} input(s), got {got}")]
    WrongArity {
        operator: Operator,
        expected: usize,
        got: usize,
    },
    #[error("provenance log is empty")]
    EmptyProvenance,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Applies composition operators in the context of a tool catalog and its
/// relationship graphs.
pub struct Composer<'a> {
    pub catalog: &'a ToolCatalog,
    pub graphs: &'a ToolGraphs,
}

impl<'a> Composer<'a> {
    pub fn new(catalog: &'a ToolCatalog, graphs: &'a ToolGraphs) -> Self {
        Self { catalog, graphs }
    }

    pub fn compose(
        &self,
        operator: Operator,
        inputs: &[&ComposedPlan],
        rng_seed: u64,
    ) -> Result<ComposedPlan, ComposeError> {
        if inputs.len() != operator.arity() {
            return Err(ComposeError::WrongArity {
                operator,
                expected: operator.arity(),
                got: inputs.len(),
            });
        }
        let mut notes = Vec::new();
        let mut plan = match operator {
            Operator::Concatenate => self.concatenate(inputs[0], inputs[1], &mut notes)?,
            Operator::Add => self.add(inputs[0], inputs[1])?,
            Operator::Group => self.group(inputs[0], inputs[1], &mut notes)?,
            Operator::Mask => self.mask(inputs[0], rng_seed, &mut notes)?,
            Operator::Transform => self.transform(inputs[0], rng_seed, &mut notes)?,
            Operator::Split => self.split(inputs[0], rng_seed)?,
        };
        let output_id = compose_id(operator, inputs, rng_seed);
        plan.id = output_id.clone();
        plan.provenance = inputs
            .iter()
            .flat_map(|p| p.provenance.iter().cloned())
            .collect();
        plan.provenance.push(ProvenanceRecord {
            operator,
            inputs: inputs.iter().map(|p| p.id.clone()).collect(),
            output: output_id,
            seed: rng_seed,
            notes,
        });
        plan.validate(self.catalog)?;
        Ok(plan)
    }

    /// Chain two plans whose boundary tools have a dependency edge; the
    /// downstream head's dependent parameter is rebound to the upstream
    /// tail's output.
    fn concatenate(
        &self,
        a: &ComposedPlan,
        b: &ComposedPlan,
        notes: &mut Vec<String>,
    ) -> Result<ComposedPlan, ComposeError> {
        let tail_idx = *a
            .topo_order()?
            .last()
            .ok_or_else(|| incompatible(Operator::Concatenate, "left input is empty"))?;
        let head_idx = *b
            .topo_order()?
            .first()
            .ok_or_else(|| incompatible(Operator::Concatenate, "right input is empty"))?;
        let tail_tool = &a.nodes[tail_idx].tool;
        let head_tool = &b.nodes[head_idx].tool;
        let edge = self
            .graphs
            .dependency
            .edge(tail_tool, head_tool)
            .ok_or_else(|| {
                incompatible(
                    Operator::Concatenate,
                    format!("no dependency edge {tail_tool} -> {head_tool}"),
                )
            })?;

        let offset = a.nodes.len();
        let mut nodes = a.nodes.clone();
        nodes.extend(b.nodes.iter().cloned());
        // the tail's 1-based step position feeds the head's parameter
        let tail_step = a
            .topo_order()?
            .iter()
            .position(|i| *i == tail_idx)
            .unwrap_or(0)
            + 1;
        nodes[offset + head_idx].bound_args.insert(
            edge.parameter.clone(),
            format!("{STEP_PLACEHOLDER_PREFIX}{tail_step}.{}", edge.output_field),
        );
        notes.push(format!(
            "bound {head_tool}.{} to {tail_tool}.{}",
            edge.parameter, edge.output_field
        ));

        let mut edges = a.edges.clone();
        edges.extend(b.edges.iter().map(|e| PlanEdge {
            from: e.from + offset,
            to: e.to + offset,
            kind: e.kind.clone(),
        }));
        edges.push(PlanEdge {
            from: tail_idx,
            to: head_idx + offset,
            kind: PlanEdgeKind::Sequence,
        });

        Ok(ComposedPlan {
            id: String::new(),
            query_turns: vec![format!(
                "{} After that, {}",
                a.query_turns.join(" "),
                decapitalize(&b.query_turns.join(" "))
            )],
            nodes,
            edges,
            provenance: Vec::new(),
            reply: a.reply.clone(),
        })
    }

    /// Aggregate two disjoint plans into one multi-intent directive with
    /// no cross edges.
    fn add(&self, a: &ComposedPlan, b: &ComposedPlan) -> Result<ComposedPlan, ComposeError> {
        let tools_a = a.tool_set();
        let tools_b = b.tool_set();
        if tools_a.intersection(&tools_b).next().is_some() {
            return Err(incompatible(Operator::Add, "tool overlap"));
        }
        for x in &tools_a {
            for y in &tools_b {
                if self.graphs.sharing.has_edge(x, y) {
                    return Err(incompatible(
                        Operator::Add,
                        format!("sharing edge between {x} and {y}"),
                    ));
                }
            }
        }
        let offset = a.nodes.len();
        let mut nodes = a.nodes.clone();
        nodes.extend(b.nodes.iter().cloned());
        let mut edges = a.edges.clone();
        edges.extend(b.edges.iter().map(|e| PlanEdge {
            from: e.from + offset,
            to: e.to + offset,
            kind: e.kind.clone(),
        }));
        Ok(ComposedPlan {
            id: String::new(),
            query_turns: vec![format!(
                "{} Also, {}",
                a.query_turns.join(" "),
                decapitalize(&b.query_turns.join(" "))
            )],
            nodes,
            edges,
            provenance: Vec::new(),
            reply: a.reply.clone(),
        })
    }

    /// Fuse plans that bind identically named parameters, consolidating
    /// each shared argument onto the left plan's value.
    fn group(
        &self,
        a: &ComposedPlan,
        b: &ComposedPlan,
        notes: &mut Vec<String>,
    ) -> Result<ComposedPlan, ComposeError> {
        let bound_values = |plan: &ComposedPlan| -> BTreeMap<String, String> {
            let mut values = BTreeMap::new();
            for node in &plan.nodes {
                for (name, value) in &node.bound_args {
                    if !value.is_empty() && !value.starts_with(STEP_PLACEHOLDER_PREFIX) {
                        values.entry(name.clone()).or_insert_with(|| value.clone());
                    }
                }
            }
            values
        };
        let left = bound_values(a);
        let right = bound_values(b);
        let shared: Vec<(&String, &String, &String)> = left
            .iter()
            .filter_map(|(name, lv)| right.get(name).map(|rv| (name, lv, rv)))
            .collect();
        if shared.is_empty() {
            return Err(incompatible(Operator::Group, "no shared parameter names"));
        }

        let offset = a.nodes.len();
        let mut nodes = a.nodes.clone();
        nodes.extend(b.nodes.iter().cloned());
        let mut b_query = b.query_turns.join(" ");
        for (name, keep, dropped) in &shared {
            for node in nodes.iter_mut() {
                if let Some(v) = node.bound_args.get_mut(*name) {
                    if !v.is_empty() && !v.starts_with(STEP_PLACEHOLDER_PREFIX) {
                        *v = (*keep).clone();
                    }
                }
            }
            for node in nodes.iter_mut().skip(offset) {
                node.intent = replace_word(&node.intent, dropped, keep);
            }
            b_query = replace_word(&b_query, dropped, keep);
            notes.push(format!("consolidated {name}={keep} (was {dropped})"));
        }
        let mut edges = a.edges.clone();
        edges.extend(b.edges.iter().map(|e| PlanEdge {
            from: e.from + offset,
            to: e.to + offset,
            kind: e.kind.clone(),
        }));
        Ok(ComposedPlan {
            id: String::new(),
            query_turns: vec![format!(
                "{} In the same context, {}",
                a.query_turns.join(" "),
                decapitalize(&b_query)
            )],
            nodes,
            edges,
            provenance: Vec::new(),
            reply: a.reply.clone(),
        })
    }

    /// Obscure one required bound parameter, forcing a clarification turn.
    fn mask(
        &self,
        input: &ComposedPlan,
        rng_seed: u64,
        notes: &mut Vec<String>,
    ) -> Result<ComposedPlan, ComposeError> {
        let mut candidates: Vec<(usize, String)> = Vec::new();
        for (idx, node) in input.nodes.iter().enumerate() {
            let Some(tool) = self.catalog.get(&node.tool) else {
                continue;
            };
            for p in tool.required_parameters() {
                if node.masked_params.contains(&p.name) {
                    continue;
                }
                match node.bound_args.get(&p.name) {
                    Some(v) if !v.is_empty() && !v.starts_with(STEP_PLACEHOLDER_PREFIX) => {
                        candidates.push((idx, p.name.clone()));
                    }
                    _ => {}
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let (node_idx, param) = candidates
            .choose(&mut rng)
            .cloned()
            .ok_or(ComposeError::NothingToMask)?;

        let mut plan = input.clone();
        let value = plan.nodes[node_idx]
            .bound_args
            .remove(&param)
            .expect("candidate parameter is bound");
        plan.nodes[node_idx].masked_params.insert(param.clone());
        // scrub the obscured value everywhere it is user-visible
        for turn in plan.query_turns.iter_mut() {
            *turn = replace_word(turn, &value, "(to be confirmed)");
        }
        for node in plan.nodes.iter_mut() {
            node.intent = replace_word(&node.intent, &value, "(to be confirmed)");
        }
        plan.nodes[node_idx].intent =
            format!("{} (ask the user for {param})", plan.nodes[node_idx].intent);
        notes.push(format!("clarify({param})"));
        Ok(plan)
    }

    /// Rewrite one sequence edge into a conditional edge whose condition
    /// is templated from the upstream tool's output schema.
    fn transform(
        &self,
        input: &ComposedPlan,
        rng_seed: u64,
        notes: &mut Vec<String>,
    ) -> Result<ComposedPlan, ComposeError> {
        let mut candidates: Vec<(usize, String)> = Vec::new();
        for (edge_idx, edge) in input.edges.iter().enumerate() {
            if !matches!(edge.kind, PlanEdgeKind::Sequence) {
                continue;
            }
            let upstream = &input.nodes[edge.from];
            let Some(tool) = self.catalog.get(&upstream.tool) else {
                continue;
            };
            if let Some(field) = tool.output_schema.first() {
                let condition = if field.name.contains("status") {
                    format!("{} indicates success", field.name)
                } else {
                    format!("{} non-empty", field.name)
                };
                candidates.push((edge_idx, condition));
            }
        }
        if candidates.is_empty() {
            return Err(incompatible(
                Operator::Transform,
                "no sequence edge with an upstream output schema",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let (edge_idx, condition) = candidates.choose(&mut rng).cloned().unwrap();
        let mut plan = input.clone();
        plan.edges[edge_idx].kind = PlanEdgeKind::Conditional(condition.clone());
        let (from, to) = (plan.edges[edge_idx].from, plan.edges[edge_idx].to);
        plan.query_turns = vec![format!(
            "{} Only continue with the later step if {}.",
            plan.query_turns.join(" "),
            condition
        )];
        notes.push(format!("conditional({from} -> {to}: {condition})"));
        Ok(plan)
    }

    /// Partition the query into ordered user turns at a sub-task boundary.
    fn split(&self, input: &ComposedPlan, rng_seed: u64) -> Result<ComposedPlan, ComposeError> {
        if input.nodes.len() < 2 {
            return Err(incompatible(
                Operator::Split,
                "need at least two sub-tasks to split across turns",
            ));
        }
        let order = input.topo_order()?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let cut = 1 + (rng_u64(&mut rng) as usize) % (order.len() - 1);
        let turn_text = |chunk: &[usize], first: bool| {
            let intents: Vec<String> = chunk
                .iter()
                .map(|i| decapitalize(&input.nodes[*i].intent))
                .collect();
            if first {
                format!("Please {}.", intents.join(", then "))
            } else {
                format!("Next, please {}.", intents.join(", then "))
            }
        };
        let mut plan = input.clone();
        plan.query_turns = vec![turn_text(&order[..cut], true), turn_text(&order[cut..], false)];
        Ok(plan)
    }
}

fn incompatible(operator: Operator, reason: impl Into<String>) -> ComposeError {
    ComposeError::IncompatibleInputs {
        operator,
        reason: reason.into(),
    }
}

fn compose_id(operator: Operator, inputs: &[&ComposedPlan], seed: u64) -> String {
    let key = format!(
        "{operator}|{}|{seed}",
        inputs.iter().map(|p| p.id.as_str()).collect::<Vec<_>>().join("+")
    );
    format!("c-{operator}-{:016x}", fnv1a64(key.as_bytes()))
}

fn rng_u64(rng: &mut ChaCha8Rng) -> u64 {
    use rand::Rng;
    rng.random()
}

fn decapitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Replace whole-word occurrences of `needle` (bounded by non-alphanumeric
/// characters) so short values such as "2" cannot mangle longer tokens.
fn replace_word(text: &str, needle: &str, replacement: &str) -> String {
    if needle.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut consumed = 0usize;
    while let Some(pos) = rest.find(needle) {
        let absolute = consumed + pos;
        let before_ok = text[..absolute]
            .chars()
            .last()
            .map(|c| !c.is_alphanumeric())
            .unwrap_or(true);
        let after = absolute + needle.len();
        let after_ok = text[after..]
            .chars()
            .next()
            .map(|c| !c.is_alphanumeric())
            .unwrap_or(true);
        out.push_str(&rest[..pos]);
        if before_ok && after_ok {
            out.push_str(replacement);
        } else {
            out.push_str(needle);
        }
        rest = &rest[pos + needle.len()..];
        consumed = after;
    }
    out.push_str(rest);
    out
}
