//! Synthesis stages: decomposition plans, golden-plan trajectories, and
//! workflow samples.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use planforge::catalog::{
    build_graphs_with_overrides, sample_selection, GraphOverrides, SelectionKind, ToolCatalog,
    ToolGraphs,
};
use planforge::entities::{demo_action_pool, demo_catalog, demo_gold_plans};
use planforge::plan::{
    render_sample, synthesize_atomic, ComposedPlan, Composer, Operator,
};
use planforge::backend::{Embedder, StubJudge, TextGenerator};
use planforge::quality::{audit_semantics, dedup, validate_schema, Fingerprint, TaskKind};
use planforge::textutil::derive_seed;
use planforge::trajectory::{
    synthesize_plan_trajectory, to_chat_messages, EpisodeLimits, StubSimulator,
    TrajectoryBackends, TrajectoryLabel,
};
use planforge::workflow::{build_workflow, serialize_workflow, validate_workflow};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::manifest::StageReport;
use crate::util::write_jsonl;

pub fn load_catalog(config: &PipelineConfig) -> anyhow::Result<(ToolCatalog, ToolGraphs)> {
    let catalog = match &config.synth_plans.tools_jsonl {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading tool catalog {}", path.display()))?;
            ToolCatalog::from_jsonl(&text)
                .map_err(|e| anyhow::anyhow!("catalog ingestion failed: {e}"))?
                .0
        }
        None => demo_catalog(),
    };
    let overrides = match &config.synth_plans.graph_overrides {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading overrides {}", path.display()))?;
            serde_json::from_str::<GraphOverrides>(&text)
                .with_context(|| "parsing graph overrides")?
        }
        None => GraphOverrides::default(),
    };
    let graphs = build_graphs_with_overrides(&catalog, &overrides)
        .map_err(|e| anyhow::anyhow!("graph construction failed: {e}"))?;
    Ok((catalog, graphs))
}

/// Generate one composed plan from a sample seed. Composition failures
/// fall back to simpler structures rather than dropping the sample.
pub fn generate_plan(
    catalog: &ToolCatalog,
    graphs: &ToolGraphs,
    config: &PipelineConfig,
    generator: &dyn TextGenerator,
    sample_seed: u64,
) -> anyhow::Result<ComposedPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let composer = Composer::new(catalog, graphs);

    let kinds = [
        SelectionKind::Isolated,
        SelectionKind::Serial,
        SelectionKind::Parallel,
    ];
    let atomic = |rng: &mut ChaCha8Rng| -> anyhow::Result<ComposedPlan> {
        // fall back to isolated when a relation graph has no edges
        let kind = *kinds.choose(rng).unwrap();
        let selection = sample_selection(graphs, kind, rng.random())
            .or_else(|_| sample_selection(graphs, SelectionKind::Isolated, rng.random()))
            .map_err(|e| anyhow::anyhow!("selection failed: {e}"))?;
        let plan = synthesize_atomic(&selection, catalog, graphs, generator, rng.random())
            .map_err(|e| anyhow::anyhow!("atomic synthesis failed: {e}"))?;
        Ok(ComposedPlan::from_atomic(&plan))
    };

    let mut plan = atomic(&mut rng)?;
    if rng.random_bool(config.synth_plans.atomic_fraction) {
        return Ok(plan);
    }
    let depth = rng.random_range(1..=config.synth_plans.max_depth.max(1));
    for _ in 0..depth {
        let op = *Operator::ALL.choose(&mut rng).unwrap();
        let op_seed: u64 = rng.random();
        let result = match op.arity() {
            1 => composer.compose(op, &[&plan], op_seed),
            _ => {
                let other = atomic(&mut rng)?;
                composer.compose(op, &[&plan, &other], op_seed)
            }
        };
        if let Ok(composed) = result {
            plan = composed;
        }
        // incompatible inputs are fine: keep the current plan and move on
    }
    Ok(plan)
}

pub fn synth_plans(
    config: &PipelineConfig,
    generator: &dyn TextGenerator,
    count: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let (catalog, graphs) = load_catalog(config)?;
    let stage_seed = derive_seed(config.seed, "synth_plans", 0);
    let mut report = StageReport::new("synth_plans", stage_seed);

    let mut rows: Vec<(String, serde_json::Value, serde_json::Value)> = Vec::new();
    let mut fingerprints = Vec::new();
    for i in 0..count {
        let sample_seed = derive_seed(config.seed, "synth_plans", i as u64 + 1);
        let plan = generate_plan(&catalog, &graphs, config, generator, sample_seed)?;
        let text = render_sample(&plan);
        if let Err(e) = validate_schema(&text, TaskKind::Decomposition) {
            report.drop_sample(&format!("schema: {e}"));
            continue;
        }
        let record = serde_json::json!({
            "id": plan.id,
            "query": plan.query_turns.join("\n"),
            "plan_text": text,
            "provenance": plan.provenance,
            "seed": sample_seed,
        });
        let mut messages: Vec<serde_json::Value> = plan
            .query_turns
            .iter()
            .map(|turn| serde_json::json!({"role": "user", "content": turn}))
            .collect();
        let assistant = text
            .split_once("</Query>\n")
            .map(|(_, rest)| rest.to_string())
            .unwrap_or_else(|| text.clone());
        messages.push(serde_json::json!({"role": "assistant", "content": assistant}));
        let chat = serde_json::json!({"messages": messages});
        fingerprints.push(Fingerprint::of(plan.id.clone(), &text).expect("non-empty sample"));
        rows.push((plan.id.clone(), record, chat));
    }

    let outcome = dedup(&fingerprints, config.synth_plans.dedup_threshold)
        .map_err(|e| anyhow::anyhow!("dedup failed: {e}"))?;
    let retained: std::collections::BTreeSet<&String> = outcome.retained.iter().collect();
    let dropped_by: BTreeMap<&String, &String> = outcome
        .dropped
        .iter()
        .map(|d| (&d.dropped, &d.kept))
        .collect();

    // semantic audit; failures are parked in the quarantine file so they
    // can be re-audited, never silently deleted
    let judge = match &config.synth_plans.audit_fail_marker {
        Some(marker) => StubJudge::fail_on_marker(marker, "audit marker present"),
        None => StubJudge::pass_all(),
    };

    let mut records = Vec::new();
    let mut chats = Vec::new();
    let mut quarantine = Vec::new();
    for (id, record, chat) in &rows {
        if !retained.contains(id) {
            let kept = dropped_by.get(id).map(|s| s.as_str()).unwrap_or("?");
            report.drop_sample(&format!("near-duplicate of {kept}"));
            continue;
        }
        let text = record["plan_text"].as_str().unwrap_or_default();
        match audit_semantics(id, text, &config.synth_plans.audit_rubric, &judge) {
            Ok(audit) if audit.verdict.pass => {
                report.emit();
                records.push(record.clone());
                chats.push(chat.clone());
            }
            Ok(audit) => {
                report.drop_sample("quarantined: semantic audit failed");
                quarantine.push(serde_json::json!({
                    "sample_id": id,
                    "stage": "synth_plans/audit",
                    "reason": audit.verdict.reasons.join("; "),
                    "judge_prompt_hash": audit.judge_prompt_hash,
                    "record": record,
                }));
            }
            Err(e) => {
                // backend failure parks the sample for a later re-audit
                report.drop_sample("quarantined: audit backend failure");
                quarantine.push(serde_json::json!({
                    "sample_id": id,
                    "stage": "synth_plans/audit",
                    "reason": format!("backend failure: {e}"),
                    "record": record,
                }));
            }
        }
    }
    write_jsonl(out, &records)?;
    write_jsonl(&chat_path(out), &chats)?;
    write_jsonl(&quarantine_path(out), &quarantine)?;
    Ok(report)
}

pub fn quarantine_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".quarantine.jsonl");
    std::path::PathBuf::from(name)
}

pub fn chat_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".chat.jsonl");
    std::path::PathBuf::from(name)
}

pub fn synth_trajectories(
    config: &PipelineConfig,
    generator: &dyn TextGenerator,
    embedder: &dyn Embedder,
    count: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let (catalog, graphs) = load_catalog(config)?;
    let stage_seed = derive_seed(config.seed, "synth_trajectories", 0);
    let mut report = StageReport::new("synth_trajectories", stage_seed);
    let simulator = StubSimulator;
    let backends = TrajectoryBackends {
        generator,
        simulator: &simulator,
    };

    let mut records = Vec::new();
    for i in 0..count {
        let sample_seed = derive_seed(config.seed, "synth_trajectories", i as u64 + 1);
        let plan = generate_plan(&catalog, &graphs, config, generator, sample_seed)?;
        let limits = EpisodeLimits {
            max_steps: config.synth_trajectories.max_steps,
        };
        let trajectory =
            match synthesize_plan_trajectory(&plan, &catalog, &backends, limits, sample_seed) {
                Ok(t) => t,
                Err(e) => {
                    report.drop_sample(&format!("episode: {e}"));
                    continue;
                }
            };
        if trajectory.label != TrajectoryLabel::Successful {
            report.drop_sample("episode hit its limits");
            continue;
        }
        let chat = to_chat_messages(&trajectory);
        let mut schema_ok = true;
        for message in chat["messages"].as_array().unwrap() {
            if message["role"] == "assistant" {
                if let Err(e) =
                    validate_schema(message["content"].as_str().unwrap(), TaskKind::ToolPlan)
                {
                    report.drop_sample(&format!("schema: {e}"));
                    schema_ok = false;
                    break;
                }
            }
        }
        if !schema_ok {
            continue;
        }
        // context listing with injected distractor tools
        let gold_tools: Vec<String> = plan.nodes.iter().map(|n| n.tool.clone()).collect();
        let context_tools = planforge::quality::inject_distractors(
            &gold_tools,
            &catalog,
            &graphs.dependency,
            config.synth_trajectories.distractors.max(1),
            embedder,
            sample_seed,
        )
        .map(|aug| aug.tools)
        .unwrap_or(gold_tools);
        let mut record = chat;
        record["id"] = serde_json::json!(format!("traj-{sample_seed:016x}"));
        record["candidate_tools"] = serde_json::json!(context_tools);
        record["seed"] = serde_json::json!(sample_seed);
        records.push(record);
        report.emit();
    }
    write_jsonl(out, &records)?;
    Ok(report)
}

pub fn synth_workflows(
    config: &PipelineConfig,
    count: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let stage_seed = derive_seed(config.seed, "synth_workflows", 0);
    let mut report = StageReport::new("synth_workflows", stage_seed);
    let gold_plans = demo_gold_plans();
    let pool = demo_action_pool();
    let workflows = &config.synth_workflows;

    // the in-context examples are fixed across samples, built from the
    // first gold plans
    let mut example_blocks: Vec<(String, String)> = Vec::new();
    for (i, gold) in gold_plans.iter().take(workflows.in_context_examples).enumerate() {
        let sample = build_workflow(gold, &pool, workflows.n_distractors, stage_seed ^ i as u64)
            .map_err(|e| anyhow::anyhow!("example workflow failed: {e}"))?;
        example_blocks.push((render_workflow_user_turn(&sample.task, &sample.candidates), serialize_workflow(&sample.dag)));
    }

    let mut records = Vec::new();
    for i in 0..count {
        let sample_seed = derive_seed(config.seed, "synth_workflows", i as u64 + 1);
        let gold = &gold_plans[workflows.in_context_examples..]
            [i % (gold_plans.len() - workflows.in_context_examples)];
        let sample = match build_workflow(gold, &pool, workflows.n_distractors, sample_seed) {
            Ok(s) => s,
            Err(e) => {
                report.drop_sample(&format!("build: {e}"));
                continue;
            }
        };
        let reasons = validate_workflow(&sample.dag, gold);
        if !reasons.is_empty() {
            report.drop_sample(&format!("validate: {}", reasons.join("; ")));
            continue;
        }
        let answer = serialize_workflow(&sample.dag);
        if validate_schema(&answer, TaskKind::Workflow).is_err() {
            report.drop_sample("schema: serialized graph does not parse");
            continue;
        }

        let mut messages = vec![serde_json::json!({
            "role": "system",
            "content": workflows.system_prompt,
        })];
        for (i, (user, assistant)) in example_blocks.iter().enumerate() {
            let prefix = if i == 0 {
                "Here are examples. You need to strictly follow the format provided in the examples.\n"
            } else {
                ""
            };
            messages.push(serde_json::json!({
                "role": "user",
                "content": format!("{prefix}{user}"),
            }));
            messages.push(serde_json::json!({"role": "assistant", "content": assistant}));
        }
        messages.push(serde_json::json!({
            "role": "user",
            "content": format!("Now it's your turn.\n{}", render_workflow_user_turn(&sample.task, &sample.candidates)),
        }));
        messages.push(serde_json::json!({"role": "assistant", "content": answer}));
        records.push(serde_json::json!({
            "id": format!("wf-{sample_seed:016x}"),
            "messages": messages,
            "gold": gold,
            "seed": sample_seed,
        }));
        report.emit();
    }
    write_jsonl(out, &records)?;
    Ok(report)
}

fn render_workflow_user_turn(task: &str, candidates: &[String]) -> String {
    let quoted: Vec<String> = candidates.iter().map(|c| format!("'{c}'")).collect();
    format!(
        "Task: {task}\nThe api list you can use: [{}]",
        quoted.join(", ")
    )
}
