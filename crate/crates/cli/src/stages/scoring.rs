//! Scoring stages: reward computation over JSON Lines samples, workflow
//! F1 evaluation, and the objective-math checker.

use std::path::Path;
use std::str::FromStr;

use planforge::backend::Embedder;
use planforge::objectives::{
    combined_objective, grpo_objective, group_advantage, ib_objective, kl_estimate, lbl_global,
    max_vio, smoothing_objective, token_entropy_objective, z_loss, SmoothingConfig,
    TokenEntropySeries, DEFAULT_EPS_STD,
};
use planforge::quality::TaskKind;
use planforge::reward::{
    f1_chain, f1_graph, match_nodes, parse_output, reward_total, GoldStandard, ParsedOutput,
};
use planforge::schedule::ScheduleProblem;
use planforge::textutil::derive_seed;
use planforge::workflow::topological_order;

use crate::config::PipelineConfig;
use crate::manifest::StageReport;
use crate::util::{parallel_map, read_jsonl, write_jsonl};

fn row_id(row: &serde_json::Value, index: usize) -> String {
    row["sample_id"]
        .as_str()
        .or_else(|| row["id"].as_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("row-{index:05}"))
}

fn gold_standard(
    kind: TaskKind,
    row: &serde_json::Value,
) -> Result<GoldStandard, String> {
    if kind == TaskKind::Scheduling {
        let problem: ScheduleProblem = serde_json::from_value(row["problem"].clone())
            .map_err(|e| format!("problem: {e}"))?;
        return Ok(GoldStandard::Schedule {
            problem: Box::new(problem),
        });
    }
    let gold_text = row["gold"]
        .as_str()
        .ok_or_else(|| "missing gold field".to_string())?;
    GoldStandard::from_gold_text(kind, gold_text).map_err(|e| format!("gold: {e}"))
}

pub fn run_score(
    config: &PipelineConfig,
    embedder: &dyn Embedder,
    task: &str,
    input: &Path,
    jobs: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let kind = TaskKind::from_str(task).map_err(|e| anyhow::anyhow!(e))?;
    let stage_seed = derive_seed(config.seed, "score", 0);
    let mut report = StageReport::new("score", stage_seed);
    let rows = read_jsonl(input)?;
    let reward_config = config.score.reward.clone();

    let results = parallel_map(rows.len(), jobs, |i| {
        let row = &rows[i];
        let id = row_id(row, i);
        let Some(text) = row["text"].as_str() else {
            return Err((id, "missing text field".to_string()));
        };
        let gold = match gold_standard(kind, row) {
            Ok(gold) => gold,
            Err(reason) => return Err((id, reason)),
        };
        let breakdown = reward_total(kind, text, &gold, &reward_config, embedder);
        Ok(serde_json::json!({
            "sample_id": id,
            "task": kind.as_str(),
            "format": breakdown.format,
            "component": breakdown.component,
            "total": breakdown.total,
            "diagnostics": breakdown.diagnostics,
        }))
    });

    let mut records = Vec::new();
    for result in results {
        match result {
            Ok(record) => {
                records.push(record);
                report.emit();
            }
            Err((id, reason)) => {
                report.drop_sample(&reason);
                records.push(serde_json::json!({
                    "sample_id": id,
                    "task": kind.as_str(),
                    "error": reason,
                }));
            }
        }
    }
    write_jsonl(out, &records)?;
    Ok(report)
}

pub fn run_eval_f1(
    config: &PipelineConfig,
    embedder: &dyn Embedder,
    input: &Path,
    jobs: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let stage_seed = derive_seed(config.seed, "eval_f1", 0);
    let mut report = StageReport::new("eval_f1", stage_seed);
    let rows = read_jsonl(input)?;
    let threshold = config.score.reward.node_match_threshold;

    let results = parallel_map(rows.len(), jobs, |i| {
        let row = &rows[i];
        let id = row_id(row, i);
        let pred_text = row["pred"].as_str().unwrap_or_default();
        let gold_text = row["gold"].as_str().unwrap_or_default();
        let parse = |text: &str| match parse_output(TaskKind::Workflow, text) {
            Ok(ParsedOutput::Workflow { dag }) => Ok(dag),
            Ok(_) => Err("not a workflow".to_string()),
            Err(e) => Err(e.to_string()),
        };
        let pred = parse(pred_text).map_err(|e| (id.clone(), format!("pred: {e}")))?;
        let gold = parse(gold_text).map_err(|e| (id.clone(), format!("gold: {e}")))?;
        let matching = match_nodes(&pred.nodes, &gold.nodes, embedder, threshold);
        let (Ok(pred_topo), Ok(gold_topo)) =
            (topological_order(&pred), topological_order(&gold))
        else {
            return Err((id, "cyclic graph".to_string()));
        };
        let chain = f1_chain(&pred_topo, &gold_topo, &matching);
        let graph = f1_graph(&pred, &gold, &matching);
        Ok(serde_json::json!({
            "sample_id": id,
            "f1_chain": chain,
            "f1_graph": graph,
            "reward_workflow": (chain + graph) / 2.0,
            "matched_nodes": matching.pairs.len(),
        }))
    });

    let mut records = Vec::new();
    for result in results {
        match result {
            Ok(record) => {
                records.push(record);
                report.emit();
            }
            Err((id, reason)) => {
                report.drop_sample(&reason);
                records.push(serde_json::json!({"sample_id": id, "error": reason}));
            }
        }
    }
    write_jsonl(out, &records)?;
    Ok(report)
}

/// Evaluate every objective present in the input document. Each key maps
/// to one formula; the output carries one result (or error) per key.
pub fn run_math_check(
    config: &PipelineConfig,
    input: &Path,
    out: Option<&Path>,
) -> anyhow::Result<StageReport> {
    let stage_seed = derive_seed(config.seed, "math_check", 0);
    let mut report = StageReport::new("math_check", stage_seed);
    let text = std::fs::read_to_string(input)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let object = doc
        .as_object()
        .ok_or_else(|| anyhow::anyhow!("math-check input must be a JSON object"))?;

    let mut results = serde_json::Map::new();
    for (key, spec) in object {
        let outcome = evaluate(key, spec);
        match outcome {
            Ok(value) => {
                results.insert(key.clone(), value);
                report.emit();
            }
            Err(reason) => {
                results.insert(key.clone(), serde_json::json!({"error": reason}));
                report.drop_sample(&reason);
            }
        }
    }
    let rendered = serde_json::to_string_pretty(&serde_json::Value::Object(results))? + "\n";
    match out {
        Some(path) => std::fs::write(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(report)
}

fn floats(value: &serde_json::Value) -> Result<Vec<f64>, String> {
    value
        .as_array()
        .ok_or("expected an array of numbers".to_string())?
        .iter()
        .map(|v| v.as_f64().ok_or("expected a number".to_string()))
        .collect()
}

fn nested_floats(value: &serde_json::Value) -> Result<Vec<Vec<f64>>, String> {
    value
        .as_array()
        .ok_or("expected an array of arrays".to_string())?
        .iter()
        .map(floats)
        .collect()
}

fn evaluate(key: &str, spec: &serde_json::Value) -> Result<serde_json::Value, String> {
    let num = |field: &str, default: Option<f64>| -> Result<f64, String> {
        match spec.get(field).and_then(|v| v.as_f64()) {
            Some(v) => Ok(v),
            None => default.ok_or(format!("missing field `{field}`")),
        }
    };
    match key {
        "group_advantage" => {
            let rewards = floats(&spec["rewards"])?;
            let eps = num("eps_std", Some(DEFAULT_EPS_STD))?;
            group_advantage(&rewards, eps)
                .map(|a| serde_json::json!(a))
                .map_err(|e| e.to_string())
        }
        "kl_estimate" => {
            let ratios = floats(&spec["log_ratios"])?;
            Ok(serde_json::json!(kl_estimate(&ratios)))
        }
        "grpo_objective" => {
            let ratios = nested_floats(&spec["ratios"])?;
            let advantages = floats(&spec["advantages"])?;
            grpo_objective(
                &ratios,
                &advantages,
                num("eps_clip", Some(0.2))?,
                num("beta", Some(0.0))?,
                num("kl", Some(0.0))?,
            )
            .map(|v| serde_json::json!(v))
            .map_err(|e| e.to_string())
        }
        "token_entropy_objective" => {
            let series: TokenEntropySeries =
                serde_json::from_value(spec.clone()).map_err(|e| e.to_string())?;
            token_entropy_objective(&series)
                .map(|v| serde_json::json!(v))
                .map_err(|e| e.to_string())
        }
        "smoothing_objective" => {
            let series: TokenEntropySeries =
                serde_json::from_value(spec["series"].clone()).map_err(|e| e.to_string())?;
            let config: SmoothingConfig =
                serde_json::from_value(spec["config"].clone()).map_err(|e| e.to_string())?;
            smoothing_objective(&series, &config)
                .map(|v| serde_json::json!(v))
                .map_err(|e| e.to_string())
        }
        "ib_objective" => Ok(serde_json::json!(ib_objective(
            num("h_think_given_prompt", None)?,
            num("h_action_given_think", None)?,
            num("gamma", Some(1.0))?,
        ))),
        "combined_objective" => combined_objective(
            num("j_grpo", None)?,
            num("j_token", None)?,
            num("j_smooth", None)?,
            num("j_ib", None)?,
            num("lambda1", Some(0.5))?,
            num("lambda2", Some(0.5))?,
            num("lambda3", Some(0.5))?,
        )
        .map(|v| serde_json::json!(v))
        .map_err(|e| e.to_string()),
        "lbl_global" => {
            let f = floats(&spec["dispatch_fractions"])?;
            let p = floats(&spec["mean_gate_probs"])?;
            lbl_global(&f, &p)
                .map(|v| serde_json::json!(v))
                .map_err(|e| e.to_string())
        }
        "z_loss" => {
            let logits = nested_floats(&spec["logits"])?;
            Ok(serde_json::json!(z_loss(&logits)))
        }
        "max_vio" => {
            let loads = floats(&spec["loads"])?;
            max_vio(&loads)
                .map(|v| serde_json::json!(v))
                .map_err(|e| e.to_string())
        }
        other => Err(format!("unknown objective `{other}`")),
    }
}
