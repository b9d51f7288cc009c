//! Data stages: near-duplicate removal over JSON Lines corpora and
//! novelty-based subset selection over embedding files.

use std::path::Path;

use planforge::quality::{dedup, Fingerprint};
use planforge::select::{select, EmbeddingMatrix};
use planforge::textutil::derive_seed;

use crate::config::PipelineConfig;
use crate::manifest::StageReport;
use crate::util::{read_jsonl, write_jsonl};

fn sample_text(row: &serde_json::Value) -> Option<&str> {
    for key in ["text", "plan_text", "query", "content"] {
        if let Some(text) = row[key].as_str() {
            if !text.trim().is_empty() {
                return Some(text);
            }
        }
    }
    None
}

fn sample_id(row: &serde_json::Value, index: usize) -> String {
    row["id"]
        .as_str()
        .or_else(|| row["sample_id"].as_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("row-{index:05}"))
}

pub fn run_dedup(
    config: &PipelineConfig,
    input: &Path,
    threshold: Option<u32>,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let stage_seed = derive_seed(config.seed, "dedup", 0);
    let mut report = StageReport::new("dedup", stage_seed);
    let rows = read_jsonl(input)?;
    let threshold = threshold.unwrap_or(config.dedup.threshold);

    let mut fingerprints = Vec::new();
    let mut keyed_rows = Vec::new();
    let mut skipped = Vec::new();
    for (index, row) in rows.into_iter().enumerate() {
        let id = sample_id(&row, index);
        match sample_text(&row).map(|t| Fingerprint::of(id.clone(), t)) {
            Some(Ok(fp)) => {
                fingerprints.push(fp);
                keyed_rows.push((id, row));
            }
            _ => skipped.push(id),
        }
    }
    let outcome =
        dedup(&fingerprints, threshold).map_err(|e| anyhow::anyhow!("dedup failed: {e}"))?;
    let retained: std::collections::BTreeSet<&String> = outcome.retained.iter().collect();

    let mut emitted = Vec::new();
    let mut drops = Vec::new();
    for id in skipped {
        report.drop_sample("no text field");
        drops.push(serde_json::json!({
            "sample_id": id,
            "stage": "dedup",
            "reason": "no text field",
        }));
    }
    let by_dropped: std::collections::BTreeMap<&String, &planforge::quality::DroppedPair> =
        outcome.dropped.iter().map(|d| (&d.dropped, d)).collect();
    for (id, row) in &keyed_rows {
        if retained.contains(id) {
            emitted.push(row.clone());
            report.emit();
        } else {
            let pair = by_dropped[&id];
            let reason = format!("near-duplicate of {} (distance {})", pair.kept, pair.distance);
            report.drop_sample(&reason);
            drops.push(serde_json::json!({
                "sample_id": id,
                "stage": "dedup",
                "reason": reason,
            }));
        }
    }
    write_jsonl(out, &emitted)?;
    write_jsonl(&drops_path(out), &drops)?;
    Ok(report)
}

pub fn drops_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".drops.jsonl");
    std::path::PathBuf::from(name)
}

pub fn run_select(
    config: &PipelineConfig,
    input: &Path,
    budget: Option<usize>,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let stage_seed = derive_seed(config.seed, "select", 0);
    let mut report = StageReport::new("select", stage_seed);
    let matrix = EmbeddingMatrix::load(input).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut selection_config = config.select.clone();
    if let Some(budget) = budget {
        selection_config.budget = budget;
    }
    if selection_config.budget == 0 {
        selection_config.budget = matrix.len();
    }
    let order = select(&matrix, &selection_config).map_err(|e| anyhow::anyhow!("{e}"))?;
    let ids: Vec<&String> = order.iter().map(|i| &matrix.ids[*i]).collect();
    for _ in &order {
        report.emit();
    }
    for _ in order.len()..matrix.len() {
        report.drop_sample("beyond selection budget");
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(
        out,
        serde_json::to_string_pretty(&serde_json::json!({
            "budget": selection_config.budget,
            "selected": ids,
        }))? + "\n",
    )?;
    Ok(report)
}
