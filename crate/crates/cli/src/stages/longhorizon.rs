//! Long-horizon synthesis: build an atomic pool, construct tasks, collect
//! seed trajectories, and scale them into additional samples.

use std::path::Path;
use std::str::FromStr;

use planforge::backend::{Embedder, TextGenerator};
use planforge::catalog::SelectionKind;
use planforge::quality::TaskKind;
use planforge::textutil::derive_seed;
use planforge::trajectory::longhorizon::{
    construct_task, filter_seeds, scale_from_seed, synthesize_trajectory,
    validate_round_structure, AtomicTask, Difficulty,
};
use planforge::trajectory::{EpisodeLimits, StubSimulator, TrajectoryBackends};

use crate::config::PipelineConfig;
use crate::manifest::StageReport;
use crate::stages::synth::load_catalog;
use crate::util::write_jsonl;

pub fn synth_longhorizon(
    config: &PipelineConfig,
    generator: &dyn TextGenerator,
    embedder: &dyn Embedder,
    count: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let (catalog, graphs) = load_catalog(config)?;
    let stage_seed = derive_seed(config.seed, "synth_longhorizon", 0);
    let mut report = StageReport::new("synth_longhorizon", stage_seed);
    let lh = &config.synth_longhorizon;
    let difficulty = Difficulty::from_str(&lh.difficulty).map_err(|e| anyhow::anyhow!(e))?;
    let simulator = StubSimulator;
    let backends = TrajectoryBackends {
        generator,
        simulator: &simulator,
    };
    let limits = EpisodeLimits {
        max_steps: lh.max_steps,
    };

    // atomic pool from the relationship graphs
    let mut pool: Vec<AtomicTask> = Vec::new();
    let mut pool_index = 0u64;
    while pool.len() < lh.pool_size && pool_index < lh.pool_size as u64 * 8 {
        let seed = derive_seed(config.seed, "synth_longhorizon/pool", pool_index);
        pool_index += 1;
        let kind = match pool_index % 3 {
            0 => SelectionKind::Isolated,
            1 => SelectionKind::Serial,
            _ => SelectionKind::Parallel,
        };
        let Ok(selection) = planforge::catalog::sample_selection(&graphs, kind, seed) else {
            continue;
        };
        let Ok(plan) =
            planforge::plan::synthesize_atomic(&selection, &catalog, &graphs, generator, seed)
        else {
            continue;
        };
        // distinct tool signatures keep the pool diverse
        if pool
            .iter()
            .any(|a| a.plan.steps.iter().map(|s| &s.tool).eq(plan.steps.iter().map(|s| &s.tool)))
        {
            continue;
        }
        pool.push(AtomicTask {
            id: format!("atomic-{:016x}", seed),
            plan,
        });
    }

    let mut episodes = Vec::new();
    for i in 0..count {
        let task_seed = derive_seed(config.seed, "synth_longhorizon/task", i as u64);
        let task = match construct_task(&pool, difficulty, generator, &lh.task, task_seed) {
            Ok(task) => task,
            Err(e) => {
                report.drop_sample(&format!("task: {e}"));
                continue;
            }
        };
        match synthesize_trajectory(&task, &catalog, &backends, limits, task_seed) {
            Ok(trajectory) => episodes.push((task, trajectory)),
            Err(e) => report.drop_sample(&format!("episode: {e}")),
        }
    }

    let seeds = filter_seeds(&episodes, &pool, &catalog, embedder, lh.task.top_k);
    let mut records = Vec::new();
    for (task, trajectory) in &episodes {
        let is_seed = seeds.iter().any(|s| s.task_id == task.id);
        if !is_seed {
            report.drop_sample("not a seed (failed or format-invalid)");
            continue;
        }
        let trajectory_json = planforge::trajectory::longhorizon::to_sharegpt(trajectory);
        records.push(serde_json::json!({
            "id": task.id,
            "kind": "seed",
            "sample": trajectory_json,
        }));
        report.emit();
    }
    for seed in &seeds {
        for j in 0..lh.scale_factor {
            let scale_seed = derive_seed(config.seed, "synth_longhorizon/scale", j as u64);
            match scale_from_seed(seed, &catalog, generator, scale_seed) {
                Ok(sample) => {
                    if let Err(e) = validate_round_structure(&sample) {
                        report.drop_sample(&format!("scaled: {e}"));
                        continue;
                    }
                    // scaled samples pass the same grammar as seeds
                    let grammar_ok = sample["conversations"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .filter(|m| {
                            m["from"] == "gpt"
                                && m["value"].as_str().unwrap_or_default().contains("<tool_call>")
                        })
                        .all(|m| {
                            planforge::reward::parse_output(
                                TaskKind::LongHorizon,
                                m["value"].as_str().unwrap(),
                            )
                            .is_ok()
                        });
                    if !grammar_ok {
                        report.drop_sample("scaled: tool-call grammar");
                        continue;
                    }
                    records.push(serde_json::json!({
                        "id": format!("{}-scaled-{j}", seed.task_id),
                        "kind": "scaled",
                        "sample": sample,
                    }));
                    report.emit();
                }
                Err(e) => report.drop_sample(&format!("scaled: {e}")),
            }
        }
    }
    write_jsonl(out, &records)?;
    Ok(report)
}
