//! Schedule synthesis: generate accepted CSP instances, render them as
//! chat samples, and keep the instance files for replay.

use std::path::Path;
use std::str::FromStr;

use planforge::schedule::{generate_instance, render_nl, verify, DomainKind};
use planforge::textutil::derive_seed;

use crate::config::PipelineConfig;
use crate::manifest::StageReport;
use crate::util::{parallel_map, write_jsonl};

pub fn synth_schedules(
    config: &PipelineConfig,
    domain_flag: Option<&str>,
    count: usize,
    jobs: usize,
    out: &Path,
) -> anyhow::Result<StageReport> {
    let domain = DomainKind::from_str(
        domain_flag.unwrap_or(config.synth_schedules.domain.as_str()),
    )
    .map_err(|e| anyhow::anyhow!(e))?;
    let stage_seed = derive_seed(config.seed, "synth_schedules", 0);
    let mut report = StageReport::new("synth_schedules", stage_seed);
    let params = config.synth_schedules.params.clone();

    let results = parallel_map(count, jobs, |i| {
        let sample_seed = derive_seed(config.seed, "synth_schedules", i as u64 + 1);
        let instance = generate_instance(domain, &params, sample_seed)
            .map_err(|e| format!("generation: {e}"))?;
        let violations = verify(&instance.problem, &instance.solution);
        if !violations.is_empty() {
            return Err(format!("verify: {}", violations.join("; ")));
        }
        let rendered = render_nl(&instance.problem, &instance.solution);
        let chat = serde_json::json!({
            "id": format!("sched-{sample_seed:016x}"),
            "messages": [
                {"role": "user", "content": rendered.prompt},
                {"role": "assistant", "content": rendered.answer},
            ],
            "seed": sample_seed,
        });
        let replay = serde_json::json!({
            "id": format!("sched-{sample_seed:016x}"),
            "problem": instance.problem,
            "solution": instance.solution,
            "seed": sample_seed,
        });
        Ok::<_, String>((chat, replay))
    });

    let mut chats = Vec::new();
    let mut replays = Vec::new();
    for result in results {
        match result {
            Ok((chat, replay)) => {
                chats.push(chat);
                replays.push(replay);
                report.emit();
            }
            Err(reason) => report.drop_sample(&reason),
        }
    }
    write_jsonl(out, &chats)?;
    write_jsonl(&instances_path(out), &replays)?;
    Ok(report)
}

pub fn instances_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".instances.jsonl");
    std::path::PathBuf::from(name)
}
