//! Pipeline acceptance: fixed-seed synthesis runs are byte-identical
//! across invocations, and every emitted sample passes its validator.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use planforge::quality::{validate_schema, TaskKind};
use planforge::reward::reward_schedule;
use planforge::schedule::{verify, GeneratedInstance};
use planforge::trajectory::longhorizon::validate_round_structure;
use planforge::workflow::{parse_workflow, validate_workflow, GoldPlan};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_planforge")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("planforge-acc-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) {
    let output = Command::new(bin()).args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn assert_identical(a: &Path, b: &Path) {
    let left = std::fs::read(a).unwrap_or_else(|e| panic!("reading {}: {e}", a.display()));
    let right = std::fs::read(b).unwrap_or_else(|e| panic!("reading {}: {e}", b.display()));
    assert_eq!(
        left,
        right,
        "{} and {} differ",
        a.display(),
        b.display()
    );
}

#[test]
fn acceptance_7_pipeline_determinism_and_validity() {
    let start = Instant::now();
    let dir_a = workdir("a");
    let dir_b = workdir("b");

    let stages: &[(&str, &[&str])] = &[
        ("plans.jsonl", &["synth-plans", "--count", "12"]),
        ("trajectories.jsonl", &["synth-trajectories", "--count", "5"]),
        ("schedules.jsonl", &["synth-schedules", "--count", "8", "--domain", "trip"]),
        ("workflows.jsonl", &["synth-workflows", "--count", "6"]),
        ("longhorizon.jsonl", &["synth-longhorizon", "--count", "2"]),
    ];
    for dir in [&dir_a, &dir_b] {
        for (file, args) in stages {
            let out = dir.join(file);
            let mut full: Vec<&str> = args.to_vec();
            full.extend_from_slice(&["--seed", "41", "--out", out.to_str().unwrap()]);
            run(&full);
        }
    }

    // byte-identical outputs, including side files and manifests
    for (file, _) in stages {
        for suffix in ["", ".manifest.json"] {
            let name = format!("{file}{suffix}");
            assert_identical(&dir_a.join(&name), &dir_b.join(&name));
        }
    }
    assert_identical(
        &dir_a.join("plans.jsonl.chat.jsonl"),
        &dir_b.join("plans.jsonl.chat.jsonl"),
    );
    assert_identical(
        &dir_a.join("schedules.jsonl.instances.jsonl"),
        &dir_b.join("schedules.jsonl.instances.jsonl"),
    );

    // every emitted plan passes the decomposition grammar
    let plans = read_lines(&dir_a.join("plans.jsonl"));
    assert!(!plans.is_empty());
    for row in &plans {
        validate_schema(row["plan_text"].as_str().unwrap(), TaskKind::Decomposition).unwrap();
    }

    // every emitted trajectory turn passes the think/action grammar
    let trajectories = read_lines(&dir_a.join("trajectories.jsonl"));
    assert!(!trajectories.is_empty());
    for row in &trajectories {
        for message in row["messages"].as_array().unwrap() {
            if message["role"] == "assistant" {
                validate_schema(message["content"].as_str().unwrap(), TaskKind::ToolPlan)
                    .unwrap();
            }
        }
    }

    // every emitted schedule verifies against its instance, and the
    // rendered answer scores as a valid schedule
    let chats = read_lines(&dir_a.join("schedules.jsonl"));
    let replays = read_lines(&dir_a.join("schedules.jsonl.instances.jsonl"));
    assert_eq!(chats.len(), replays.len());
    assert!(!chats.is_empty());
    for (chat, replay) in chats.iter().zip(&replays) {
        let instance: GeneratedInstance =
            serde_json::from_value(replay.clone()).expect("replayable instance");
        instance.problem.validate().unwrap();
        assert!(verify(&instance.problem, &instance.solution).is_empty());
        let answer = chat["messages"][1]["content"].as_str().unwrap();
        let (value, diags) = reward_schedule(answer, &instance.problem);
        assert_eq!(value, 1.0, "answer rejected: {diags:?}");
    }

    // every emitted workflow parses and validates against its gold plan
    let workflows = read_lines(&dir_a.join("workflows.jsonl"));
    assert!(!workflows.is_empty());
    for row in &workflows {
        let answer = row["messages"].as_array().unwrap().last().unwrap()["content"]
            .as_str()
            .unwrap();
        validate_schema(answer, TaskKind::Workflow).unwrap();
        let dag = parse_workflow(answer).unwrap();
        let gold: GoldPlan = serde_json::from_value(row["gold"].clone()).unwrap();
        let reasons = validate_workflow(&dag, &gold);
        assert!(reasons.is_empty(), "{reasons:?}");
    }

    // every emitted long-horizon sample holds the round structure and its
    // tool calls parse
    let samples = read_lines(&dir_a.join("longhorizon.jsonl"));
    assert!(!samples.is_empty());
    for row in &samples {
        let sample = &row["sample"];
        validate_round_structure(sample).unwrap();
        for message in sample["conversations"].as_array().unwrap() {
            let value = message["value"].as_str().unwrap();
            if message["from"] == "gpt" && value.contains("<tool_call>") {
                planforge::reward::parse_output(TaskKind::LongHorizon, value).unwrap();
            }
        }
    }

    // manifests conserve samples
    for (file, _) in stages {
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir_a.join(format!("{file}.manifest.json"))).unwrap(),
        )
        .unwrap();
        for stage in manifest["stages"].as_array().unwrap() {
            let inputs = stage["inputs"].as_u64().unwrap();
            let emitted = stage["emitted"].as_u64().unwrap();
            let dropped = stage["dropped"].as_u64().unwrap();
            assert_eq!(inputs, emitted + dropped, "conservation in {file}");
        }
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "end-to-end smoke took {elapsed:?}, budget 2 min"
    );
    println!("ACCEPTANCE 7 pipeline determinism: PASS ({elapsed:?})");

    let _ = std::fs::remove_dir_all(&dir_a);
    let _ = std::fs::remove_dir_all(&dir_b);
}
