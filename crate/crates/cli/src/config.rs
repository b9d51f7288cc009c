//! Pipeline configuration: one JSON document with per-stage sections.
//! Unknown keys are rejected so typos fail fast.

use std::path::PathBuf;

use planforge::backend::remote::{
    ChatCompletionsClient, RemoteConfig, RemoteEmbedder, ReqwestTransport,
};
use planforge::backend::{Embedder, HashedBowEmbedder, TemplateBackend, TextGenerator};
use planforge::reward::RewardConfig;
use planforge::schedule::GenParams;
use planforge::select::SelectionConfig;
use planforge::trajectory::longhorizon::LongHorizonConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub synth_plans: SynthPlansConfig,
    #[serde(default)]
    pub synth_trajectories: SynthTrajectoriesConfig,
    #[serde(default)]
    pub synth_schedules: SynthSchedulesConfig,
    #[serde(default)]
    pub synth_workflows: SynthWorkflowsConfig,
    #[serde(default)]
    pub synth_longhorizon: SynthLongHorizonConfig,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default)]
    pub select: SelectionConfig,
    #[serde(default)]
    pub score: ScoreConfig,
}

impl PipelineConfig {
    /// In-code defaults used when no config file is supplied.
    pub fn fallback(seed: u64) -> Self {
        Self {
            seed,
            backends: BackendsConfig::default(),
            synth_plans: SynthPlansConfig::default(),
            synth_trajectories: SynthTrajectoriesConfig::default(),
            synth_schedules: SynthSchedulesConfig::default(),
            synth_workflows: SynthWorkflowsConfig::default(),
            synth_longhorizon: SynthLongHorizonConfig::default(),
            dedup: DedupConfig::default(),
            select: SelectionConfig::default(),
            score: ScoreConfig::default(),
        }
    }

    /// Instantiate the text generator. `--cache-dir` overrides the remote
    /// response cache location.
    pub fn generator(&self, cache_dir: Option<&PathBuf>) -> Box<dyn TextGenerator> {
        match &self.backends.generator {
            BackendChoice::Template => Box::new(TemplateBackend),
            BackendChoice::Remote(remote) => {
                let mut remote = remote.clone();
                if let Some(dir) = cache_dir {
                    remote.cache_dir = Some(dir.clone());
                }
                Box::new(ChatCompletionsClient::new(
                    remote,
                    Box::new(ReqwestTransport::new()),
                ))
            }
        }
    }

    pub fn embedder(&self, cache_dir: Option<&PathBuf>) -> Box<dyn Embedder> {
        match &self.backends.embedder {
            BackendChoice::Template => Box::new(HashedBowEmbedder::default()),
            BackendChoice::Remote(remote) => {
                let mut remote = remote.clone();
                if let Some(dir) = cache_dir {
                    remote.cache_dir = Some(dir.clone());
                }
                Box::new(RemoteEmbedder::new(remote, Box::new(ReqwestTransport::new())))
            }
        }
    }
}

/// Backend selection: deterministic local implementations by default, a
/// cached chat-completions/embedding service otherwise.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendsConfig {
    pub generator: BackendChoice,
    pub embedder: BackendChoice,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendChoice {
    #[default]
    Template,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthPlansConfig {
    pub count: usize,
    /// Maximum number of composition operators applied per sample.
    pub max_depth: usize,
    /// Fraction of samples left as raw atomic plans.
    pub atomic_fraction: f64,
    pub dedup_threshold: u32,
    /// Optional JSON Lines tool catalog; the built-in catalog otherwise.
    pub tools_jsonl: Option<PathBuf>,
    /// Optional manual dependency-edge overrides (JSON).
    pub graph_overrides: Option<PathBuf>,
    /// Rubric text for the semantic audit.
    pub audit_rubric: String,
    /// Scripted judge rule: samples containing this marker fail the audit
    /// and are parked in the quarantine file (never deleted).
    pub audit_fail_marker: Option<String>,
}

impl Default for SynthPlansConfig {
    fn default() -> Self {
        Self {
            count: 20,
            max_depth: 4,
            atomic_fraction: 0.35,
            dedup_threshold: 3,
            tools_jsonl: None,
            graph_overrides: None,
            audit_rubric: "Check that the plan steps cover the query without semantic drift."
                .into(),
            audit_fail_marker: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthTrajectoriesConfig {
    pub count: usize,
    pub max_steps: usize,
    /// Distractor tools injected into each episode's context listing.
    pub distractors: usize,
}

impl Default for SynthTrajectoriesConfig {
    fn default() -> Self {
        Self {
            count: 10,
            max_steps: 24,
            distractors: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSchedulesConfig {
    pub domain: String,
    pub count: usize,
    pub params: GenParams,
}

impl Default for SynthSchedulesConfig {
    fn default() -> Self {
        Self {
            domain: "trip".into(),
            count: 10,
            params: GenParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthWorkflowsConfig {
    pub count: usize,
    pub n_distractors: usize,
    /// System prompt emitted verbatim into every sample.
    pub system_prompt: String,
    /// Number of in-context examples rendered before the target task.
    pub in_context_examples: usize,
}

impl Default for SynthWorkflowsConfig {
    fn default() -> Self {
        Self {
            count: 10,
            n_distractors: 2,
            system_prompt: "You are a helpful task planner.\nFirst I will give you the task \
                            description and the actions list you can use, and your task is to \
                            plan a sequence of sub-task nodes that achieves the task. Convert \
                            the nodes into a topology diagram that starts with the START node \
                            and ends with the END node.\nKeep your output in format:\nNode:\n1: \
                            {subtask_1}\n2: {subtask_2}\n...\nEdge: (START,1) ... (n,END)"
                .into(),
            in_context_examples: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthLongHorizonConfig {
    /// Number of tasks constructed.
    pub count: usize,
    pub difficulty: String,
    /// Atomic tasks synthesized into the sampling pool.
    pub pool_size: usize,
    /// New samples generated per seed trajectory.
    pub scale_factor: usize,
    pub max_steps: usize,
    pub task: LongHorizonConfig,
}

impl Default for SynthLongHorizonConfig {
    fn default() -> Self {
        Self {
            count: 3,
            difficulty: "short".into(),
            pool_size: 12,
            scale_factor: 2,
            max_steps: 24,
            task: LongHorizonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupConfig {
    pub threshold: u32,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self { threshold: 3 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub reward: RewardConfig,
}
