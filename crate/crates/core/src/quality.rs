//! Quality control: SimHash near-duplicate removal, output-grammar
//! validation, LLM-judge semantic audit, and distractor-tool injection.

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, Embedder, Judge};
use crate::catalog::{DependencyGraph, ToolCatalog};
use crate::textutil::fnv1a64;

/// The five planning task kinds whose output grammars this crate knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Decomposition,
    ToolPlan,
    Scheduling,
    Workflow,
    LongHorizon,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Decomposition,
        TaskKind::ToolPlan,
        TaskKind::Scheduling,
        TaskKind::Workflow,
        TaskKind::LongHorizon,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Decomposition => "decomposition",
            TaskKind::ToolPlan => "tool_plan",
            TaskKind::Scheduling => "scheduling",
            TaskKind::Workflow => "workflow",
            TaskKind::LongHorizon => "long_horizon",
        }
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "decomposition" => Ok(TaskKind::Decomposition),
            "tool_plan" | "toolplan" | "tool" => Ok(TaskKind::ToolPlan),
            "scheduling" | "schedule" => Ok(TaskKind::Scheduling),
            "workflow" => Ok(TaskKind::Workflow),
            "long_horizon" | "longhorizon" => Ok(TaskKind::LongHorizon),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QualityError {
    #[error("cannot fingerprint empty text")]
    EmptyText,
    #[error("hamming threshold {0} outside [0, 64]")]
    BadThreshold(u32),
    #[error("distractor count must be at least 1")]
    InvalidK,
    #[error("only {available} eligible distractor candidates for k={needed}")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("embedding backend failed: {0}")]
    Backend(String),
}

/// A 64-bit SimHash fingerprint of a sample's normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub bits: u64,
    pub source_id: String,
}

impl Fingerprint {
    pub fn of(source_id: impl Into<String>, text: &str) -> Result<Self, QualityError> {
        Ok(Self {
            bits: simhash(text)?,
            source_id: source_id.into(),
        })
    }
}

/// 64-bit SimHash over lowercased, whitespace-normalized 3-gram token
/// shingles. Texts shorter than three tokens hash as a single shingle.
pub fn simhash(text: &str) -> Result<u64, QualityError> {
    let normalized = text.to_lowercase();
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(QualityError::EmptyText);
    }
    let mut acc = [0i64; 64];
    let mut add_shingle = |shingle: &str| {
        let h = fnv1a64(shingle.as_bytes());
        for (i, slot) in acc.iter_mut().enumerate() {
            if (h >> i) & 1 == 1 {
                *slot += 1;
            } else {
                *slot -= 1;
            }
        }
    };
    if tokens.len() < 3 {
        add_shingle(&tokens.join("\u{1f}"));
    } else {
        for window in tokens.windows(3) {
            add_shingle(&window.join("\u{1f}"));
        }
    }
    let mut bits = 0u64;
    for (i, v) in acc.iter().enumerate() {
        if *v > 0 {
            bits |= 1 << i;
        }
    }
    Ok(bits)
}

/// Hamming distance between two fingerprints.
pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// A sample dropped by dedup, with the retained sample it collided with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub dropped: String,
    pub kept: String,
    pub distance: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DedupOutcome {
    /// Retained sample ids in ingest order.
    pub retained: Vec<String>,
    pub dropped: Vec<DroppedPair>,
}

/// Greedy near-duplicate removal: a sample is dropped iff its fingerprint
/// lies within `threshold` Hamming distance of an earlier retained sample.
/// The earlier-ingested sample always wins; output order is ingest order.
pub fn dedup(fingerprints: &[Fingerprint], threshold: u32) -> Result<DedupOutcome, QualityError> {
    if threshold > 64 {
        return Err(QualityError::BadThreshold(threshold));
    }
    let mut outcome = DedupOutcome::default();
    let mut kept: Vec<&Fingerprint> = Vec::new();
    for fp in fingerprints {
        match kept
            .iter()
            .find(|k| hamming(k.bits, fp.bits) <= threshold)
        {
            Some(collider) => outcome.dropped.push(DroppedPair {
                dropped: fp.source_id.clone(),
                kept: collider.source_id.clone(),
                distance: hamming(collider.bits, fp.bits),
            }),
            None => {
                kept.push(fp);
                outcome.retained.push(fp.source_id.clone());
            }
        }
    }
    Ok(outcome)
}

/// Grammar violation with the byte position where expectation failed.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("schema error at byte {position}: expected {expectation}")]
pub struct SchemaError {
    pub position: usize,
    pub expectation: String,
}

/// Validate a raw sample text against its task grammar. Violations are
/// returned, never silently discarded.
///
/// This is the ingest-side twin of `reward::parse_output`: the grammars
/// are identical except that decomposition samples must open with their
/// `<Query>` section (model outputs need not repeat the query).
pub fn validate_schema(text: &str, kind: TaskKind) -> Result<(), SchemaError> {
    if kind == TaskKind::Decomposition && !text.trim_start().starts_with("<Query>") {
        return Err(SchemaError {
            position: 0,
            expectation: "<Query> section at sample start".into(),
        });
    }
    match crate::reward::parse_output(kind, text) {
        Ok(_) => Ok(()),
        Err(e) => Err(SchemaError {
            position: e.position,
            expectation: e.expectation,
        }),
    }
}

/// Judge outcome for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub pass: bool,
    pub reasons: Vec<String>,
}

/// A verdict bundled with the hash of the exact judge prompt, so audits
/// are reproducible and re-runnable against a different judge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sample_id: String,
    pub verdict: AuditVerdict,
    pub judge_prompt_hash: String,
}

/// Run the semantic audit on one sample. Backend failures propagate so the
/// caller can park the sample instead of dropping it.
pub fn audit_semantics(
    sample_id: &str,
    sample_text: &str,
    rubric: &str,
    judge: &dyn Judge,
) -> Result<AuditRecord, BackendError> {
    let prompt = format!("{rubric}\n---\n{sample_text}");
    let digest = Sha256::digest(prompt.as_bytes());
    let judge_prompt_hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let verdict = judge.judge(sample_text, rubric)?;
    Ok(AuditRecord {
        sample_id: sample_id.to_string(),
        verdict,
        judge_prompt_hash,
    })
}

/// A context tool list augmented with distractors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentedTools {
    /// Gold plus injected tools, shuffled under the seed.
    pub tools: Vec<String>,
    pub injected: Vec<String>,
}

/// Inject the `k` nearest catalog tools (by description-embedding cosine
/// against the gold tools) that are outside the gold set and share no
/// dependency edge with it.
pub fn inject_distractors(
    gold_tools: &[String],
    catalog: &ToolCatalog,
    dependency: &DependencyGraph,
    k: usize,
    embedder: &dyn Embedder,
    rng_seed: u64,
) -> Result<AugmentedTools, QualityError> {
    if k == 0 {
        return Err(QualityError::InvalidK);
    }
    let gold: BTreeSet<&str> = gold_tools.iter().map(|s| s.as_str()).collect();
    let candidates: Vec<&str> = catalog
        .ids()
        .into_iter()
        .filter(|id| !gold.contains(id))
        .filter(|id| {
            !gold.iter().any(|g| {
                dependency.has_edge(g, id) || dependency.has_edge(id, g)
            })
        })
        .collect();
    if candidates.len() < k {
        return Err(QualityError::InsufficientCandidates {
            needed: k,
            available: candidates.len(),
        });
    }

    let describe = |id: &str| {
        catalog
            .get(id)
            .map(|t| t.description.clone())
            .unwrap_or_default()
    };
    let gold_texts: Vec<String> = gold_tools.iter().map(|id| describe(id)).collect();
    let candidate_texts: Vec<String> = candidates.iter().map(|id| describe(id)).collect();
    let gold_vecs = embedder
        .embed(&gold_texts)
        .map_err(|e| QualityError::Backend(e.to_string()))?;
    let candidate_vecs = embedder
        .embed(&candidate_texts)
        .map_err(|e| QualityError::Backend(e.to_string()))?;

    // score = similarity to the nearest gold tool; ties broken by name
    let mut scored: Vec<(f32, &str)> = candidates
        .iter()
        .zip(&candidate_vecs)
        .map(|(id, vec)| {
            let best = gold_vecs
                .iter()
                .map(|g| g.cosine(vec))
                .fold(f32::MIN, f32::max);
            (best, *id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    let injected: Vec<String> = scored.iter().take(k).map(|(_, id)| id.to_string()).collect();

    let mut tools: Vec<String> = gold_tools.to_vec();
    tools.extend(injected.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    tools.shuffle(&mut rng);
    Ok(AugmentedTools { tools, injected })
}
