//! Run manifests: per-stage accounting that conserves samples
//! (inputs = emitted + dropped) and records the seeds involved. Kept free
//! of wall-clock values so reruns stay byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub root_seed: u64,
    pub stages: Vec<StageReport>,
    pub backend_cache: CacheReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub seed: u64,
    pub inputs: usize,
    pub emitted: usize,
    pub dropped: usize,
    pub drop_reasons: BTreeMap<String, usize>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CacheReport {
    pub hits: u64,
    pub misses: u64,
}

impl StageReport {
    pub fn new(stage: &str, seed: u64) -> Self {
        Self {
            stage: stage.to_string(),
            seed,
            inputs: 0,
            emitted: 0,
            dropped: 0,
            drop_reasons: BTreeMap::new(),
            error: None,
        }
    }

    pub fn emit(&mut self) {
        self.inputs += 1;
        self.emitted += 1;
    }

    pub fn drop_sample(&mut self, reason: &str) {
        self.inputs += 1;
        self.dropped += 1;
        *self.drop_reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn conserved(&self) -> bool {
        self.inputs == self.emitted + self.dropped
    }
}

pub fn config_hash(config_json: &str) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn single_stage(config_json: &str, root_seed: u64, stage: StageReport) -> Self {
        Self {
            config_hash: config_hash(config_json),
            root_seed,
            stages: vec![stage],
            backend_cache: CacheReport::default(),
        }
    }

    pub fn write_next_to(&self, out: &Path) -> std::io::Result<()> {
        debug_assert!(self.stages.iter().all(StageReport::conserved));
        let mut path = out.as_os_str().to_os_string();
        path.push(".manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, body)
    }
}
