//! Greedy novelty-based subset selection over unit embeddings.
//!
//! The novelty of a candidate x against the selected set is
//! `sum_j w(x, x_j)^k1 * sigma(x_j)^k2 * d(x, x_j)`, where the proximity
//! weight `w = 1/rank` favors close selected neighbors, the density
//! factor `sigma(x_j) = 1 / sum_{k<=K} d(x_j, N_k(x_j))` favors isolated
//! points (computed over the full corpus, fixed per run), and `d` is
//! cosine distance. Selection repeatedly takes the highest-novelty
//! candidate until the budget is met.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Added inside the density denominator so duplicate points (distance 0
/// to all neighbors) stay finite.
pub const DENSITY_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub k_neighbors: usize,
    pub budget: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            kappa1: 1.0,
            kappa2: 1.0,
            k_neighbors: 5,
            budget: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("budget {budget} exceeds corpus size {corpus}")]
    BudgetTooLarge { budget: usize, corpus: usize },
    #[error("k_neighbors must be at least 1")]
    BadNeighborCount,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embedding i/o failed: {0}")]
    Io(String),
    #[error("embedding file malformed: {0}")]
    Malformed(String),
}

/// Row-major unit-embedding matrix with string ids.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub ids: Vec<String>,
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    ids: Vec<String>,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Self {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut m = Self { ids, dim, rows };
        m.normalize();
        m
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn normalize(&mut self) {
        for row in &mut self.rows {
            let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
    }

    /// Write as raw little-endian f32 rows plus a JSON sidecar
    /// (`<path>.meta.json`) carrying ids and dimension.
    pub fn save(&self, path: &Path) -> Result<(), SelectError> {
        let mut file = std::fs::File::create(path).map_err(|e| SelectError::Io(e.to_string()))?;
        for row in &self.rows {
            for v in row {
                file.write_all(&v.to_le_bytes())
                    .map_err(|e| SelectError::Io(e.to_string()))?;
            }
        }
        let sidecar = Sidecar {
            ids: self.ids.clone(),
            dim: self.dim,
        };
        let meta = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| SelectError::Io(e.to_string()))?;
        std::fs::write(sidecar_path(path), meta).map_err(|e| SelectError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SelectError> {
        let meta = std::fs::read_to_string(sidecar_path(path))
            .map_err(|e| SelectError::Io(format!("sidecar: {e}")))?;
        let sidecar: Sidecar =
            serde_json::from_str(&meta).map_err(|e| SelectError::Malformed(e.to_string()))?;
        let bytes = std::fs::read(path).map_err(|e| SelectError::Io(e.to_string()))?;
        let expected = sidecar.ids.len() * sidecar.dim * 4;
        if bytes.len() != expected {
            return Err(SelectError::Malformed(format!(
                "expected {expected} bytes for {} rows x {} dims, found {}",
                sidecar.ids.len(),
                sidecar.dim,
                bytes.len()
            )));
        }
        let mut rows = Vec::with_capacity(sidecar.ids.len());
        for row_idx in 0..sidecar.ids.len() {
            let mut row = Vec::with_capacity(sidecar.dim);
            for col in 0..sidecar.dim {
                let at = (row_idx * sidecar.dim + col) * 4;
                row.push(f32::from_le_bytes([
                    bytes[at],
                    bytes[at + 1],
                    bytes[at + 2],
                    bytes[at + 3],
                ]));
            }
            rows.push(row);
        }
        Ok(Self {
            ids: sidecar.ids,
            dim: sidecar.dim,
            rows,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta.json");
    std::path::PathBuf::from(name)
}

/// Cosine distance between unit vectors, clamped at zero.
pub fn distance(a: &[f32], b: &[f32]) -> f64 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot as f64).max(0.0)
}

/// Density factor per corpus point: inverse of the summed distance to the
/// K nearest corpus neighbors (self excluded, ties by index).
pub fn densities(rows: &[Vec<f32>], k_neighbors: usize) -> Result<Vec<f64>, SelectError> {
    if k_neighbors == 0 {
        return Err(SelectError::BadNeighborCount);
    }
    let n = rows.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|i| *i != j)
            .map(|i| (distance(&rows[j], &rows[i]), i))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let sum: f64 = dists.iter().take(k_neighbors).map(|(d, _)| d).sum();
        out.push(1.0 / (sum + DENSITY_EPSILON));
    }
    Ok(out)
}

/// Novelty of `candidate` against the selected set (exact evaluation of
/// the selection equation). The rank of each selected point is its
/// 1-based position when ordered by ascending distance to the candidate,
/// ties by corpus index.
pub fn novelty(
    candidate: usize,
    selected: &[usize],
    rows: &[Vec<f32>],
    sigma: &[f64],
    config: &SelectionConfig,
) -> f64 {
    let mut ranked: Vec<(f64, usize)> = selected
        .iter()
        .map(|&j| (distance(&rows[candidate], &rows[j]), j))
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    ranked
        .iter()
        .enumerate()
        .map(|(pos, (d, j))| {
            let w = 1.0 / (pos as f64 + 1.0);
            w.powf(config.kappa1) * sigma[*j].powf(config.kappa2) * d
        })
        .sum()
}

/// Greedy selection: the first pick is the point farthest from the corpus
/// centroid; every later step takes the remaining candidate with the
/// highest novelty. All ties break toward the lower index.
pub fn select(matrix: &EmbeddingMatrix, config: &SelectionConfig) -> Result<Vec<usize>, SelectError> {
    let n = matrix.len();
    if n == 0 {
        return Err(SelectError::EmptyCorpus);
    }
    if config.budget > n {
        return Err(SelectError::BudgetTooLarge {
            budget: config.budget,
            corpus: n,
        });
    }
    if config.budget == 0 {
        return Ok(Vec::new());
    }
    let sigma = densities(&matrix.rows, config.k_neighbors)?;

    // first pick: farthest from the centroid direction
    let dim = matrix.dim;
    let mut centroid = vec![0f32; dim];
    for row in &matrix.rows {
        for (c, v) in centroid.iter_mut().zip(row) {
            *c += v;
        }
    }
    let norm = centroid.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        for c in centroid.iter_mut() {
            *c /= norm;
        }
    }
    let first = (0..n)
        .map(|i| (distance(&matrix.rows[i], &centroid), i))
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)))
        .map(|(_, i)| i)
        .unwrap();

    let mut selected = vec![first];
    let mut remaining: Vec<usize> = (0..n).filter(|i| *i != first).collect();
    while selected.len() < config.budget {
        let best = remaining
            .iter()
            .map(|&i| (novelty(i, &selected, &matrix.rows, &sigma, config), i))
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)))
            .map(|(_, i)| i)
            .unwrap();
        selected.push(best);
        remaining.retain(|i| *i != best);
    }
    Ok(selected)
}
