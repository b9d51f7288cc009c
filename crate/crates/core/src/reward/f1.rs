//! Semantic node matching and the chain/graph F1 metrics for workflows.

use serde::{Deserialize, Serialize};

use crate::backend::Embedder;
use crate::workflow::WorkflowDag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gold: usize,
    pub similarity: f64,
}

/// One-to-one node matching; every retained pair meets the threshold.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NodeMatching {
    pub pairs: Vec<MatchPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gold: Vec<usize>,
}

impl NodeMatching {
    pub fn gold_of(&self, pred: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.pred == pred).map(|p| p.gold)
    }
}

/// Greedy one-to-one matching by descending similarity, ties broken by
/// (gold index, pred index); pairs below the threshold are discarded.
pub fn match_nodes(
    pred: &[String],
    gold: &[String],
    embedder: &dyn Embedder,
    threshold: f64,
) -> NodeMatching {
    if pred.is_empty() || gold.is_empty() {
        return NodeMatching {
            pairs: Vec::new(),
            unmatched_pred: (0..pred.len()).collect(),
            unmatched_gold: (0..gold.len()).collect(),
        };
    }
    let mut texts: Vec<String> = Vec::with_capacity(pred.len() + gold.len());
    texts.extend(pred.iter().cloned());
    texts.extend(gold.iter().cloned());
    let Ok(vectors) = embedder.embed(&texts) else {
        return NodeMatching {
            pairs: Vec::new(),
            unmatched_pred: (0..pred.len()).collect(),
            unmatched_gold: (0..gold.len()).collect(),
        };
    };
    let (pred_vecs, gold_vecs) = vectors.split_at(pred.len());

    let mut candidates: Vec<MatchPair> = Vec::new();
    for (pi, pv) in pred_vecs.iter().enumerate() {
        for (gi, gv) in gold_vecs.iter().enumerate() {
            let similarity = pv.cosine(gv) as f64;
            if similarity >= threshold {
                candidates.push(MatchPair {
                    pred: pi,
                    gold: gi,
                    similarity,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.gold.cmp(&b.gold))
            .then(a.pred.cmp(&b.pred))
    });

    let mut used_pred = vec![false; pred.len()];
    let mut used_gold = vec![false; gold.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !used_pred[c.pred] && !used_gold[c.gold] {
            used_pred[c.pred] = true;
            used_gold[c.gold] = true;
            pairs.push(c);
        }
    }
    pairs.sort_by_key(|p| p.pred);
    NodeMatching {
        pairs,
        unmatched_pred: (0..pred.len()).filter(|i| !used_pred[*i]).collect(),
        unmatched_gold: (0..gold.len()).filter(|i| !used_gold[*i]).collect(),
    }
}

fn lis_length(values: &[usize]) -> usize {
    // patience sorting tails; strictly increasing
    let mut tails: Vec<usize> = Vec::new();
    for &v in values {
        match tails.binary_search(&v) {
            Ok(_) => {} // equal values cannot extend a strictly increasing run
            Err(pos) => {
                if pos == tails.len() {
                    tails.push(v);
                } else {
                    tails[pos] = v;
                }
            }
        }
    }
    tails.len()
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Chain-level F1: length of the longest increasing subsequence of gold
/// positions, taken over matched nodes in predicted order.
///
/// `pred_topo` and `gold_topo` are topological node orders (1-based ids);
/// the matching refers to 0-based node ids.
pub fn f1_chain(pred_topo: &[usize], gold_topo: &[usize], matching: &NodeMatching) -> f64 {
    if pred_topo.is_empty() || gold_topo.is_empty() {
        return 0.0;
    }
    let gold_pos_of_node = |node: usize| gold_topo.iter().position(|g| *g == node + 1);
    let mut gold_positions = Vec::new();
    for node_id in pred_topo {
        if let Some(gold_node) = matching.gold_of(node_id - 1) {
            if let Some(pos) = gold_pos_of_node(gold_node) {
                gold_positions.push(pos);
            }
        }
    }
    let l = lis_length(&gold_positions) as f64;
    if l == 0.0 {
        return 0.0;
    }
    harmonic(l / pred_topo.len() as f64, l / gold_topo.len() as f64)
}

/// Graph-level F1: largest weakly connected component of the intersection
/// graph (matched node pairs as vertices, edges present in both graphs),
/// normalized by vertices plus edges of each side. Sentinels are excluded
/// from all counts.
pub fn f1_graph(pred: &WorkflowDag, gold: &WorkflowDag, matching: &NodeMatching) -> f64 {
    let pred_size = pred.node_count() + pred.inner_edges().count();
    let gold_size = gold.node_count() + gold.inner_edges().count();
    if pred_size == 0 || gold_size == 0 {
        return 0.0;
    }
    let vertices: Vec<(usize, usize)> =
        matching.pairs.iter().map(|p| (p.pred, p.gold)).collect();
    if vertices.is_empty() {
        return 0.0;
    }
    let pred_edges: Vec<(usize, usize)> = pred.inner_edges().collect();
    let gold_edges: Vec<(usize, usize)> = gold.inner_edges().collect();
    let mut shared_edges: Vec<(usize, usize)> = Vec::new(); // indices into `vertices`
    for (i, (p1, g1)) in vertices.iter().enumerate() {
        for (j, (p2, g2)) in vertices.iter().enumerate() {
            if i == j {
                continue;
            }
            if pred_edges.contains(&(*p1, *p2)) && gold_edges.contains(&(*g1, *g2)) {
                shared_edges.push((i, j));
            }
        }
    }
    // weakly connected components by union-find
    let mut parent: Vec<usize> = (0..vertices.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for (a, b) in &shared_edges {
        let (ra, rb) = (find(&mut parent, *a), find(&mut parent, *b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut best = 0usize;
    let roots: Vec<usize> = (0..vertices.len()).collect();
    for root in roots {
        let root = find(&mut parent, root);
        let members: Vec<usize> = (0..vertices.len())
            .filter(|v| find(&mut parent, *v) == root)
            .collect();
        let v = members.len();
        let e = shared_edges
            .iter()
            .filter(|(a, _)| members.contains(a))
            .count();
        best = best.max(v + e);
    }
    harmonic(best as f64 / pred_size as f64, best as f64 / gold_size as f64)
}
