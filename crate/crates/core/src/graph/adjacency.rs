use std::sync::Arc;

use super::BipartiteGraph;
use crate::tensor::{CsrMatrix, Tensor};

/// Symmetrically normalized adjacency with self-loops, `D^-1/2 (A + I) D^-1/2`,
/// over the stacked node order users then items.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    csr: Arc<CsrMatrix>,
    users: usize,
}

impl NormalizedAdjacency {
    pub fn csr(&self) -> &Arc<CsrMatrix> {
        &self.csr
    }

    /// Side length of the square matrix.
    pub fn size(&self) -> usize {
        self.csr.rows()
    }

    pub fn user_count(&self) -> usize {
        self.users
    }

    pub fn item_count(&self) -> usize {
        self.size() - self.users
    }

    pub fn to_dense(&self) -> Tensor {
        self.csr.to_dense()
    }
}

/// Normalized adjacency of the block bipartite matrix of `graph`.
pub fn normalize_adjacency(graph: &BipartiteGraph) -> NormalizedAdjacency {
    let users = graph.user_count();
    let pairs: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.user, users + e.item)).collect();
    let mut adj = normalized_adjacency_from_pairs(graph.node_count(), &pairs);
    adj.users = users;
    adj
}

/// Normalized adjacency of an undirected graph on `n` nodes given as index
/// pairs. Duplicate and reversed pairs collapse into one unit-weight edge;
/// self pairs are ignored since every node already carries a self-loop.
pub fn normalized_adjacency_from_pairs(n: usize, pairs: &[(usize, usize)]) -> NormalizedAdjacency {
    let mut undirected: Vec<(usize, usize)> = pairs
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    undirected.sort_unstable();
    undirected.dedup();

    let mut degree = vec![1.0f64; n];
    for &(a, b) in &undirected {
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut triplets = Vec::with_capacity(n + 2 * undirected.len());
    for (k, s) in inv_sqrt.iter().enumerate() {
        triplets.push((k, k, s * s));
    }
    for &(a, b) in &undirected {
        let w = inv_sqrt[a] * inv_sqrt[b];
        triplets.push((a, b, w));
        triplets.push((b, a, w));
    }
    NormalizedAdjacency {
        csr: Arc::new(CsrMatrix::from_triplets(n, n, &triplets)),
        users: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeLabel, LabelMode};

    #[test]
    fn single_edge_halves() {
        let g = BipartiteGraph::new(LabelMode::Multi, 1, 1, vec![Edge::new(0, 0, EdgeLabel::High)]).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn edgeless_is_identity() {
        let g = BipartiteGraph::new(LabelMode::Multi, 2, 3, vec![]).unwrap();
        let adj = normalize_adjacency(&g);
        assert_eq!(adj.to_dense(), Tensor::identity(5));
        assert_eq!((adj.user_count(), adj.item_count()), (2, 3));
    }

    #[test]
    fn reconstruction_recovers_a_plus_i() {
        let edges = vec![
            Edge::new(0, 0, EdgeLabel::High),
            Edge::new(0, 1, EdgeLabel::Low),
            Edge::new(1, 1, EdgeLabel::Mid),
            Edge::new(2, 0, EdgeLabel::High),
        ];
        let g = BipartiteGraph::new(LabelMode::Multi, 3, 2, edges.clone()).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        let mut raw = Tensor::identity(5);
        for e in &edges {
            raw.set(e.user, 3 + e.item, 1.0);
            raw.set(3 + e.item, e.user, 1.0);
        }
        let deg: Vec<f64> = (0..5).map(|r| raw.row(r).iter().sum()).collect();
        for r in 0..5 {
            for c in 0..5 {
                let back = a.get(r, c) * deg[r].sqrt() * deg[c].sqrt();
                assert!((back - raw.get(r, c)).abs() < 1e-12);
                assert!((a.get(r, c) - a.get(c, r)).abs() < 1e-12);
            }
        }
    }
}
