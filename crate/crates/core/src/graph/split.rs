use rand::seq::SliceRandom;

use super::{BipartiteGraph, Edge};
use crate::error::Result;
use crate::rng::{stream, Stream};

/// Train, validation and test edge sets over one node space.
#[derive(Clone, Debug)]
pub struct SplitGraphs {
    pub train: BipartiteGraph,
    pub validation: BipartiteGraph,
    pub test: BipartiteGraph,
}

/// Per-user edge counts `(train, validation, test)` for a user with `e` edges.
pub fn split_counts(e: usize) -> (usize, usize, usize) {
    if e == 0 {
        return (0, 0, 0);
    }
    let train = ((0.8 * e as f64).round() as usize).clamp(1, e);
    let rest = e - train;
    let validation = if rest == 0 {
        0
    } else {
        ((0.1 * e as f64).round() as usize).max(1).min(rest)
    };
    (train, validation, rest - validation)
}

/// Random 80/10/10 partition of each user's edges. Within each part edges keep
/// their source order.
pub fn split(graph: &BipartiteGraph, seed: u64) -> Result<SplitGraphs> {
    let mut rng = stream(seed, Stream::Split, 0);
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); graph.user_count()];
    for (k, e) in graph.edges().iter().enumerate() {
        per_user[e.user].push(k);
    }
    // 0 train, 1 validation, 2 test
    let mut part = vec![0u8; graph.edge_count()];
    for edges in &mut per_user {
        edges.shuffle(&mut rng);
        let (train, validation, _) = split_counts(edges.len());
        for (rank, &k) in edges.iter().enumerate() {
            part[k] = if rank < train {
                0
            } else if rank < train + validation {
                1
            } else {
                2
            };
        }
    }
    let pick = |p: u8| -> Vec<Edge> {
        graph
            .edges()
            .iter()
            .zip(&part)
            .filter(|(_, &q)| q == p)
            .map(|(e, _)| *e)
            .collect()
    };
    Ok(SplitGraphs {
        train: graph.with_edges(pick(0))?,
        validation: graph.with_edges(pick(1))?,
        test: graph.with_edges(pick(2))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_generate, SynthParams};

    #[test]
    fn counts_follow_rounding_rule() {
        assert_eq!(split_counts(10), (8, 1, 1));
        assert_eq!(split_counts(3), (2, 1, 0));
        assert_eq!(split_counts(1), (1, 0, 0));
        assert_eq!(split_counts(20), (16, 2, 2));
        for e in 1..200 {
            let (a, b, c) = split_counts(e);
            assert_eq!(a + b + c, e);
        }
    }

    #[test]
    fn deterministic_and_disjoint() {
        let g = synth_generate(&SynthParams::new(40, 20, 2, 0.0, 3)).unwrap();
        let s1 = split(&g, 11).unwrap();
        let s2 = split(&g, 11).unwrap();
        assert_eq!(s1.train, s2.train);
        assert_eq!(s1.test, s2.test);
        let total = s1.train.edge_count() + s1.validation.edge_count() + s1.test.edge_count();
        assert_eq!(total, g.edge_count());
        let s3 = split(&g, 12).unwrap();
        assert_ne!(s1.train, s3.train);
    }
}
