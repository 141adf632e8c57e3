use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{BipartiteGraph, Edge};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Remove,
    Add,
}

impl AugmentKind {
    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::Remove => "remove",
            AugmentKind::Add => "add",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(AugmentKind::Remove),
            "add" => Ok(AugmentKind::Add),
            _ => Err(Error::Config(format!("unknown augmentation kind '{s}'"))),
        }
    }
}

/// Perturbs the edge set.
///
/// `Remove` drops each edge independently with probability `p`. `Add` inserts
/// `⌊p·|E|⌋` uniformly drawn non-edges (fewer if the graph is nearly complete),
/// each labeled like a uniformly drawn existing edge so that new labels follow
/// the empirical label distribution.
pub fn augment<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    kind: AugmentKind,
    p: f64,
    rng: &mut R,
) -> Result<BipartiteGraph> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::Config(format!("augmentation probability {p} outside [0, 0.5]")));
    }
    match kind {
        AugmentKind::Remove => {
            let kept = graph.edges().iter().filter(|_| !rng.gen_bool(p)).copied().collect();
            graph.with_edges(kept)
        }
        AugmentKind::Add => {
            let (nu, ni) = (graph.user_count(), graph.item_count());
            let existing = graph.edge_count();
            let free = nu * ni - existing;
            let target = ((p * existing as f64).floor() as usize).min(free);
            let mut taken: HashSet<(usize, usize)> = graph.edges().iter().map(|e| (e.user, e.item)).collect();
            let mut edges = graph.edges().to_vec();
            while edges.len() < existing + target {
                let (u, i) = (rng.gen_range(0..nu), rng.gen_range(0..ni));
                if taken.insert((u, i)) {
                    let label = graph.edges()[rng.gen_range(0..existing)].label;
                    edges.push(Edge::new(u, i, label));
                }
            }
            graph.with_edges(edges)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_generate, SynthParams};
    use crate::rng::{stream, Stream};

    fn graph() -> BipartiteGraph {
        synth_generate(&SynthParams::new(100, 50, 2, 0.0, 1)).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let g = graph();
        let mut rng = stream(0, Stream::Augment, 0);
        assert_eq!(augment(&g, AugmentKind::Remove, 0.0, &mut rng).unwrap(), g);
        assert_eq!(augment(&g, AugmentKind::Add, 0.0, &mut rng).unwrap(), g);
    }

    #[test]
    fn add_inserts_floor_count() {
        let g = graph();
        let mut rng = stream(0, Stream::Augment, 0);
        let n = g.edge_count();
        let out = augment(&g, AugmentKind::Add, 0.01, &mut rng).unwrap();
        assert_eq!(out.edge_count(), n + n / 100);
        assert_eq!(&out.edges()[..n], g.edges());
    }

    #[test]
    fn out_of_range_probability() {
        let g = graph();
        let mut rng = stream(0, Stream::Augment, 0);
        assert!(matches!(
            augment(&g, AugmentKind::Add, 0.6, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            augment(&g, AugmentKind::Remove, -0.1, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn add_is_capped_by_free_pairs() {
        let g = BipartiteGraph::new(
            crate::graph::LabelMode::Multi,
            1,
            2,
            vec![Edge::new(0, 0, crate::graph::EdgeLabel::High)],
        )
        .unwrap();
        let mut rng = stream(0, Stream::Augment, 0);
        let out = augment(&g, AugmentKind::Add, 0.5, &mut rng).unwrap();
        assert_eq!(out.edge_count(), 1);
    }
}
