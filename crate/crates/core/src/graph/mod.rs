//! Bipartite user-item graphs with labeled edges: ingestion, splitting,
//! augmentation, per-label partitioning, adjacency normalization and a
//! synthetic generator with planted cluster structure.

mod adjacency;
mod augment;
mod ingest;
mod split;
mod synth;

pub use adjacency::{normalize_adjacency, normalized_adjacency_from_pairs, NormalizedAdjacency};
pub use augment::{augment, AugmentKind};
pub use ingest::{ingest_edge_list, parse_edge_list, write_edge_list};
pub use split::{split, split_counts, SplitGraphs};
pub use synth::{synth_generate, synth_generate_planted, PlantedGraph, SynthParams};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Minimum node degree kept by ingestion.
pub const MIN_DEGREE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    High,
    Mid,
    Low,
}

impl EdgeLabel {
    pub fn name(self) -> &'static str {
        match self {
            EdgeLabel::High => "high",
            EdgeLabel::Mid => "mid",
            EdgeLabel::Low => "low",
        }
    }

    /// Rating written back when serializing a graph.
    pub fn representative_rating(self) -> u8 {
        match self {
            EdgeLabel::High => 5,
            EdgeLabel::Mid => 3,
            EdgeLabel::Low => 1,
        }
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Label arity of a run: three classes, or the two extremes only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum LabelMode {
    #[default]
    Multi,
    Binary,
}

impl LabelMode {
    /// Labels in class-index order.
    pub fn labels(self) -> &'static [EdgeLabel] {
        match self {
            LabelMode::Multi => &[EdgeLabel::High, EdgeLabel::Mid, EdgeLabel::Low],
            LabelMode::Binary => &[EdgeLabel::High, EdgeLabel::Low],
        }
    }

    pub fn class_count(self) -> usize {
        self.labels().len()
    }

    pub fn class_of(self, label: EdgeLabel) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    /// Rating bucketing: 1-2 low, 3 mid, 4-5 high. Binary mode drops 3.
    pub fn label_of_rating(self, rating: u8) -> Option<EdgeLabel> {
        match (rating, self) {
            (1 | 2, _) => Some(EdgeLabel::Low),
            (3, LabelMode::Multi) => Some(EdgeLabel::Mid),
            (4 | 5, _) => Some(EdgeLabel::High),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Multi => "multi",
            LabelMode::Binary => "binary",
        }
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi" => Ok(LabelMode::Multi),
            "binary" => Ok(LabelMode::Binary),
            _ => Err(Error::Config(format!("unknown label mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub user: usize,
    pub item: usize,
    pub label: EdgeLabel,
}

impl Edge {
    pub fn new(user: usize, item: usize, label: EdgeLabel) -> Self {
        Edge { user, item, label }
    }
}

/// Users, items and labeled user-item edges.
///
/// Derived graphs (splits, augmentations, label partitions) share the node
/// index space of their source so embedding tables line up across them.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph {
    mode: LabelMode,
    user_ids: Arc<Vec<String>>,
    item_ids: Arc<Vec<String>>,
    edges: Vec<Edge>,
}

impl BipartiteGraph {
    /// Validates and builds a graph over `user_count` users and `item_count`
    /// items with default external IDs `u<k>` / `i<k>`.
    pub fn new(mode: LabelMode, user_count: usize, item_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let user_ids = (0..user_count).map(|k| format!("u{k}")).collect();
        let item_ids = (0..item_count).map(|k| format!("i{k}")).collect();
        Self::with_ids(mode, Arc::new(user_ids), Arc::new(item_ids), edges)
    }

    pub fn with_ids(
        mode: LabelMode,
        user_ids: Arc<Vec<String>>,
        item_ids: Arc<Vec<String>>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.user >= user_ids.len() || e.item >= item_ids.len() {
                return Err(Error::Data(format!(
                    "edge ({}, {}) outside {}x{} node space",
                    e.user,
                    e.item,
                    user_ids.len(),
                    item_ids.len()
                )));
            }
            if mode.class_of(e.label).is_none() {
                return Err(Error::Data(format!(
                    "label {} not allowed in {} mode",
                    e.label,
                    mode.name()
                )));
            }
            if !seen.insert((e.user, e.item)) {
                return Err(Error::Data(format!("duplicate edge ({}, {})", e.user, e.item)));
            }
        }
        Ok(BipartiteGraph {
            mode,
            user_ids,
            item_ids,
            edges,
        })
    }

    /// A graph over the same node space with a different edge set.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        Self::with_ids(self.mode, Arc::clone(&self.user_ids), Arc::clone(&self.item_ids), edges)
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn node_count(&self) -> usize {
        self.user_count() + self.item_count()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn user_id(&self, u: usize) -> &str {
        &self.user_ids[u]
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.item_ids[i]
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.user_count()];
        for e in &self.edges {
            d[e.user] += 1;
        }
        d
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.item_count()];
        for e in &self.edges {
            d[e.item] += 1;
        }
        d
    }

    pub fn label_counts(&self) -> BTreeMap<EdgeLabel, usize> {
        let mut counts: BTreeMap<EdgeLabel, usize> = self.mode.labels().iter().map(|&l| (l, 0)).collect();
        for e in &self.edges {
            *counts.entry(e.label).or_default() += 1;
        }
        counts
    }

    /// Class indices of the edges, in edge order.
    pub fn class_labels(&self) -> Vec<usize> {
        self.edges
            .iter()
            .map(|e| self.mode.class_of(e.label).expect("validated"))
            .collect()
    }
}

/// One subgraph per label of the graph's mode, each over the full node space.
/// Edgeless labels are kept, with a warning.
pub fn partition_by_label(graph: &BipartiteGraph) -> BTreeMap<EdgeLabel, BipartiteGraph> {
    graph
        .mode()
        .labels()
        .iter()
        .map(|&label| {
            let edges: Vec<Edge> = graph.edges().iter().filter(|e| e.label == label).copied().collect();
            if edges.is_empty() {
                log::warn!("label {label} has no edges; its subgraph is edgeless");
            }
            let sub = graph.with_edges(edges).expect("subset of a valid graph");
            (label, sub)
        })
        .collect()
}
