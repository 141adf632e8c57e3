use rand::seq::SliceRandom;
use rand::Rng;

use super::{BipartiteGraph, Edge, EdgeLabel, LabelMode, MIN_DEGREE};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Parameters of the planted-cluster generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    /// Probability of replacing an edge's label with a uniformly drawn one.
    pub noise: f64,
    pub seed: u64,
    pub mode: LabelMode,
    /// Edges drawn per user before degree top-up.
    pub edges_per_user: usize,
    /// Probability that a drawn edge goes to a same-cluster item.
    pub within_prob: f64,
    /// Probability that a drawn edge goes to a mid item (multi mode only).
    pub mid_prob: f64,
}

impl SynthParams {
    pub fn new(users: usize, items: usize, clusters: usize, noise: f64, seed: u64) -> Self {
        SynthParams {
            users,
            items,
            clusters,
            noise,
            seed,
            mode: LabelMode::Multi,
            edges_per_user: 8,
            within_prob: 0.6,
            mid_prob: 0.1,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.clusters < 2 {
            return bad(format!("clusters must be at least 2, got {}", self.clusters));
        }
        if self.users < 4 * self.clusters || self.items < 4 * self.clusters {
            return bad(format!(
                "users ({}) and items ({}) must each be at least 4 x clusters ({})",
                self.users,
                self.items,
                4 * self.clusters
            ));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("within_prob", self.within_prob),
            ("mid_prob", self.mid_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.edges_per_user < MIN_DEGREE {
            return bad(format!("edges_per_user must be at least {MIN_DEGREE}"));
        }
        Ok(())
    }
}

/// Node roles: a cluster index, or `None` for mid items.
struct Layout {
    user_cluster: Vec<usize>,
    item_cluster: Vec<Option<usize>>,
}

impl Layout {
    fn label(&self, u: usize, i: usize) -> EdgeLabel {
        match self.item_cluster[i] {
            None => EdgeLabel::Mid,
            Some(c) if c == self.user_cluster[u] => EdgeLabel::High,
            Some(_) => EdgeLabel::Low,
        }
    }
}

/// Random bipartite graph with planted clusters.
///
/// Users and items are dealt round-robin into clusters after a shuffle. In
/// multi mode 10% of items are "mid" items outside every cluster. Same-cluster
/// edges are High, cross-cluster edges Low, edges to mid items Mid. Each user
/// draws `edges_per_user` edges; items left below degree 3 are topped up.
/// Finally each label is resampled uniformly with probability `noise`.
pub fn synth_generate(params: &SynthParams) -> Result<BipartiteGraph> {
    synth_generate_planted(params).map(|p| p.graph)
}

/// A generated graph together with its planted structure.
#[derive(Clone, Debug)]
pub struct PlantedGraph {
    pub graph: BipartiteGraph,
    pub user_cluster: Vec<usize>,
    /// Cluster of each item; `None` for mid items.
    pub item_cluster: Vec<Option<usize>>,
}

/// [`synth_generate`], also returning the cluster assignment.
pub fn synth_generate_planted(params: &SynthParams) -> Result<PlantedGraph> {
    params.validate()?;
    let mut rng = stream(params.seed, Stream::Synth, 0);
    let (nu, ni, k) = (params.users, params.items, params.clusters);

    let mut users: Vec<usize> = (0..nu).collect();
    users.shuffle(&mut rng);
    let mut user_cluster = vec![0; nu];
    for (pos, &u) in users.iter().enumerate() {
        user_cluster[u] = pos % k;
    }
    let mid_items = match params.mode {
        LabelMode::Multi => ((0.1 * ni as f64).round() as usize).max(1),
        LabelMode::Binary => 0,
    };
    let mut items: Vec<usize> = (0..ni).collect();
    items.shuffle(&mut rng);
    let mut item_cluster = vec![None; ni];
    for (pos, &i) in items.iter().enumerate().skip(mid_items) {
        item_cluster[i] = Some((pos - mid_items) % k);
    }
    let layout = Layout {
        user_cluster,
        item_cluster,
    };

    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut mids = Vec::new();
    for i in 0..ni {
        match layout.item_cluster[i] {
            Some(c) => by_cluster[c].push(i),
            None => mids.push(i),
        }
    }

    let mut taken = vec![vec![false; ni]; nu];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let per_user = params.edges_per_user.min(ni);
    for (u, &own) in layout.user_cluster.iter().enumerate() {
        for _ in 0..per_user {
            let draw: f64 = rng.gen();
            let pool: Vec<usize> = if draw < params.mid_prob && !mids.is_empty() {
                mids.clone()
            } else if rng.gen_bool(params.within_prob) {
                by_cluster[own].clone()
            } else {
                (0..k)
                    .filter(|&c| c != own)
                    .flat_map(|c| by_cluster[c].iter().copied())
                    .collect()
            };
            let mut free: Vec<usize> = pool.into_iter().filter(|&i| !taken[u][i]).collect();
            if free.is_empty() {
                free = (0..ni).filter(|&i| !taken[u][i]).collect();
            }
            let i = free[rng.gen_range(0..free.len())];
            taken[u][i] = true;
            pairs.push((u, i));
        }
    }

    let mut item_degree = vec![0usize; ni];
    for &(_, i) in &pairs {
        item_degree[i] += 1;
    }
    for i in 0..ni {
        while item_degree[i] < MIN_DEGREE {
            let free: Vec<usize> = (0..nu).filter(|&u| !taken[u][i]).collect();
            let u = free[rng.gen_range(0..free.len())];
            taken[u][i] = true;
            pairs.push((u, i));
            item_degree[i] += 1;
        }
    }

    let labels = params.mode.labels();
    let edges = pairs
        .into_iter()
        .map(|(u, i)| {
            let planted = layout.label(u, i);
            let label = if rng.gen_bool(params.noise) {
                labels[rng.gen_range(0..labels.len())]
            } else {
                planted
            };
            Edge::new(u, i, label)
        })
        .collect();
    Ok(PlantedGraph {
        graph: BipartiteGraph::new(params.mode, nu, ni, edges)?,
        user_cluster: layout.user_cluster,
        item_cluster: layout.item_cluster,
    })
}
