//! Hard-sample mining and homogeneous graph construction.
//!
//! Training edges whose main-task prediction is most uncertain are selected,
//! their endpoints masked, and user-user / item-item graphs are built from the
//! similarity of the masked representations.

use std::fmt;

use rand::Rng;

use crate::aggregation::ProjectionHead;
use crate::error::{Error, Result};
use crate::graph::AugmentKind;
use crate::graph::{normalized_adjacency_from_pairs, BipartiteGraph, EdgeLabel, LabelMode, NormalizedAdjacency};
use crate::tensor::{ParamStore, Session, Tensor, Var};

/// Clamp applied to probabilities before taking logs in [`edge_entropy`].
pub const PROB_CLAMP: f64 = 1e-30;

/// Per-edge `Σ_c −y_c·log ŷ_c − (1−y_c)·log(1−ŷ_c)` against one-hot targets.
pub fn edge_entropy(probs: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    if probs.rows() != labels.len() {
        return Err(Error::dim(
            "edge_entropy",
            format!("{} probability rows vs {} labels", probs.rows(), labels.len()),
        ));
    }
    Ok(labels
        .iter()
        .enumerate()
        .map(|(r, &y)| {
            probs
                .row(r)
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    if c == y {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                })
                .sum()
        })
        .collect())
}

/// `⌈ε·n⌉`, ignoring floating-point excess just above an integer, and at
/// least one when `n ≥ 1`.
pub fn hard_count(n: usize, epsilon: f64) -> usize {
    let x = epsilon * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() < 1e-9 { nearest } else { x.ceil() };
    (k as usize).clamp(n.min(1), n)
}

/// Selected hard edges and the masks of their endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct HardSampleSet {
    /// Indices into the source graph's edges, by decreasing entropy.
    pub edges: Vec<usize>,
    /// Entropy of every source edge.
    pub entropies: Vec<f64>,
    pub user_mask: Vec<bool>,
    pub item_mask: Vec<bool>,
}

impl HardSampleSet {
    pub fn masked_users(&self) -> usize {
        self.user_mask.iter().filter(|&&m| m).count()
    }

    pub fn masked_items(&self) -> usize {
        self.item_mask.iter().filter(|&&m| m).count()
    }

    /// `edge_index<TAB>entropy` lines for the selected edges.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# edge\tentropy\n");
        for &k in &self.edges {
            out.push_str(&format!("{k}\t{}\n", self.entropies[k]));
        }
        out
    }
}

/// Selects the `⌈ε·N⌉` highest-entropy edges of `graph`; equal entropies go
/// to the lower edge index.
pub fn select_hard(entropies: &[f64], epsilon: f64, graph: &BipartiteGraph) -> Result<HardSampleSet> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Config(format!("epsilon {epsilon} outside (0, 1]")));
    }
    if entropies.len() != graph.edge_count() {
        return Err(Error::dim(
            "select_hard",
            format!("{} entropies for {} edges", entropies.len(), graph.edge_count()),
        ));
    }
    let mut order: Vec<usize> = (0..entropies.len()).collect();
    order.sort_by(|&a, &b| entropies[b].total_cmp(&entropies[a]).then(a.cmp(&b)));
    order.truncate(hard_count(entropies.len(), epsilon));
    let mut user_mask = vec![false; graph.user_count()];
    let mut item_mask = vec![false; graph.item_count()];
    for &k in &order {
        let e = graph.edges()[k];
        user_mask[e.user] = true;
        item_mask[e.item] = true;
    }
    Ok(HardSampleSet {
        edges: order,
        entropies: entropies.to_vec(),
        user_mask,
        item_mask,
    })
}

/// `Z ⊙ M` for a row mask: rows with a false flag become zero.
pub fn mask_extract(z: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if mask.len() != z.rows() {
        return Err(Error::dim(
            "mask_extract",
            format!("{} mask entries for {} rows", mask.len(), z.rows()),
        ));
    }
    let mut out = z.clone();
    for (r, &m) in mask.iter().enumerate() {
        if !m {
            out.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

/// Positions of the true flags.
pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Users,
    Items,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Users => "users",
            Side::Items => "items",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub label: EdgeLabel,
}

/// Directed, labeled graph over the masked nodes of one side. Node `k` is
/// original node `nodes[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousGraph {
    pub side: Side,
    pub mode: LabelMode,
    pub nodes: Vec<usize>,
    pub edges: Vec<HomogeneousEdge>,
}

impl HomogeneousGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Out-edges kept by the `label` subgraph, as a symmetric normalized
    /// adjacency over all nodes of the graph.
    pub fn label_adjacency(&self, label: EdgeLabel) -> NormalizedAdjacency {
        let pairs: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|e| e.label == label)
            .map(|e| (e.src, e.dst))
            .collect();
        normalized_adjacency_from_pairs(self.node_count(), &pairs)
    }

    /// Edge removal or addition, as for bipartite graphs: removal drops each
    /// edge with probability `p`; addition inserts `⌊p·|E|⌋` absent directed
    /// non-self pairs labeled like a random existing edge.
    pub fn augment<R: Rng + ?Sized>(&self, kind: AugmentKind, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::Config(format!("augmentation probability {p} outside [0, 0.5]")));
        }
        let mut out = self.clone();
        match kind {
            AugmentKind::Remove => out.edges.retain(|_| !rng.gen_bool(p)),
            AugmentKind::Add => {
                let n = self.node_count();
                let existing = self.edges.len();
                let free = (n * n.saturating_sub(1)).saturating_sub(existing);
                let target = ((p * existing as f64).floor() as usize).min(free);
                let mut taken: std::collections::HashSet<(usize, usize)> =
                    self.edges.iter().map(|e| (e.src, e.dst)).collect();
                while out.edges.len() < existing + target {
                    let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    if a != b && taken.insert((a, b)) {
                        let label = self.edges[rng.gen_range(0..existing)].label;
                        out.edges.push(HomogeneousEdge {
                            src: a,
                            dst: b,
                            weight: 0.0,
                            label,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Score matrix `row_softmax(P·Pᵀ)` with `P = MLP(h)` over the rows of `h`.
pub fn homogeneous_scores(store: &ParamStore, mlp: &ProjectionHead, h: &Tensor) -> Result<Tensor> {
    let p = mlp.apply(store, h)?;
    Ok(p.matmul(&p.transpose())?.row_softmax())
}

/// Builds the graph over the masked rows of `h_s`: scores from
/// [`homogeneous_scores`], the `k_top` best non-self targets per node (equal
/// scores to the lower index), then labels by score rank across all kept
/// edges: top third High, middle Mid, bottom Low (binary: halves High/Low).
///
/// Returns `None` with a warning when fewer than two rows are masked.
pub fn build_homogeneous_graph(
    store: &ParamStore,
    mlp: &ProjectionHead,
    h_s: &Tensor,
    mask: &[bool],
    k_top: usize,
    mode: LabelMode,
    side: Side,
) -> Result<Option<HomogeneousGraph>> {
    let nodes = mask_indices(mask);
    if mask.len() != h_s.rows() {
        return Err(Error::dim(
            "build_homogeneous_graph",
            format!("{} mask entries for {} rows", mask.len(), h_s.rows()),
        ));
    }
    if nodes.len() < 2 {
        log::warn!("only {} masked {side}; homogeneous graph skipped", nodes.len());
        return Ok(None);
    }
    let mut rows = Tensor::zeros(nodes.len(), h_s.cols());
    for (k, &n) in nodes.iter().enumerate() {
        rows.row_mut(k).copy_from_slice(h_s.row(n));
    }
    let scores = homogeneous_scores(store, mlp, &rows)?;
    let n = nodes.len();
    let mut edges = Vec::with_capacity(n * k_top.min(n - 1));
    for src in 0..n {
        let mut targets: Vec<usize> = (0..n).filter(|&d| d != src).collect();
        targets.sort_by(|&a, &b| scores.get(src, b).total_cmp(&scores.get(src, a)).then(a.cmp(&b)));
        targets.truncate(k_top);
        for dst in targets {
            edges.push(HomogeneousEdge {
                src,
                dst,
                weight: scores.get(src, dst),
                label: EdgeLabel::High,
            });
        }
    }
    let mut ranked: Vec<usize> = (0..edges.len()).collect();
    ranked.sort_by(|&a, &b| {
        edges[b]
            .weight
            .total_cmp(&edges[a].weight)
            .then((edges[a].src, edges[a].dst).cmp(&(edges[b].src, edges[b].dst)))
    });
    let labels = mode.labels();
    let m = edges.len();
    for (rank, &k) in ranked.iter().enumerate() {
        edges[k].label = labels[rank * labels.len() / m];
    }
    Ok(Some(HomogeneousGraph {
        side,
        mode,
        nodes,
        edges,
    }))
}

/// Subtask objective: cross-entropy over hard edges plus the squared distance
/// of the subtask representations to the masked main-task ones.
pub fn subtask_loss(
    s: &mut Session,
    probs: Var,
    one_hot: Var,
    zs_user: Var,
    zs_item: Var,
    zm_user_masked: Var,
    zm_item_masked: Var,
) -> Result<Var> {
    let ce = crate::link_prediction::cross_entropy(s, probs, one_hot)?;
    let du = s.tape.sub(zm_user_masked, zs_user)?;
    let du = s.tape.squared_l2(du)?;
    let di = s.tape.sub(zm_item_masked, zs_item)?;
    let di = s.tape.squared_l2(di)?;
    s.tape.add_all(&[ce, du, di])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, LabelMode};
    use crate::link_prediction::one_hot;
    use crate::rng::{stream, Stream};

    #[test]
    fn entropy_examples() {
        let e = edge_entropy(&Tensor::from_rows(&[[1.0, 0.0, 0.0]]), &[0]).unwrap();
        assert!(e[0].abs() < 1e-12);
        let third = 1.0 / 3.0;
        let e = edge_entropy(&Tensor::from_rows(&[[third, third, third]]), &[0]).unwrap();
        let expected = -(third.ln()) - 2.0 * (2.0 * third).ln();
        assert!((e[0] - expected).abs() < 1e-12);
        assert!((e[0] - 1.9095425048844386).abs() < 1e-12);
    }

    #[test]
    fn entropy_falls_as_true_class_probability_rises() {
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let p = k as f64 / 20.0;
            let rest = (1.0 - p) / 2.0;
            let e = edge_entropy(&Tensor::from_rows(&[[p, rest, rest]]), &[0]).unwrap()[0];
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn hard_counts() {
        assert_eq!(hard_count(10, 0.3), 3);
        assert_eq!(hard_count(11, 0.3), 4);
        assert_eq!(hard_count(10, 1.0), 10);
        assert_eq!(hard_count(1, 0.01), 1);
        assert_eq!(hard_count(0, 0.3), 0);
        for n in 1..500 {
            for eps in [0.1, 0.2, 0.3, 0.7, 1.0] {
                let k = hard_count(n, eps);
                // Exact rational check: smallest k with k ≥ ε·n.
                let tenths = (eps * 10.0).round() as usize;
                assert_eq!(k, (tenths * n).div_ceil(10), "n={n} eps={eps}");
            }
        }
    }

    fn toy_graph() -> BipartiteGraph {
        let edges = (0..10)
            .map(|k| Edge::new(k % 4, k % 3, EdgeLabel::High))
            .collect::<Vec<_>>();
        let mut seen = std::collections::HashSet::new();
        let edges = edges.into_iter().filter(|e| seen.insert((e.user, e.item))).collect();
        BipartiteGraph::new(LabelMode::Multi, 4, 3, edges).unwrap()
    }

    #[test]
    fn ties_select_lowest_indices() {
        let g = toy_graph();
        let h = select_hard(&vec![1.0; g.edge_count()], 0.3, &g).unwrap();
        assert_eq!(h.edges, (0..hard_count(g.edge_count(), 0.3)).collect::<Vec<_>>());
        for &k in &h.edges {
            let e = g.edges()[k];
            assert!(h.user_mask[e.user] && h.item_mask[e.item]);
        }
        let flagged: usize = h.masked_users() + h.masked_items();
        let touched: std::collections::HashSet<_> = h
            .edges
            .iter()
            .flat_map(|&k| [(0, g.edges()[k].user), (1, g.edges()[k].item)])
            .collect();
        assert_eq!(flagged, touched.len());
    }

    #[test]
    fn all_edges_at_epsilon_one() {
        let g = toy_graph();
        let h = select_hard(&vec![0.5; g.edge_count()], 1.0, &g).unwrap();
        assert_eq!(h.edges.len(), g.edge_count());
        assert!(h.user_mask.iter().all(|&m| m));
    }

    #[test]
    fn masking() {
        let z = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(mask_extract(&z, &[true; 3]).unwrap(), z);
        assert_eq!(mask_extract(&z, &[false; 3]).unwrap(), Tensor::zeros(3, 2));
        let m = mask_extract(&z, &[true, false, true]).unwrap();
        assert_eq!(m.row(0), z.row(0));
        assert_eq!(m.row(1), &[0.0, 0.0]);
    }

    fn mlp(store: &mut ParamStore, dim: usize, seed: u64) -> ProjectionHead {
        let mut rng = stream(seed, Stream::Init, 0);
        ProjectionHead::new(store, "t", dim, &mut rng)
    }

    #[test]
    fn two_nodes_one_edge_each() {
        let mut store = ParamStore::new();
        let head = mlp(&mut store, 2, 0);
        let h = Tensor::from_rows(&[[0.1, 0.2], [0.0, 0.0], [0.4, -0.3]]);
        let g = build_homogeneous_graph(
            &store,
            &head,
            &h,
            &[true, false, true],
            1,
            LabelMode::Multi,
            Side::Users,
        )
        .unwrap()
        .unwrap();
        assert_eq!(g.nodes, vec![0, 2]);
        assert_eq!(g.edges.len(), 2);
        assert_eq!((g.edges[0].src, g.edges[0].dst), (0, 1));
        assert_eq!((g.edges[1].src, g.edges[1].dst), (1, 0));
    }

    #[test]
    fn identical_rows_follow_index_order() {
        let mut store = ParamStore::new();
        let head = mlp(&mut store, 3, 1);
        let h = Tensor::full(4, 3, 0.25);
        let g = build_homogeneous_graph(&store, &head, &h, &[true; 4], 3, LabelMode::Multi, Side::Items)
            .unwrap()
            .unwrap();
        assert_eq!(g.edges.len(), 12);
        // Uniform scores: ranks follow (src, dst), so the first four edges
        // are High, the next four Mid, the rest Low.
        let labels: Vec<EdgeLabel> = g.edges.iter().map(|e| e.label).collect();
        assert!(labels[..4].iter().all(|&l| l == EdgeLabel::High));
        assert!(labels[4..8].iter().all(|&l| l == EdgeLabel::Mid));
        assert!(labels[8..].iter().all(|&l| l == EdgeLabel::Low));
    }

    #[test]
    fn too_few_masked_rows() {
        let mut store = ParamStore::new();
        let head = mlp(&mut store, 2, 0);
        let h = Tensor::full(3, 2, 1.0);
        assert!(build_homogeneous_graph(
            &store,
            &head,
            &h,
            &[false, true, false],
            2,
            LabelMode::Multi,
            Side::Users
        )
        .unwrap()
        .is_none());
    }

    #[test]
    fn scores_match_independent_evaluation() {
        let mut store = ParamStore::new();
        let head = mlp(&mut store, 2, 9);
        let mut rng = stream(9, Stream::Init, 1);
        let h = Tensor::uniform(5, 2, 1.0, &mut rng);
        let ids = head.params();
        let (a1, b1, a2, b2) = (
            store.value(ids[0]).clone(),
            store.value(ids[1]).clone(),
            store.value(ids[2]).clone(),
            store.value(ids[3]).clone(),
        );
        let mut p = Tensor::zeros(5, 2);
        for r in 0..5 {
            let hidden: Vec<f64> = (0..2)
                .map(|c| (h.get(r, 0) * a1.get(0, c) + h.get(r, 1) * a1.get(1, c) + b1.get(0, c)).tanh())
                .collect();
            for c in 0..2 {
                p.set(r, c, hidden[0] * a2.get(0, c) + hidden[1] * a2.get(1, c) + b2.get(0, c));
            }
        }
        let mut expected = Tensor::zeros(5, 5);
        for r in 0..5 {
            let logits: Vec<f64> = (0..5)
                .map(|c| p.get(r, 0) * p.get(c, 0) + p.get(r, 1) * p.get(c, 1))
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for (c, l) in logits.iter().enumerate() {
                expected.set(r, c, l.exp() / z);
            }
        }
        let got = homogeneous_scores(&store, &head, &h).unwrap();
        assert!(got.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn subtask_loss_cases() {
        let store = ParamStore::new();
        let mut s = Session::new(&store);
        let zm = Tensor::from_rows(&[[1.0, 2.0], [0.0, 0.0]]);
        let labels = [1usize, 0];
        let probs = s.tape.constant(one_hot(&labels, 3)).unwrap();
        let y = s.tape.constant(one_hot(&labels, 3)).unwrap();
        let zmv = s.tape.constant(zm.clone()).unwrap();
        let l = subtask_loss(&mut s, probs, y, zmv, zmv, zmv, zmv).unwrap();
        assert_eq!(s.tape.value(l).item(), 0.0);

        let off = |delta: f64| {
            let mut zs = zm.clone();
            zs.set(0, 0, 1.0 + delta);
            let mut s = Session::new(&store);
            let p = s.tape.constant(one_hot(&labels, 3)).unwrap();
            let y = s.tape.constant(one_hot(&labels, 3)).unwrap();
            let zsv = s.tape.constant(zs).unwrap();
            let zmv = s.tape.constant(zm.clone()).unwrap();
            let l = subtask_loss(&mut s, p, y, zsv, zmv, zmv, zmv).unwrap();
            s.tape.value(l).item()
        };
        assert!((off(0.6) - 4.0 * off(0.3)).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_augment() {
        let mut store = ParamStore::new();
        let head = mlp(&mut store, 3, 2);
        let mut rng = stream(3, Stream::Init, 0);
        let h = Tensor::uniform(30, 3, 1.0, &mut rng);
        let g = build_homogeneous_graph(&store, &head, &h, &[true; 30], 5, LabelMode::Multi, Side::Users)
            .unwrap()
            .unwrap();
        let mut rng = stream(3, Stream::Augment, 0);
        let added = g.augment(AugmentKind::Add, 0.1, &mut rng).unwrap();
        assert_eq!(added.edges.len(), 150 + 15);
        assert!(added.edges.iter().all(|e| e.src != e.dst));
        assert_eq!(g.augment(AugmentKind::Remove, 0.0, &mut rng).unwrap(), g);
    }
}
