//! Shared test support: central finite-difference gradient checks of every
//! differentiable building block, and small random instances.

#![allow(dead_code)]

use mcgcl::aggregation::{AggregationKind, AugmentationMerger, LabelAggregator, ProjectionHead};
use mcgcl::contrastive::{cross_encoder_loss, same_encoder_loss, CrossLossSign};
use mcgcl::encoders::{Activation, GcnEncoder, LabelView};
use std::path::Path;

use mcgcl::graph::{
    normalize_adjacency, normalized_adjacency_from_pairs, parse_edge_list, partition_by_label, split, split_counts,
    BipartiteGraph, Edge, EdgeLabel, LabelMode, NormalizedAdjacency, MIN_DEGREE,
};
use mcgcl::link_prediction::{cross_entropy, main_loss, one_hot, PredictionHead};
use mcgcl::model::{LabelStack, StackSpec, StackViews};
use mcgcl::subtask::subtask_loss;
use mcgcl::tensor::{ParamId, ParamStore, Session, Tensor, Var};
use mcgcl::training::fuse_on_tape;
use mcgcl::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance of the gradient comparison.
pub const GRAD_RTOL: f64 = 1e-4;
/// Magnitude below which gradients are compared absolutely, scaled by
/// `GRAD_RTOL`; finite differences cannot resolve smaller values.
pub const GRAD_FLOOR: f64 = 1e-3;
const STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worst violation ratio `|analytic − numeric| / (rtol·max(|a|, |n|, floor))`
/// over every element of `params`; a value ≤ 1 passes.
pub fn gradient_check(
    store: &mut ParamStore,
    params: &[ParamId],
    loss: &dyn Fn(&mut Session) -> Result<Var>,
) -> Result<f64> {
    let mut s = Session::new(store);
    let l = loss(&mut s)?;
    let (tape, grads) = s.backward(l)?;
    store.zero_grads();
    store.accumulate(&tape, &grads);
    let analytic: Vec<Tensor> = params.iter().map(|&id| store.grad(id).clone()).collect();
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut s = Session::new(store);
        let l = loss(&mut s)?;
        Ok(s.tape.value(l).item())
    };
    let mut worst = 0.0f64;
    for (&id, grad) in params.iter().zip(&analytic) {
        for k in 0..grad.data().len() {
            let x = store.value(id).data()[k];
            let h = STEP * x.abs().max(1.0);
            store.value_mut(id).data_mut()[k] = x + h;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[k] = x - h;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[k] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[k];
            let scale = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((a - numeric).abs() / (GRAD_RTOL * scale));
        }
    }
    Ok(worst)
}

/// `Σ (x ⊙ R)` for a fixed random `R`, so every output entry gets a distinct
/// upstream gradient.
fn weighted_sum(s: &mut Session, x: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let (r, c) = s.tape.shape(x);
    let w = s.tape.constant(Tensor::uniform(r, c, 1.0, rng))?;
    let p = s.tape.mul(x, w)?;
    s.tape.sum(p)
}

fn random_pairs(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    all.shuffle(rng);
    all.truncate(count);
    all
}

fn random_adjacency(n: usize, rng: &mut ChaCha8Rng) -> NormalizedAdjacency {
    let count = rng.gen_range(1..=n * (n - 1) / 2);
    normalized_adjacency_from_pairs(n, &random_pairs(n, count, rng))
}

fn param(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
    store.add(name, Tensor::uniform(rows, cols, 1.0, rng))
}

/// One gradient check instance; returns the worst violation ratio.
pub type Instance = fn(u64) -> Result<f64>;

fn gcn_layer(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let n = rng.gen_range(3..8);
    let d = rng.gen_range(2..5);
    let layers = rng.gen_range(1..3);
    let activation = if seed.is_multiple_of(2) {
        Activation::Softmax
    } else {
        Activation::Relu
    };
    let adj = random_adjacency(n, &mut rng);
    let mut store = ParamStore::new();
    let h0 = param(&mut store, "h0", n, d, &mut rng);
    let enc = GcnEncoder::new(&mut store, "g", EdgeLabel::High, layers, d, activation, &mut rng);
    let mut ids = vec![h0];
    ids.extend_from_slice(enc.params());
    let wseed = rng.gen();
    gradient_check(&mut store, &ids, &|s| {
        let h = s.param(h0);
        let out = enc.forward(s, &adj, h)?;
        weighted_sum(s, out, &mut self::rng(wseed))
    })
}

fn same_encoder(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let d = rng.gen_range(2..5);
    let t = rng.gen_range(0.3..2.0);
    let mut store = ParamStore::new();
    let roles: Vec<(ParamId, ParamId)> = (0..2)
        .map(|r| {
            let n = rng.gen_range(2..6);
            (
                param(&mut store, &format!("a{r}"), n, d, &mut rng),
                param(&mut store, &format!("b{r}"), n, d, &mut rng),
            )
        })
        .collect();
    let ids: Vec<ParamId> = roles.iter().flat_map(|&(a, b)| [a, b]).collect();
    gradient_check(&mut store, &ids, &|s| {
        let pairs: Vec<(Var, Var)> = roles.iter().map(|&(a, b)| (s.param(a), s.param(b))).collect();
        same_encoder_loss(&mut s.tape, &pairs, t)
    })
}

fn cross_encoder(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let d = rng.gen_range(2..5);
    let t = rng.gen_range(0.3..2.0);
    let sign = if seed.is_multiple_of(2) {
        CrossLossSign::Attract
    } else {
        CrossLossSign::Repulsive
    };
    let sizes = [rng.gen_range(2..6), rng.gen_range(2..6)];
    let mut store = ParamStore::new();
    let labels = [EdgeLabel::High, EdgeLabel::Mid, EdgeLabel::Low];
    let per_label: Vec<(EdgeLabel, Vec<ParamId>)> = labels
        .iter()
        .map(|&l| {
            let ids = sizes
                .iter()
                .enumerate()
                .map(|(r, &n)| param(&mut store, &format!("{l}.{r}"), n, d, &mut rng))
                .collect();
            (l, ids)
        })
        .collect();
    let ids: Vec<ParamId> = per_label.iter().flat_map(|(_, v)| v.clone()).collect();
    gradient_check(&mut store, &ids, &|s| {
        let vars: Vec<(EdgeLabel, Vec<Var>)> = per_label
            .iter()
            .map(|(l, v)| (*l, v.iter().map(|&id| s.param(id)).collect()))
            .collect();
        cross_encoder_loss(&mut s.tape, &vars, t, sign)
    })
}

fn augmentation_attention(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let n = rng.gen_range(2..7);
    let d = rng.gen_range(2..5);
    let mut store = ParamStore::new();
    let a = param(&mut store, "a", n, d, &mut rng);
    let b = param(&mut store, "b", n, d, &mut rng);
    let merger = AugmentationMerger::new(&mut store, "m", AggregationKind::Attention, d, &mut rng);
    // Nonzero bias so its gradient path is exercised away from the origin.
    let bias = merger.params()[1];
    *store.value_mut(bias) = Tensor::uniform(1, d, 0.5, &mut rng);
    let mut ids = vec![a, b];
    ids.extend(merger.params());
    let wseed = rng.gen();
    gradient_check(&mut store, &ids, &|s| {
        let (ha, hb) = (s.param(a), s.param(b));
        let out = merger.merge(s, ha, hb)?;
        weighted_sum(s, out, &mut self::rng(wseed))
    })
}

fn label_attention(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let n = rng.gen_range(2..7);
    let d = rng.gen_range(2..5);
    let k = rng.gen_range(2..4);
    let mut store = ParamStore::new();
    let inputs: Vec<ParamId> = (0..k)
        .map(|i| param(&mut store, &format!("h{i}"), n, d, &mut rng))
        .collect();
    let agg = LabelAggregator::new(&mut store, "agg", AggregationKind::Attention, k, d, &mut rng);
    let mut ids = inputs.clone();
    ids.extend(agg.params());
    let wseed = rng.gen();
    gradient_check(&mut store, &ids, &|s| {
        let vars: Vec<Var> = inputs.iter().map(|&id| s.param(id)).collect();
        let out = agg.aggregate(s, &vars)?;
        weighted_sum(s, out, &mut self::rng(wseed))
    })
}

fn projection(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let n = rng.gen_range(2..7);
    let d = rng.gen_range(2..5);
    let mut store = ParamStore::new();
    let h = param(&mut store, "h", n, d, &mut rng);
    let head = ProjectionHead::new(&mut store, "p", d, &mut rng);
    for id in head.params() {
        let (r, c) = store.value(id).shape();
        *store.value_mut(id) = Tensor::uniform(r, c, 1.0, &mut rng);
    }
    let mut ids = vec![h];
    ids.extend(head.params());
    let wseed = rng.gen();
    gradient_check(&mut store, &ids, &|s| {
        let x = s.param(h);
        let out = head.project(s, x)?;
        weighted_sum(s, out, &mut self::rng(wseed))
    })
}

struct HeadInstance {
    store: ParamStore,
    z_user: ParamId,
    z_item: ParamId,
    head: PredictionHead,
    edges: Vec<(usize, usize)>,
    targets: Tensor,
}

fn head_instance(rng: &mut ChaCha8Rng) -> HeadInstance {
    let (nu, ni) = (rng.gen_range(2..6), rng.gen_range(2..6));
    let d = rng.gen_range(2..5);
    let classes = rng.gen_range(2..4);
    let mut store = ParamStore::new();
    let z_user = param(&mut store, "zu", nu, d, rng);
    let z_item = param(&mut store, "zi", ni, d, rng);
    let head = PredictionHead::new(&mut store, "h", d, classes, rng);
    for id in head.params() {
        let (r, c) = store.value(id).shape();
        *store.value_mut(id) = Tensor::uniform(r, c, 1.0, rng);
    }
    let edges: Vec<(usize, usize)> = (0..rng.gen_range(1..8))
        .map(|_| (rng.gen_range(0..nu), rng.gen_range(0..ni)))
        .collect();
    let labels: Vec<usize> = edges.iter().map(|_| rng.gen_range(0..classes)).collect();
    HeadInstance {
        store,
        z_user,
        z_item,
        head,
        edges,
        targets: one_hot(&labels, classes),
    }
}

fn prediction_head(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let mut inst = head_instance(&mut rng);
    let mut ids = vec![inst.z_user, inst.z_item];
    ids.extend(inst.head.params());
    let wseed = rng.gen();
    let (zu, zi, head, edges) = (inst.z_user, inst.z_item, inst.head.clone(), inst.edges.clone());
    gradient_check(&mut inst.store, &ids, &|s| {
        let (u, i) = (s.param(zu), s.param(zi));
        let probs = head.forward(s, u, i, &edges)?;
        weighted_sum(s, probs, &mut self::rng(wseed))
    })
}

fn main_objective(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let mut inst = head_instance(&mut rng);
    let eta = rng.gen_range(0.0..1.0);
    let mut ids = vec![inst.z_user, inst.z_item];
    ids.extend(inst.head.params());
    let (zu, zi, head, edges, targets) = (
        inst.z_user,
        inst.z_item,
        inst.head.clone(),
        inst.edges.clone(),
        inst.targets.clone(),
    );
    gradient_check(&mut inst.store, &ids, &|s| {
        let (u, i) = (s.param(zu), s.param(zi));
        let probs = head.forward(s, u, i, &edges)?;
        let y = s.tape.constant(targets.clone())?;
        main_loss(s, probs, y, u, i, eta)
    })
}

fn subtask_objective(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let mut inst = head_instance(&mut rng);
    let (nu, d) = inst.store.value(inst.z_user).shape();
    let ni = inst.store.value(inst.z_item).rows();
    let mu = param(&mut inst.store, "mu", nu, d, &mut rng);
    let mi = param(&mut inst.store, "mi", ni, d, &mut rng);
    let mut ids = vec![inst.z_user, inst.z_item, mu, mi];
    ids.extend(inst.head.params());
    let (zu, zi, head, edges, targets) = (
        inst.z_user,
        inst.z_item,
        inst.head.clone(),
        inst.edges.clone(),
        inst.targets.clone(),
    );
    gradient_check(&mut inst.store, &ids, &|s| {
        let (u, i) = (s.param(zu), s.param(zi));
        let (m_u, m_i) = (s.param(mu), s.param(mi));
        let probs = head.forward(s, u, i, &edges)?;
        let y = s.tape.constant(targets.clone())?;
        subtask_loss(s, probs, y, u, i, m_u, m_i)
    })
}

/// The weighted training objective `α(same + cross) + β·main` through a full
/// two-role label stack, followed by the fusion-stage cross-entropy.
fn total_objective(seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let (nu, ni) = (rng.gen_range(2..4), rng.gen_range(2..4));
    let n = nu + ni;
    let d = 2;
    let labels = vec![EdgeLabel::High, EdgeLabel::Low];
    let aggregation = [AggregationKind::Attention, AggregationKind::Mlp, AggregationKind::Mean][seed as usize % 3];
    let spec = StackSpec {
        labels: labels.clone(),
        roles: vec![0..nu, nu..n],
        dim: d,
        layers: 1,
        activation: Activation::Softmax,
        aggregation,
        per_label_h0: false,
    };
    let mut store = ParamStore::new();
    let h0 = Tensor::uniform(n, d, 1.0, &mut rng);
    let stack = LabelStack::new(&mut store, "m", spec, h0, &mut rng)?;
    let cross: Vec<(usize, usize)> = (0..nu).flat_map(|u| (nu..n).map(move |i| (u, i))).collect();
    let views = StackViews {
        per_label: labels
            .iter()
            .map(|&l| {
                let mut pick = || {
                    let mut p = cross.clone();
                    p.shuffle(&mut rng);
                    p.truncate(rng.gen_range(1..=cross.len()));
                    LabelView {
                        label: l,
                        adjacency: normalized_adjacency_from_pairs(n, &p),
                    }
                };
                (pick(), pick())
            })
            .collect(),
        active: vec![true, true],
    };
    let head = PredictionHead::new(&mut store, "h", d, 2, &mut rng);
    let edges: Vec<(usize, usize)> = (0..4).map(|_| (rng.gen_range(0..nu), rng.gen_range(0..ni))).collect();
    let labels_idx: Vec<usize> = edges.iter().map(|_| rng.gen_range(0..2)).collect();
    let targets = one_hot(&labels_idx, 2);
    let (alpha, beta, eta) = (
        rng.gen_range(0.1..1.0),
        rng.gen_range(0.1..1.0),
        rng.gen_range(0.0..0.5),
    );
    let temperature = rng.gen_range(0.5..1.5);
    let fusion = store.add("fusion", Tensor::uniform(1, 2, 1.0, &mut rng));
    let z_main = Tensor::uniform(nu, d, 1.0, &mut rng);
    let z_sub = Tensor::uniform(nu, d, 1.0, &mut rng);
    let mask: Vec<bool> = (0..nu).map(|_| rng.gen_bool(0.6)).collect();

    let mut ids = stack.params();
    ids.extend(head.params());
    ids.push(fusion);
    gradient_check(&mut store, &ids, &|s| {
        let out = stack.forward(s, &views, temperature, CrossLossSign::Attract)?;
        let (u, i) = (out.roles[0], out.roles[1]);
        let probs = head.forward(s, u, i, &edges)?;
        let y = s.tape.constant(targets.clone())?;
        let task = main_loss(s, probs, y, u, i, eta)?;
        let contrast = s.tape.add(out.same_loss, out.cross_loss)?;
        let contrast = s.tape.scale(contrast, alpha)?;
        let task = s.tape.scale(task, beta)?;
        // Fusion stage: both representations enter as constants.
        let fused = fuse_on_tape(s, &z_main, &z_sub, &mask, fusion)?;
        let fused_probs = head.forward(s, fused, i, &edges)?;
        let val = cross_entropy(s, fused_probs, y)?;
        s.tape.add_all(&[contrast, task, val])
    })
}

/// Every checked operation with its instance generator.
pub const GRADIENT_CASES: &[(&str, Instance)] = &[
    ("gcn layer", gcn_layer),
    ("same-encoder contrastive loss", same_encoder),
    ("cross-encoder contrastive loss", cross_encoder),
    ("augmentation attention", augmentation_attention),
    ("label attention", label_attention),
    ("projection head", projection),
    ("prediction head", prediction_head),
    ("main loss", main_objective),
    ("subtask loss", subtask_objective),
    ("total loss", total_objective),
];

/// Runs `instances` seeded checks per case; returns `(name, passed, worst)`.
pub fn gradient_suite(instances: u64) -> Vec<(&'static str, u64, f64)> {
    GRADIENT_CASES
        .iter()
        .map(|&(name, case)| {
            let mut passed = 0;
            let mut worst = 0.0f64;
            for seed in 0..instances {
                match case(1000 + seed) {
                    Ok(w) => {
                        worst = worst.max(w);
                        if w <= 1.0 {
                            passed += 1;
                        }
                    }
                    Err(e) => {
                        eprintln!("{name} instance {seed}: {e}");
                        worst = f64::INFINITY;
                    }
                }
            }
            (name, passed, worst)
        })
        .collect()
}

/// Random `user item rating` text on a small node space, with duplicate
/// pairs likely.
pub fn random_edge_text(rng: &mut ChaCha8Rng) -> String {
    let users = rng.gen_range(3..12);
    let items = rng.gen_range(3..12);
    let lines = rng.gen_range(0..users * items + 20);
    let mut text = String::new();
    for _ in 0..lines {
        let r = rng.gen_range(1..=5);
        text.push_str(&format!(
            "u{}\ti{}\t{r}\n",
            rng.gen_range(0..users),
            rng.gen_range(0..items)
        ));
    }
    text
}

/// Independent k-core oracle: removes one low-degree node at a time.
fn peel(mut edges: Vec<(String, String, EdgeLabel)>) -> Vec<(String, String, EdgeLabel)> {
    use std::collections::HashMap;
    loop {
        let mut du: HashMap<&str, usize> = HashMap::new();
        let mut di: HashMap<&str, usize> = HashMap::new();
        for (u, i, _) in &edges {
            *du.entry(u).or_default() += 1;
            *di.entry(i).or_default() += 1;
        }
        let weak_user = du.iter().find(|(_, &d)| d < MIN_DEGREE).map(|(u, _)| u.to_string());
        let weak_item = di.iter().find(|(_, &d)| d < MIN_DEGREE).map(|(i, _)| i.to_string());
        match (weak_user, weak_item) {
            (Some(u), _) => edges.retain(|e| e.0 != u),
            (None, Some(i)) => edges.retain(|e| e.1 != i),
            (None, None) => return edges,
        }
    }
}

fn named_edges(g: &BipartiteGraph) -> Vec<(String, String, EdgeLabel)> {
    let mut v: Vec<_> = g
        .edges()
        .iter()
        .map(|e| (g.user_id(e.user).to_string(), g.item_id(e.item).to_string(), e.label))
        .collect();
    v.sort();
    v
}

/// Checks the data-pipeline invariants on one edge list: the degree filter
/// reaches the k-core fixpoint, every split partitions each user's edges,
/// the label partition reassembles the graph, and the normalized adjacency
/// reconstructs the unnormalized one.
pub fn check_pipeline(text: &str, mode: LabelMode, seed: u64) -> std::result::Result<(), String> {
    let path = Path::new("random.tsv");
    let graph = match parse_edge_list(text, path, mode) {
        Ok(g) => g,
        Err(Error::Data(_)) => {
            // Nothing survives the filter; the oracle must agree.
            return if peel(raw_edges(text, mode)).is_empty() {
                Ok(())
            } else {
                Err("ingest rejected a graph with a nonempty core".into())
            };
        }
        Err(e) => return Err(e.to_string()),
    };

    // Degree filter: minimum degree, oracle agreement, fixpoint on re-ingest.
    if graph
        .user_degrees()
        .iter()
        .chain(&graph.item_degrees())
        .any(|&d| d < MIN_DEGREE)
    {
        return Err("node below minimum degree after ingest".into());
    }
    let mut oracle = peel(raw_edges(text, mode));
    oracle.sort();
    let got = named_edges(&graph);
    if got != oracle {
        return Err(format!("filter kept {} edges, oracle {}", got.len(), oracle.len()));
    }
    let rewritten: String = graph
        .edges()
        .iter()
        .map(|e| {
            format!(
                "{}\t{}\t{}\n",
                graph.user_id(e.user),
                graph.item_id(e.item),
                e.label.representative_rating()
            )
        })
        .collect();
    let again = parse_edge_list(&rewritten, path, mode).map_err(|e| e.to_string())?;
    if named_edges(&again) != got {
        return Err("re-ingesting the filtered graph changed it".into());
    }

    // Split: disjoint parts whose union is the edge set, with per-user counts.
    let parts = split(&graph, seed).map_err(|e| e.to_string())?;
    let mut union: Vec<Edge> = [&parts.train, &parts.validation, &parts.test]
        .iter()
        .flat_map(|p| p.edges().iter().copied())
        .collect();
    union.sort_by_key(|e| (e.user, e.item));
    let mut all = graph.edges().to_vec();
    all.sort_by_key(|e| (e.user, e.item));
    if union != all {
        return Err("split parts do not partition the edge set".into());
    }
    let degrees = graph.user_degrees();
    let per_user = |g: &BipartiteGraph| g.user_degrees();
    let (tr, va, te) = (
        per_user(&parts.train),
        per_user(&parts.validation),
        per_user(&parts.test),
    );
    for u in 0..graph.user_count() {
        if (tr[u], va[u], te[u]) != split_counts(degrees[u]) {
            return Err(format!("user {u} split {:?}", (tr[u], va[u], te[u])));
        }
    }

    // Label partition: single-label parts whose union is the graph.
    let parts = partition_by_label(&graph);
    let mut union: Vec<Edge> = Vec::new();
    for (label, sub) in &parts {
        if sub.edges().iter().any(|e| e.label != *label) || sub.node_count() != graph.node_count() {
            return Err(format!("label part {label} is malformed"));
        }
        union.extend_from_slice(sub.edges());
    }
    union.sort_by_key(|e| (e.user, e.item));
    if union != all {
        return Err("label parts do not reassemble the graph".into());
    }

    // Normalized adjacency: diagonal gives 1/(deg+1), off-diagonal scaled back
    // gives the 0/1 block adjacency.
    let dense = normalize_adjacency(&graph).to_dense();
    let n = graph.node_count();
    let users = graph.user_count();
    let mut expected = vec![vec![0.0; n]; n];
    for e in graph.edges() {
        expected[e.user][users + e.item] = 1.0;
        expected[users + e.item][e.user] = 1.0;
    }
    let deg: Vec<f64> = graph
        .user_degrees()
        .iter()
        .chain(&graph.item_degrees())
        .map(|&d| d as f64 + 1.0)
        .collect();
    for a in 0..n {
        if (dense.get(a, a) * deg[a] - 1.0).abs() > 1e-12 {
            return Err(format!("diagonal {a} is {}", dense.get(a, a)));
        }
        for b in 0..n {
            if a == b {
                continue;
            }
            let recovered = dense.get(a, b) * (deg[a] * deg[b]).sqrt();
            if (recovered - expected[a][b]).abs() > 1e-12 {
                return Err(format!("entry ({a}, {b}) reconstructs to {recovered}"));
            }
        }
    }
    Ok(())
}

/// Bucketed, last-write-wins edges of `text`, before degree filtering.
fn raw_edges(text: &str, mode: LabelMode) -> Vec<(String, String, EdgeLabel)> {
    use std::collections::HashMap;
    let mut last: HashMap<(String, String), Option<EdgeLabel>> = HashMap::new();
    for line in text.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        let label = mode.label_of_rating(f[2].parse().unwrap());
        last.insert((f[0].to_string(), f[1].to_string()), label);
    }
    last.into_iter()
        .filter_map(|((u, i), l)| l.map(|l| (u, i, l)))
        .collect()
}
