//! The staged training driver: main task, hard-sample subtask, fusion and the
//! validation stage, then evaluation on the test split.

use crate::aggregation::ProjectionHead;
use crate::config::{AugmentMode, TrainConfig, Variant};
use crate::encoders::LabelView;
use crate::error::{Error, Result};
use crate::graph::{
    augment, normalize_adjacency, partition_by_label, split, AugmentKind, BipartiteGraph, EdgeLabel, SplitGraphs,
};
use crate::link_prediction::{cross_entropy, evaluate, main_loss, one_hot, predict_edges, Metrics, PredictionHead};
use crate::model::{LabelStack, StackSpec, StackViews};
use crate::rng::{stream, Stream};
use crate::subtask::{
    build_homogeneous_graph, edge_entropy, mask_extract, mask_indices, select_hard, subtask_loss, HardSampleSet,
    HomogeneousGraph, Side,
};
use crate::tensor::{AdamState, ParamId, ParamStore, Session, Tensor, Var};

/// Bound of the uniform initialization of the main task's node table.
pub const INIT_BOUND: f64 = 1.0;

/// Loss terms of one epoch. Stages without contrastive terms leave them zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochLoss {
    pub same: f64,
    pub cross: f64,
    pub task: f64,
    pub total: f64,
}

/// The components of the overall objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub main_same: f64,
    pub main_cross: f64,
    pub main_task: f64,
    pub sub_same: f64,
    pub sub_cross: f64,
    pub sub_task: f64,
    pub validation: f64,
}

/// `α(L_Mp + L_Mc) + βL_M + μ(L_Sp + L_Sc) + γL_S + L_v`.
pub fn total_loss(c: &LossComponents, config: &TrainConfig) -> Result<f64> {
    for (stage, v) in [
        ("main", c.main_same),
        ("main", c.main_cross),
        ("main", c.main_task),
        ("subtask", c.sub_same),
        ("subtask", c.sub_cross),
        ("subtask", c.sub_task),
        ("validation", c.validation),
    ] {
        if !v.is_finite() {
            return Err(Error::Divergence {
                stage,
                epoch: 0,
                detail: format!("loss component {v} in the overall objective"),
            });
        }
    }
    Ok(config.alpha * (c.main_same + c.main_cross)
        + config.beta * c.main_task
        + config.mu * (c.sub_same + c.sub_cross)
        + config.gamma * c.sub_task
        + c.validation)
}

/// `(user, item)` pairs of every edge.
pub fn edge_pairs(graph: &BipartiteGraph) -> Vec<(usize, usize)> {
    graph.edges().iter().map(|e| (e.user, e.item)).collect()
}

fn view_kinds(mode: AugmentMode) -> [AugmentKind; 2] {
    match mode {
        AugmentMode::Both => [AugmentKind::Remove, AugmentKind::Add],
        AugmentMode::Remove => [AugmentKind::Remove, AugmentKind::Remove],
        AugmentMode::Add => [AugmentKind::Add, AugmentKind::Add],
    }
}

/// The two augmented views of the training graph.
pub fn augmented_views(train: &BipartiteGraph, config: &TrainConfig, seed: u64) -> Result<[BipartiteGraph; 2]> {
    let [k0, k1] = view_kinds(config.augment_mode);
    Ok([
        augment(train, k0, config.p_augment, &mut stream(seed, Stream::Augment, 0))?,
        augment(train, k1, config.p_augment, &mut stream(seed, Stream::Augment, 1))?,
    ])
}

/// Per-label adjacency pairs of two bipartite views.
pub fn bipartite_stack_views(view_t: &BipartiteGraph, view_t2: &BipartiteGraph) -> StackViews {
    let (pa, pb) = (partition_by_label(view_t), partition_by_label(view_t2));
    let mut per_label = Vec::new();
    let mut active = Vec::new();
    for &label in view_t.mode().labels() {
        let (a, b) = (&pa[&label], &pb[&label]);
        active.push(a.edge_count() + b.edge_count() > 0);
        per_label.push((
            LabelView {
                label,
                adjacency: normalize_adjacency(a),
            },
            LabelView {
                label,
                adjacency: normalize_adjacency(b),
            },
        ));
    }
    StackViews { per_label, active }
}

/// Per-label adjacency pairs of two homogeneous views.
pub fn homogeneous_stack_views(view_t: &HomogeneousGraph, view_t2: &HomogeneousGraph) -> StackViews {
    let mut per_label = Vec::new();
    let mut active = Vec::new();
    for &label in view_t.mode.labels() {
        let has = |g: &HomogeneousGraph| g.edges.iter().any(|e| e.label == label);
        active.push(has(view_t) || has(view_t2));
        per_label.push((
            LabelView {
                label,
                adjacency: view_t.label_adjacency(label),
            },
            LabelView {
                label,
                adjacency: view_t2.label_adjacency(label),
            },
        ));
    }
    StackViews { per_label, active }
}

fn check_finite(stage: &'static str, epoch: usize, loss: &EpochLoss) -> Result<()> {
    if [loss.same, loss.cross, loss.task, loss.total]
        .iter()
        .all(|v| v.is_finite())
    {
        Ok(())
    } else {
        Err(Error::Divergence {
            stage,
            epoch,
            detail: format!("loss {:?}", loss),
        })
    }
}

fn in_stage(stage: &'static str, epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Divergence {
            stage,
            epoch,
            detail: format!("non-finite value from {op}"),
        },
        other => other,
    }
}

/// Runs `epochs` optimizer steps of the loss built by `forward`, which returns
/// the scalar to minimize and its reported parts.
fn optimize<F>(
    store: &mut ParamStore,
    config: &TrainConfig,
    trainable: &[ParamId],
    stage: &'static str,
    epochs: usize,
    mut forward: F,
) -> Result<Vec<EpochLoss>>
where
    F: FnMut(&mut Session) -> Result<(Var, EpochLoss)>,
{
    let mut adam = AdamState::new(config.adam(), store, trainable);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (tape, grads, loss) = {
            let mut s = Session::with_trainable(store, trainable);
            let (l, parts) = forward(&mut s).map_err(in_stage(stage, epoch))?;
            check_finite(stage, epoch, &parts)?;
            let (tape, grads) = s.backward(l).map_err(in_stage(stage, epoch))?;
            (tape, grads, parts)
        };
        store.accumulate(&tape, &grads);
        adam.step(store).map_err(in_stage(stage, epoch))?;
        log::debug!("{stage} epoch {epoch}: total {:.6}", loss.total);
        losses.push(loss);
    }
    Ok(losses)
}

/// Trained main-task state.
#[derive(Clone, Debug)]
pub struct MainTask {
    pub stack: LabelStack,
    pub head: PredictionHead,
    pub z_user: Tensor,
    pub z_item: Tensor,
    /// Class probabilities of every training edge, in edge order.
    pub train_probs: Tensor,
    pub losses: Vec<EpochLoss>,
    /// Pairwise similarity evaluations of one forward pass.
    pub pair_evaluations: u64,
}

fn stack_spec(config: &TrainConfig, labels: &[EdgeLabel], roles: Vec<std::ops::Range<usize>>) -> StackSpec {
    StackSpec {
        labels: labels.to_vec(),
        roles,
        dim: config.dim,
        layers: config.layers,
        activation: config.activation,
        aggregation: config.aggregation,
        per_label_h0: config.per_label_h0,
    }
}

/// Main task over the training graph: `epochs` Adam steps on
/// `α(L_Mp + L_Mc) + βL_M`, then a final forward pass for the representations
/// and training-edge predictions.
pub fn run_main_task(
    store: &mut ParamStore,
    train: &BipartiteGraph,
    config: &TrainConfig,
    seed: u64,
    epochs: usize,
) -> Result<MainTask> {
    let (nu, ni) = (train.user_count(), train.item_count());
    let mode = train.mode();
    let mut rng = stream(seed, Stream::Init, 0);
    let h0 = Tensor::uniform(nu + ni, config.dim, INIT_BOUND, &mut rng);
    let stack = LabelStack::new(
        store,
        "main",
        stack_spec(config, mode.labels(), vec![0..nu, nu..nu + ni]),
        h0,
        &mut rng,
    )?;
    let head = PredictionHead::new(store, "main", config.dim, mode.class_count(), &mut rng);
    let [g_t, g_t2] = augmented_views(train, config, seed)?;
    let views = bipartite_stack_views(&g_t, &g_t2);
    let edges = edge_pairs(train);
    let targets = one_hot(&train.class_labels(), mode.class_count());
    let (temperature, sign) = (config.temperature, config.cross_loss_sign);

    let mut trainable = stack.params();
    trainable.extend(head.params());
    let losses = optimize(store, config, &trainable, "main", epochs, |s| {
        let out = stack.forward(s, &views, temperature, sign)?;
        let (zu, zi) = (out.roles[0], out.roles[1]);
        let probs = head.forward(s, zu, zi, &edges)?;
        let y = s.tape.constant(targets.clone())?;
        let task = main_loss(s, probs, y, zu, zi, config.eta)?;
        let contrastive = s.tape.add(out.same_loss, out.cross_loss)?;
        let a = s.tape.scale(contrastive, config.alpha)?;
        let b = s.tape.scale(task, config.beta)?;
        let total = s.tape.add(a, b)?;
        let v = |s: &Session, x: Var| s.tape.value(x).item();
        let parts = EpochLoss {
            same: v(s, out.same_loss),
            cross: v(s, out.cross_loss),
            task: v(s, task),
            total: v(s, total),
        };
        Ok((total, parts))
    })?;

    let mut s = Session::with_trainable(store, &[]);
    let out = stack.forward(&mut s, &views, temperature, sign)?;
    let probs = head.forward(&mut s, out.roles[0], out.roles[1], &edges)?;
    let z_user = s.tape.value(out.roles[0]).clone();
    let z_item = s.tape.value(out.roles[1]).clone();
    let train_probs = s.tape.value(probs).clone();
    let pair_evaluations = s.tape.pair_evaluations();
    if !(z_user.is_finite() && z_item.is_finite() && train_probs.is_finite()) {
        return Err(Error::Divergence {
            stage: "main",
            epoch: epochs,
            detail: "non-finite final representations".into(),
        });
    }
    Ok(MainTask {
        stack,
        head,
        z_user,
        z_item,
        train_probs,
        losses,
        pair_evaluations,
    })
}

/// Subtask representations, full-shape with zero rows outside the masks.
#[derive(Clone, Debug)]
pub struct SubtaskResult {
    pub z_user: Tensor,
    pub z_item: Tensor,
    pub losses: Vec<EpochLoss>,
    pub pair_evaluations: u64,
    /// Whether the subtask fell back to the masked main representations
    /// because a side had fewer than two masked nodes.
    pub skipped: bool,
}

fn augmented_homogeneous(
    g: &HomogeneousGraph,
    config: &TrainConfig,
    seed: u64,
    first_stream: u32,
) -> Result<[HomogeneousGraph; 2]> {
    let [k0, k1] = view_kinds(config.augment_mode);
    Ok([
        g.augment(k0, config.p_augment, &mut stream(seed, Stream::Augment, first_stream))?,
        g.augment(
            k1,
            config.p_augment,
            &mut stream(seed, Stream::Augment, first_stream + 1),
        )?,
    ])
}

fn compact_rows(z: &Tensor, rows: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(rows.len(), z.cols());
    for (k, &r) in rows.iter().enumerate() {
        out.row_mut(k).copy_from_slice(z.row(r));
    }
    out
}

fn scatter(compact: &Tensor, rows: &[usize], total: usize) -> Tensor {
    let mut out = Tensor::zeros(total, compact.cols());
    for (k, &r) in rows.iter().enumerate() {
        out.row_mut(r).copy_from_slice(compact.row(k));
    }
    out
}

/// Subtask over the hard samples: homogeneous user and item graphs from the
/// masked main representations, fresh per-label stacks seeded with those
/// representations, and `epochs` Adam steps on `μ(L_Sp + L_Sc) + γL_S`.
#[allow(clippy::too_many_arguments)]
pub fn run_subtask(
    store: &mut ParamStore,
    train: &BipartiteGraph,
    hard: &HardSampleSet,
    z_main_user: &Tensor,
    z_main_item: &Tensor,
    config: &TrainConfig,
    seed: u64,
    epochs: usize,
) -> Result<SubtaskResult> {
    let masked_user = mask_extract(z_main_user, &hard.user_mask)?;
    let masked_item = mask_extract(z_main_item, &hard.item_mask)?;
    let fallback = |pairs| SubtaskResult {
        z_user: masked_user.clone(),
        z_item: masked_item.clone(),
        losses: Vec::new(),
        pair_evaluations: pairs,
        skipped: true,
    };
    let mode = train.mode();
    let mut rng = stream(seed, Stream::Subtask, 0);
    let mlp_user = ProjectionHead::new(store, "sub.users.graph", config.dim, &mut rng);
    let mlp_item = ProjectionHead::new(store, "sub.items.graph", config.dim, &mut rng);
    let g_user = build_homogeneous_graph(
        store,
        &mlp_user,
        &masked_user,
        &hard.user_mask,
        config.k_top,
        mode,
        Side::Users,
    )?;
    let g_item = build_homogeneous_graph(
        store,
        &mlp_item,
        &masked_item,
        &hard.item_mask,
        config.k_top,
        mode,
        Side::Items,
    )?;
    let (Some(g_user), Some(g_item)) = (g_user, g_item) else {
        return Ok(fallback(0));
    };
    let [u_t, u_t2] = augmented_homogeneous(&g_user, config, seed, 2)?;
    let [i_t, i_t2] = augmented_homogeneous(&g_item, config, seed, 4)?;
    let user_views = homogeneous_stack_views(&u_t, &u_t2);
    let item_views = homogeneous_stack_views(&i_t, &i_t2);

    let (nu, ni) = (g_user.node_count(), g_item.node_count());
    let zm_user = compact_rows(z_main_user, &g_user.nodes);
    let zm_item = compact_rows(z_main_item, &g_item.nodes);
    let user_stack = LabelStack::new(
        store,
        "sub.users",
        stack_spec(config, mode.labels(), std::iter::once(0..nu).collect()),
        zm_user.clone(),
        &mut rng,
    )?;
    let item_stack = LabelStack::new(
        store,
        "sub.items",
        stack_spec(config, mode.labels(), std::iter::once(0..ni).collect()),
        zm_item.clone(),
        &mut rng,
    )?;
    let head = PredictionHead::new(store, "sub", config.dim, mode.class_count(), &mut rng);

    let mut user_pos = vec![usize::MAX; train.user_count()];
    for (k, &u) in g_user.nodes.iter().enumerate() {
        user_pos[u] = k;
    }
    let mut item_pos = vec![usize::MAX; train.item_count()];
    for (k, &i) in g_item.nodes.iter().enumerate() {
        item_pos[i] = k;
    }
    let classes = train.class_labels();
    let hard_edges: Vec<(usize, usize)> = hard
        .edges
        .iter()
        .map(|&k| {
            let e = train.edges()[k];
            (user_pos[e.user], item_pos[e.item])
        })
        .collect();
    let hard_targets = one_hot(
        &hard.edges.iter().map(|&k| classes[k]).collect::<Vec<_>>(),
        mode.class_count(),
    );
    let (temperature, sign) = (config.temperature, config.cross_loss_sign);

    let mut trainable = user_stack.params();
    trainable.extend(item_stack.params());
    trainable.extend(head.params());
    let losses = optimize(store, config, &trainable, "subtask", epochs, |s| {
        let ou = user_stack.forward(s, &user_views, temperature, sign)?;
        let oi = item_stack.forward(s, &item_views, temperature, sign)?;
        let (zu, zi) = (ou.roles[0], oi.roles[0]);
        let probs = head.forward(s, zu, zi, &hard_edges)?;
        let y = s.tape.constant(hard_targets.clone())?;
        let mu_ref = s.tape.constant(zm_user.clone())?;
        let mi_ref = s.tape.constant(zm_item.clone())?;
        let task = subtask_loss(s, probs, y, zu, zi, mu_ref, mi_ref)?;
        let same = s.tape.add(ou.same_loss, oi.same_loss)?;
        let cross = s.tape.add(ou.cross_loss, oi.cross_loss)?;
        let contrastive = s.tape.add(same, cross)?;
        let a = s.tape.scale(contrastive, config.mu)?;
        let b = s.tape.scale(task, config.gamma)?;
        let total = s.tape.add(a, b)?;
        let v = |s: &Session, x: Var| s.tape.value(x).item();
        let parts = EpochLoss {
            same: v(s, same),
            cross: v(s, cross),
            task: v(s, task),
            total: v(s, total),
        };
        Ok((total, parts))
    })?;

    let mut s = Session::with_trainable(store, &[]);
    let ou = user_stack.forward(&mut s, &user_views, temperature, sign)?;
    let oi = item_stack.forward(&mut s, &item_views, temperature, sign)?;
    let pair_evaluations = s.tape.pair_evaluations();
    if epochs == 0 {
        return Ok(SubtaskResult {
            skipped: false,
            ..fallback(pair_evaluations)
        });
    }
    let z_user = scatter(s.tape.value(ou.roles[0]), &g_user.nodes, train.user_count());
    let z_item = scatter(s.tape.value(oi.roles[0]), &g_item.nodes, train.item_count());
    if !(z_user.is_finite() && z_item.is_finite()) {
        return Err(Error::Divergence {
            stage: "subtask",
            epoch: epochs,
            detail: "non-finite final representations".into(),
        });
    }
    Ok(SubtaskResult {
        z_user,
        z_item,
        losses,
        pair_evaluations,
        skipped: false,
    })
}

/// Learnable per-role fusion scores; `softmax` of each `1 × 2` score row gives
/// `(W^S, W^M)`.
#[derive(Clone, Copy, Debug)]
pub struct FusionWeights {
    pub user: ParamId,
    pub item: ParamId,
}

impl FusionWeights {
    /// Zero scores, so both roles start at `W^S = W^M = 0.5`.
    pub fn new(store: &mut ParamStore) -> Self {
        FusionWeights {
            user: store.add("fusion.user", Tensor::zeros(1, 2)),
            item: store.add("fusion.item", Tensor::zeros(1, 2)),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.user, self.item]
    }

    /// `(W^S, W^M)` of one role.
    pub fn weights(store: &ParamStore, id: ParamId) -> (f64, f64) {
        let w = store.value(id).row_softmax();
        (w.get(0, 0), w.get(0, 1))
    }
}

/// Masked rows become `W^S·Z^S + W^M·Z^M`; unmasked rows are copied from
/// `Z^M` unchanged.
pub fn fuse(z_main: &Tensor, z_sub: &Tensor, mask: &[bool], w_sub: f64, w_main: f64) -> Result<Tensor> {
    if z_main.shape() != z_sub.shape() || mask.len() != z_main.rows() {
        return Err(Error::dim(
            "fuse",
            format!("{:?}, {:?}, mask of {}", z_main.shape(), z_sub.shape(), mask.len()),
        ));
    }
    let mut out = z_main.clone();
    for r in mask_indices(mask) {
        for (o, &s) in out.row_mut(r).iter_mut().zip(z_sub.row(r)) {
            *o = w_sub * s + w_main * *o;
        }
    }
    Ok(out)
}

/// Differentiable fusion with weights from the score parameter `w`:
/// `Z^M + m ⊙ (W^S·Z^S + W^M·Z^M − Z^M)`.
pub fn fuse_on_tape(s: &mut Session, z_main: &Tensor, z_sub: &Tensor, mask: &[bool], w: ParamId) -> Result<Var> {
    let scores = s.param(w);
    let weights = s.tape.row_softmax(scores)?;
    let ws = s.tape.slice_columns(weights, 0, 1)?;
    let wm = s.tape.slice_columns(weights, 1, 2)?;
    let zm = s.tape.constant(z_main.clone())?;
    let zs = s.tape.constant(z_sub.clone())?;
    let m = s.tape.constant(Tensor::column(
        &mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
    ))?;
    let a = s.tape.mul(zs, ws)?;
    let b = s.tape.mul(zm, wm)?;
    let mixed = s.tape.add(a, b)?;
    let delta = s.tape.sub(mixed, zm)?;
    let delta = s.tape.mul(delta, m)?;
    s.tape.add(zm, delta)
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    /// Fused representations used for prediction.
    pub z_user: Tensor,
    pub z_item: Tensor,
    /// Prediction head `[w1, b1, w2, b2]` after the validation stage.
    pub head: [Tensor; 4],
    pub main_losses: Vec<EpochLoss>,
    pub sub_losses: Vec<EpochLoss>,
    pub val_losses: Vec<EpochLoss>,
    pub components: LossComponents,
    pub total_loss: f64,
    pub hard: HardSampleSet,
    pub main_pair_evaluations: u64,
    pub sub_pair_evaluations: u64,
    /// `(W^S, W^M)` for users and items.
    pub fusion_user: (f64, f64),
    pub fusion_item: (f64, f64),
    pub subtask_skipped: bool,
    pub split_sizes: (usize, usize, usize),
}

fn head_tensors(store: &ParamStore, head: &PredictionHead) -> [Tensor; 4] {
    let ids = head.params();
    [0, 1, 2, 3].map(|k| store.value(ids[k]).clone())
}

/// Split, main task, hard-sample mining, subtask, validation stage and test
/// evaluation, as selected by the configured variant.
pub fn run_framework(graph: &BipartiteGraph, config: &TrainConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    if graph.mode() != config.label_mode {
        return Err(Error::Config(format!(
            "graph labels are {} but label_mode is {}",
            graph.mode().name(),
            config.label_mode.name()
        )));
    }
    let parts = split(graph, seed)?;
    run_on_split(&parts, config, seed)
}

/// [`run_framework`] on an existing split.
pub fn run_on_split(parts: &SplitGraphs, config: &TrainConfig, seed: u64) -> Result<RunResult> {
    let SplitGraphs {
        train,
        validation,
        test,
    } = parts;
    if train.edge_count() == 0 {
        return Err(Error::Data("training split has no edges".into()));
    }
    let variant = config.variant;
    let epochs_main = if variant == Variant::NoMain {
        0
    } else {
        config.epochs_main
    };
    let mut store = ParamStore::new();
    let main = run_main_task(&mut store, train, config, seed, epochs_main)?;
    log::info!(
        "seed {seed}: main task done after {epochs_main} epochs, final loss {:.4}",
        main.losses.last().map_or(f64::NAN, |l| l.total)
    );

    let entropies = edge_entropy(&main.train_probs, &train.class_labels())?;
    let hard = select_hard(&entropies, config.epsilon, train)?;
    log::info!(
        "seed {seed}: {} hard edges, {} users and {} items masked",
        hard.edges.len(),
        hard.masked_users(),
        hard.masked_items()
    );

    let use_subtask = variant != Variant::NoSubtask;
    let sub = if use_subtask {
        run_subtask(
            &mut store,
            train,
            &hard,
            &main.z_user,
            &main.z_item,
            config,
            seed,
            config.epochs_sub,
        )?
    } else {
        SubtaskResult {
            z_user: Tensor::zeros(main.z_user.rows(), main.z_user.cols()),
            z_item: Tensor::zeros(main.z_item.rows(), main.z_item.cols()),
            losses: Vec::new(),
            pair_evaluations: 0,
            skipped: true,
        }
    };
    let (user_mask, item_mask) = if use_subtask {
        (hard.user_mask.clone(), hard.item_mask.clone())
    } else {
        (vec![false; train.user_count()], vec![false; train.item_count()])
    };

    let fusion = FusionWeights::new(&mut store);
    let val_edges = edge_pairs(validation);
    let val_targets = one_hot(&validation.class_labels(), train.mode().class_count());
    let epochs_val = if matches!(variant, Variant::Full | Variant::NoMain) && !val_edges.is_empty() {
        config.epochs_val
    } else {
        0
    };
    let mut trainable = fusion.params();
    trainable.extend(main.head.params());
    let head = &main.head;
    let val_losses = optimize(&mut store, config, &trainable, "validation", epochs_val, |s| {
        let zu = fuse_on_tape(s, &main.z_user, &sub.z_user, &user_mask, fusion.user)?;
        let zi = fuse_on_tape(s, &main.z_item, &sub.z_item, &item_mask, fusion.item)?;
        let probs = head.forward(s, zu, zi, &val_edges)?;
        let y = s.tape.constant(val_targets.clone())?;
        let l = cross_entropy(s, probs, y)?;
        let task = s.tape.value(l).item();
        Ok((
            l,
            EpochLoss {
                task,
                total: task,
                ..EpochLoss::default()
            },
        ))
    })?;

    let fusion_user = FusionWeights::weights(&store, fusion.user);
    let fusion_item = FusionWeights::weights(&store, fusion.item);
    let z_user = fuse(&main.z_user, &sub.z_user, &user_mask, fusion_user.0, fusion_user.1)?;
    let z_item = fuse(&main.z_item, &sub.z_item, &item_mask, fusion_item.0, fusion_item.1)?;

    let validation_loss = if val_edges.is_empty() {
        0.0
    } else {
        let p = predict_edges(&store, head, &z_user, &z_item, &val_edges)?;
        -p.data()
            .iter()
            .zip(val_targets.data())
            .map(|(&p, &y)| y * p.max(crate::subtask::PROB_CLAMP).ln())
            .sum::<f64>()
    };
    let last = |l: &[EpochLoss]| l.last().copied().unwrap_or_default();
    let (m, s) = (last(&main.losses), last(&sub.losses));
    let components = LossComponents {
        main_same: m.same,
        main_cross: m.cross,
        main_task: m.task,
        sub_same: s.same,
        sub_cross: s.cross,
        sub_task: s.task,
        validation: validation_loss,
    };
    let total = total_loss(&components, config)?;

    if test.edge_count() == 0 {
        return Err(Error::Data("test split has no edges".into()));
    }
    let test_probs = predict_edges(&store, head, &z_user, &z_item, &edge_pairs(test))?;
    let metrics = evaluate(&test_probs, &test.class_labels())?;
    log::info!("seed {seed}: {metrics}");

    Ok(RunResult {
        seed,
        metrics,
        z_user,
        z_item,
        head: head_tensors(&store, head),
        main_losses: main.losses,
        sub_losses: sub.losses,
        val_losses,
        components,
        total_loss: total,
        hard,
        main_pair_evaluations: main.pair_evaluations,
        sub_pair_evaluations: sub.pair_evaluations,
        fusion_user,
        fusion_item,
        subtask_skipped: sub.skipped,
        split_sizes: (train.edge_count(), validation.edge_count(), test.edge_count()),
    })
}

/// Predictions for `graph`'s edges from stored embeddings and head tensors.
pub fn predict_with(z_user: &Tensor, z_item: &Tensor, head: &[Tensor; 4], graph: &BipartiteGraph) -> Result<Tensor> {
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = head
        .iter()
        .zip(["w1", "b1", "w2", "b2"])
        .map(|(t, n)| store.add(n, t.clone()))
        .collect();
    let head = PredictionHead::from_params(ids[0], ids[1], ids[2], ids[3]);
    if head.class_count(&store) != graph.mode().class_count() {
        return Err(Error::Data(format!(
            "head predicts {} classes, data has {}",
            head.class_count(&store),
            graph.mode().class_count()
        )));
    }
    predict_edges(&store, &head, z_user, z_item, &edge_pairs(graph))
}
