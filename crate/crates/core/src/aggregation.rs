//! Merging of augmented views, projection heads and label-level aggregation.
//!
//! Embedding matrices hold one node per row, so affine maps are applied on the
//! right: `H·W + b`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

/// How several same-shape representations are combined into one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AggregationKind {
    /// Learned softmax weights from attention scores.
    #[default]
    Attention,
    /// A linear map over the column-wise concatenation of the inputs.
    Mlp,
    /// The plain average.
    Mean,
}

impl AggregationKind {
    pub fn name(self) -> &'static str {
        match self {
            AggregationKind::Attention => "attention",
            AggregationKind::Mlp => "mlp",
            AggregationKind::Mean => "mean",
        }
    }
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(AggregationKind::Attention),
            "mlp" => Ok(AggregationKind::Mlp),
            "mean" => Ok(AggregationKind::Mean),
            _ => Err(Error::Config(format!("unknown aggregation '{s}'"))),
        }
    }
}

/// Linear combination `[H_1 ‖ … ‖ H_k]·W + b`, initialized to the mean.
#[derive(Clone, Debug)]
struct LinearCombiner {
    w: ParamId,
    b: ParamId,
}

impl LinearCombiner {
    fn new(store: &mut ParamStore, prefix: &str, inputs: usize, dim: usize) -> Self {
        let mut w = Tensor::zeros(inputs * dim, dim);
        for k in 0..inputs {
            for c in 0..dim {
                w.set(k * dim + c, c, 1.0 / inputs as f64);
            }
        }
        LinearCombiner {
            w: store.add(format!("{prefix}.mlp.w"), w),
            b: store.add(format!("{prefix}.mlp.b"), Tensor::zeros(1, dim)),
        }
    }

    fn apply(&self, s: &mut Session, inputs: &[Var]) -> Result<Var> {
        let x = s.tape.concat_columns(inputs)?;
        let w = s.param(self.w);
        let b = s.param(self.b);
        let y = s.tape.matmul(x, w)?;
        s.tape.add(y, b)
    }

    fn params(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

fn mean_of(s: &mut Session, inputs: &[Var]) -> Result<Var> {
    let sum = s.tape.add_all(inputs)?;
    s.tape.scale(sum, 1.0 / inputs.len() as f64)
}

/// Weighted sum `Σ_k weights[:, k] ⊙ inputs[k]`, broadcasting a 1-row or
/// n-row weight matrix across columns.
fn weighted_sum(s: &mut Session, weights: Var, inputs: &[Var]) -> Result<Var> {
    let mut terms = Vec::with_capacity(inputs.len());
    for (k, &h) in inputs.iter().enumerate() {
        let w = s.tape.slice_columns(weights, k, k + 1)?;
        terms.push(s.tape.mul(w, h)?);
    }
    s.tape.add_all(&terms)
}

#[derive(Clone, Debug)]
enum MergerParams {
    Attention {
        w: ParamId,
        b: ParamId,
        a_t: ParamId,
        a_t2: ParamId,
    },
    Mlp(LinearCombiner),
    Mean,
}

/// Combines the two augmented views of one label and role.
///
/// Attention form: each view gets the scalar score
/// `s_v = mean_n a_vᵀ·tanh(W·h_n + b)`, and `β = softmax(s_t, s_t')` weighs
/// the views.
#[derive(Clone, Debug)]
pub struct AugmentationMerger {
    params: MergerParams,
}

impl AugmentationMerger {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        kind: AggregationKind,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let params = match kind {
            AggregationKind::Attention => MergerParams::Attention {
                w: store.add(format!("{prefix}.merge.w"), Tensor::xavier_uniform(dim, dim, rng)),
                b: store.add(format!("{prefix}.merge.b"), Tensor::zeros(1, dim)),
                a_t: store.add(format!("{prefix}.merge.a_t"), Tensor::xavier_uniform(dim, 1, rng)),
                a_t2: store.add(format!("{prefix}.merge.a_t2"), Tensor::xavier_uniform(dim, 1, rng)),
            },
            AggregationKind::Mlp => MergerParams::Mlp(LinearCombiner::new(store, &format!("{prefix}.merge"), 2, dim)),
            AggregationKind::Mean => MergerParams::Mean,
        };
        AugmentationMerger { params }
    }

    /// An attention merger over existing parameters: `w` is `d × d`, `b` is
    /// `1 × d`, the view vectors are `d × 1`.
    pub fn attention(w: ParamId, b: ParamId, a_t: ParamId, a_t2: ParamId) -> Self {
        AugmentationMerger {
            params: MergerParams::Attention { w, b, a_t, a_t2 },
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        match &self.params {
            MergerParams::Attention { w, b, a_t, a_t2 } => vec![*w, *b, *a_t, *a_t2],
            MergerParams::Mlp(c) => c.params(),
            MergerParams::Mean => vec![],
        }
    }

    pub fn merge(&self, s: &mut Session, h_t: Var, h_t2: Var) -> Result<Var> {
        self.merge_with_weights(s, h_t, h_t2).map(|(h, _)| h)
    }

    /// The merged matrix and, for the attention and mean forms, the `1 × 2`
    /// view weights β.
    pub fn merge_with_weights(&self, s: &mut Session, h_t: Var, h_t2: Var) -> Result<(Var, Option<Var>)> {
        if s.tape.shape(h_t) != s.tape.shape(h_t2) {
            return Err(Error::dim(
                "merge_augmentations",
                format!("{:?} vs {:?}", s.tape.shape(h_t), s.tape.shape(h_t2)),
            ));
        }
        match &self.params {
            MergerParams::Attention { w, b, a_t, a_t2 } => {
                let (w, b) = (s.param(*w), s.param(*b));
                let mut scores = Vec::with_capacity(2);
                for (h, a) in [(h_t, *a_t), (h_t2, *a_t2)] {
                    let a = s.param(a);
                    let z = s.tape.matmul(h, w)?;
                    let z = s.tape.add(z, b)?;
                    let z = s.tape.tanh(z)?;
                    let per_node = s.tape.matmul(z, a)?;
                    scores.push(s.tape.mean_rows(per_node)?);
                }
                let scores = s.tape.concat_columns(&scores)?;
                let beta = s.tape.row_softmax(scores)?;
                Ok((weighted_sum(s, beta, &[h_t, h_t2])?, Some(beta)))
            }
            MergerParams::Mlp(c) => Ok((c.apply(s, &[h_t, h_t2])?, None)),
            MergerParams::Mean => {
                let beta = s.tape.constant(Tensor::full(1, 2, 0.5))?;
                Ok((mean_of(s, &[h_t, h_t2])?, Some(beta)))
            }
        }
    }
}

/// Two affine layers with a tanh between: `tanh(H·A1 + b1)·A2 + b2`.
#[derive(Clone, Debug)]
pub struct ProjectionHead {
    a1: ParamId,
    b1: ParamId,
    a2: ParamId,
    b2: ParamId,
}

impl ProjectionHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut R) -> Self {
        ProjectionHead {
            a1: store.add(format!("{prefix}.proj.a1"), Tensor::xavier_uniform(dim, dim, rng)),
            b1: store.add(format!("{prefix}.proj.b1"), Tensor::zeros(1, dim)),
            a2: store.add(format!("{prefix}.proj.a2"), Tensor::xavier_uniform(dim, dim, rng)),
            b2: store.add(format!("{prefix}.proj.b2"), Tensor::zeros(1, dim)),
        }
    }

    pub fn from_params(a1: ParamId, b1: ParamId, a2: ParamId, b2: ParamId) -> Self {
        ProjectionHead { a1, b1, a2, b2 }
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.a1, self.b1, self.a2, self.b2]
    }

    pub fn project(&self, s: &mut Session, h: Var) -> Result<Var> {
        let (a1, b1, a2, b2) = (s.param(self.a1), s.param(self.b1), s.param(self.a2), s.param(self.b2));
        let z = s.tape.matmul(h, a1)?;
        let z = s.tape.add(z, b1)?;
        let z = s.tape.tanh(z)?;
        let z = s.tape.matmul(z, a2)?;
        s.tape.add(z, b2)
    }

    /// Projection of a plain value, outside any training pass.
    pub fn apply(&self, store: &ParamStore, h: &Tensor) -> Result<Tensor> {
        let mut s = Session::with_trainable(store, &[]);
        let v = s.tape.constant(h.clone())?;
        let out = self.project(&mut s, v)?;
        Ok(s.tape.value(out).clone())
    }
}

#[derive(Clone, Debug)]
enum LabelParams {
    /// Query and key maps per label.
    Attention(Vec<(ParamId, ParamId)>),
    Mlp(LinearCombiner),
    Mean,
}

/// Blends per-label representations of one role into one matrix.
///
/// Attention form: per node `n`, label `t` scores
/// `(h_n W_Q^t)·(h_n W_K^t) / √d` and `α = softmax` over labels.
#[derive(Clone, Debug)]
pub struct LabelAggregator {
    params: LabelParams,
    dim: usize,
}

impl LabelAggregator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        kind: AggregationKind,
        labels: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let params = match kind {
            AggregationKind::Attention => LabelParams::Attention(
                (0..labels)
                    .map(|k| {
                        (
                            store.add(format!("{prefix}.attn.q{k}"), Tensor::xavier_uniform(dim, dim, rng)),
                            store.add(format!("{prefix}.attn.k{k}"), Tensor::xavier_uniform(dim, dim, rng)),
                        )
                    })
                    .collect(),
            ),
            AggregationKind::Mlp => {
                LabelParams::Mlp(LinearCombiner::new(store, &format!("{prefix}.labels"), labels, dim))
            }
            AggregationKind::Mean => LabelParams::Mean,
        };
        LabelAggregator { params, dim }
    }

    /// An attention aggregator over existing `(W_Q, W_K)` pairs, one per label.
    pub fn attention(query_keys: Vec<(ParamId, ParamId)>, dim: usize) -> Self {
        LabelAggregator {
            params: LabelParams::Attention(query_keys),
            dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        match &self.params {
            LabelParams::Attention(qk) => qk.iter().flat_map(|&(q, k)| [q, k]).collect(),
            LabelParams::Mlp(c) => c.params(),
            LabelParams::Mean => vec![],
        }
    }

    pub fn aggregate(&self, s: &mut Session, per_label: &[Var]) -> Result<Var> {
        self.aggregate_with_weights(s, per_label).map(|(z, _)| z)
    }

    /// The aggregate and, for the attention form, the `n × labels` weights α.
    pub fn aggregate_with_weights(&self, s: &mut Session, per_label: &[Var]) -> Result<(Var, Option<Var>)> {
        let first = *per_label
            .first()
            .ok_or_else(|| Error::Contract("label aggregation needs at least one input".into()))?;
        for &h in per_label {
            if s.tape.shape(h) != s.tape.shape(first) {
                return Err(Error::dim(
                    "attention_aggregate_labels",
                    format!("{:?} vs {:?}", s.tape.shape(h), s.tape.shape(first)),
                ));
            }
        }
        match &self.params {
            LabelParams::Attention(qk) => {
                if qk.len() != per_label.len() {
                    return Err(Error::Contract(format!(
                        "aggregator built for {} labels, given {}",
                        qk.len(),
                        per_label.len()
                    )));
                }
                let mut scores = Vec::with_capacity(qk.len());
                for (&h, &(q, k)) in per_label.iter().zip(qk) {
                    let (q, k) = (s.param(q), s.param(k));
                    let hq = s.tape.matmul(h, q)?;
                    let hk = s.tape.matmul(h, k)?;
                    let prod = s.tape.mul(hq, hk)?;
                    let score = s.tape.sum_columns(prod)?;
                    scores.push(s.tape.scale(score, 1.0 / (self.dim as f64).sqrt())?);
                }
                let scores = s.tape.concat_columns(&scores)?;
                let alpha = s.tape.row_softmax(scores)?;
                Ok((weighted_sum(s, alpha, per_label)?, Some(alpha)))
            }
            LabelParams::Mlp(c) => Ok((c.apply(s, per_label)?, None)),
            LabelParams::Mean => Ok((mean_of(s, per_label)?, None)),
        }
    }
}
