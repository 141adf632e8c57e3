//! Edge-label prediction head, main-task loss and classification metrics.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

/// `softmax(tanh([z_item ‖ z_user]·W1 + b1)·W2 + b2)`.
#[derive(Clone, Debug)]
pub struct PredictionHead {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl PredictionHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, dim: usize, classes: usize, rng: &mut R) -> Self {
        PredictionHead {
            w1: store.add(format!("{prefix}.head.w1"), Tensor::xavier_uniform(2 * dim, dim, rng)),
            b1: store.add(format!("{prefix}.head.b1"), Tensor::zeros(1, dim)),
            w2: store.add(format!("{prefix}.head.w2"), Tensor::xavier_uniform(dim, classes, rng)),
            b2: store.add(format!("{prefix}.head.b2"), Tensor::zeros(1, classes)),
        }
    }

    pub fn from_params(w1: ParamId, b1: ParamId, w2: ParamId, b2: ParamId) -> Self {
        PredictionHead { w1, b1, w2, b2 }
    }

    /// `[w1, b1, w2, b2]`.
    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }

    pub fn class_count(&self, store: &ParamStore) -> usize {
        store.value(self.w2).cols()
    }

    /// Class probabilities for `edges` given as `(user, item)` pairs, one row
    /// per edge in input order.
    pub fn forward(&self, s: &mut Session, z_user: Var, z_item: Var, edges: &[(usize, usize)]) -> Result<Var> {
        let (nu, du) = s.tape.shape(z_user);
        let (ni, di) = s.tape.shape(z_item);
        if du != di {
            return Err(Error::dim("predict_edges", format!("user dim {du} vs item dim {di}")));
        }
        if let Some(&(u, i)) = edges.iter().find(|&&(u, i)| u >= nu || i >= ni) {
            return Err(Error::Contract(format!(
                "edge ({u}, {i}) outside {nu} users x {ni} items"
            )));
        }
        let users: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let items: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let zi = s.tape.gather_rows(z_item, &items)?;
        let zu = s.tape.gather_rows(z_user, &users)?;
        let x = s.tape.concat_columns(&[zi, zu])?;
        let (w1, b1, w2, b2) = (s.param(self.w1), s.param(self.b1), s.param(self.w2), s.param(self.b2));
        let h = s.tape.matmul(x, w1)?;
        let h = s.tape.add(h, b1)?;
        let h = s.tape.tanh(h)?;
        let o = s.tape.matmul(h, w2)?;
        let o = s.tape.add(o, b2)?;
        s.tape.row_softmax(o)
    }
}

/// Class probabilities for `edges` from fixed embeddings, outside training.
pub fn predict_edges(
    store: &ParamStore,
    head: &PredictionHead,
    z_user: &Tensor,
    z_item: &Tensor,
    edges: &[(usize, usize)],
) -> Result<Tensor> {
    let mut s = Session::with_trainable(store, &[]);
    let u = s.tape.constant(z_user.clone())?;
    let i = s.tape.constant(z_item.clone())?;
    let p = head.forward(&mut s, u, i, edges)?;
    Ok(s.tape.value(p).clone())
}

/// One-hot rows for class indices.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(labels.len(), classes);
    for (r, &c) in labels.iter().enumerate() {
        t.set(r, c, 1.0);
    }
    t
}

/// Summed cross-entropy `-Σ_n y_n·log(ŷ_n)`.
pub fn cross_entropy(s: &mut Session, probs: Var, one_hot: Var) -> Result<Var> {
    let logp = s.tape.log(probs)?;
    let picked = s.tape.mul(one_hot, logp)?;
    let total = s.tape.sum(picked)?;
    s.tape.scale(total, -1.0)
}

/// `Σ_n ‖z_n − mean(z)‖²` over the rows of `z`.
pub fn readout_regularizer(s: &mut Session, z: Var) -> Result<Var> {
    let mean = s.tape.mean_rows(z)?;
    let centered = s.tape.sub(z, mean)?;
    s.tape.squared_l2(centered)
}

/// Cross-entropy plus `η` times the readout regularizers of both roles.
pub fn main_loss(s: &mut Session, probs: Var, one_hot: Var, z_user: Var, z_item: Var, eta: f64) -> Result<Var> {
    let ce = cross_entropy(s, probs, one_hot)?;
    if eta == 0.0 {
        return Ok(ce);
    }
    let ru = readout_regularizer(s, z_user)?;
    let ri = readout_regularizer(s, z_item)?;
    let reg = s.tape.add(ru, ri)?;
    let reg = s.tape.scale(reg, eta)?;
    s.tape.add(ce, reg)
}

/// Per-class counts and scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest AUC; absent when the class has no positive or no negative.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Macro one-vs-rest AUC over the classes where it is defined.
    pub auc: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.auc {
            Some(a) => write!(f, "AUC {:.2}", 100.0 * a)?,
            None => write!(f, "AUC n/a")?,
        }
        write!(
            f,
            "  Macro-F1 {:.2}  Micro-F1 {:.2}",
            100.0 * self.macro_f1,
            100.0 * self.micro_f1
        )
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Rank-statistic AUC of `scores` for binary `positive` flags, ties counted
/// one half. `None` when either class is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        rank_sum += midrank * order[start..end].iter().filter(|&&k| positive[k]).count() as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Metrics of probability rows `probs` against class indices `labels`.
///
/// Macro-F1 averages over the classes that occur in the labels or the
/// predictions; precision and recall with an empty denominator count as 0.
pub fn evaluate(probs: &Tensor, labels: &[usize]) -> Result<Metrics> {
    let (n, classes) = probs.shape();
    if labels.len() != n {
        return Err(Error::dim(
            "evaluate",
            format!("{n} probability rows vs {} labels", labels.len()),
        ));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::Contract(format!("label {c} outside {classes} classes")));
    }
    let predicted: Vec<usize> = (0..n).map(|r| argmax(probs.row(r))).collect();
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };

    let mut per_class = Vec::with_capacity(classes);
    let mut f1_sum = 0.0;
    let mut f1_count = 0;
    let mut auc_sum = 0.0;
    let mut auc_count = 0;
    let (mut tp_total, mut fp_total, mut fn_total) = (0, 0, 0);
    for c in 0..classes {
        let tp = (0..n).filter(|&r| labels[r] == c && predicted[r] == c).count();
        let support = labels.iter().filter(|&&l| l == c).count();
        let predicted_c = predicted.iter().filter(|&&p| p == c).count();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, support);
        tp_total += tp;
        fp_total += predicted_c - tp;
        fn_total += support - tp;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if support > 0 || predicted_c > 0 {
            f1_sum += f1;
            f1_count += 1;
        }
        let scores: Vec<f64> = (0..n).map(|r| probs.get(r, c)).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let auc = binary_auc(&scores, &positive);
        match auc {
            Some(a) => {
                auc_sum += a;
                auc_count += 1;
            }
            None if n > 0 => log::warn!("class {c} has no positive or no negative edge; excluded from AUC"),
            None => {}
        }
        per_class.push(ClassMetrics {
            support,
            precision,
            recall,
            f1,
            auc,
        });
    }
    // Pooled counts; with one label per edge this equals accuracy.
    let micro_f1 = if tp_total == 0 {
        0.0
    } else {
        2.0 * tp_total as f64 / (2 * tp_total + fp_total + fn_total) as f64
    };
    Ok(Metrics {
        auc: (auc_count > 0).then(|| auc_sum / auc_count as f64),
        macro_f1: if f1_count == 0 { 0.0 } else { f1_sum / f1_count as f64 },
        micro_f1,
        accuracy,
        per_class,
    })
}
