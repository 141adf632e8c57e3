//! InfoNCE contrastive losses with cosine similarity.
//!
//! For an anchor matrix `A` and counterpart `B` over the same `n` nodes, the
//! per-node term is `-log(exp(s_ii) / Σ_{j≠i} exp(s_ij))` with
//! `s = cos(A_i, B_j) / τ`, averaged over nodes. Negatives are the other nodes
//! of the same role.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::EdgeLabel;
use crate::tensor::{Tape, Tensor, Var};

/// Direction of the cross-encoder loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CrossLossSign {
    /// Pulls a node's representations from different label encoders together.
    #[default]
    Attract,
    /// The negated loss, pushing them apart.
    Repulsive,
}

impl CrossLossSign {
    pub fn name(self) -> &'static str {
        match self {
            CrossLossSign::Attract => "attract",
            CrossLossSign::Repulsive => "repulsive",
        }
    }
}

impl fmt::Display for CrossLossSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CrossLossSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attract" => Ok(CrossLossSign::Attract),
            "repulsive" => Ok(CrossLossSign::Repulsive),
            _ => Err(Error::Config(format!("unknown cross_loss_sign '{s}'"))),
        }
    }
}

/// Mean InfoNCE term over the rows of `anchor` against `counterpart`.
///
/// Returns `None` with a warning when fewer than two nodes exist, since the
/// negative set would be empty.
pub fn info_nce(tape: &mut Tape, anchor: Var, counterpart: Var, temperature: f64) -> Result<Option<Var>> {
    let (n, _) = tape.shape(anchor);
    if tape.shape(counterpart) != tape.shape(anchor) {
        return Err(Error::dim(
            "info_nce",
            format!("{:?} vs {:?}", tape.shape(anchor), tape.shape(counterpart)),
        ));
    }
    if n < 2 {
        log::warn!("contrastive term skipped: role has {n} node(s)");
        return Ok(None);
    }
    let mut sim = tape.cosine_similarity_rows(anchor, counterpart)?;
    if temperature != 1.0 {
        sim = tape.scale(sim, 1.0 / temperature)?;
    }
    let eye = tape.constant(Tensor::identity(n))?;
    let mut off = Tensor::full(n, n, 1.0);
    for k in 0..n {
        off.set(k, k, 0.0);
    }
    let off = tape.constant(off)?;
    let positive = tape.mul(sim, eye)?;
    let positive = tape.sum_columns(positive)?;
    let expd = tape.exp(sim)?;
    let negatives = tape.mul(expd, off)?;
    let denom = tape.sum_columns(negatives)?;
    let log_denom = tape.log(denom)?;
    let terms = tape.sub(log_denom, positive)?;
    let total = tape.sum(terms)?;
    Ok(Some(tape.scale(total, 1.0 / n as f64)?))
}

/// Same-encoder loss of one label: the sum over roles of the InfoNCE term
/// between the two augmented views. Each entry of `roles` is `(H_t, H_t')`.
pub fn same_encoder_loss(tape: &mut Tape, roles: &[(Var, Var)], temperature: f64) -> Result<Var> {
    let mut terms = Vec::new();
    for &(a, b) in roles {
        if let Some(t) = info_nce(tape, a, b, temperature)? {
            terms.push(t);
        }
    }
    sum_or_zero(tape, &terms)
}

/// Sum of the per-label same-encoder losses; an empty set sums to zero.
pub fn sum_augmentation_losses(tape: &mut Tape, per_label: &[Var]) -> Result<Var> {
    sum_or_zero(tape, per_label)
}

/// Cross-encoder loss: for every ordered pair of distinct labels, the InfoNCE
/// terms between their projected representations, summed over roles and pairs.
/// Each entry of `per_label` holds one matrix per role, in a fixed role order.
pub fn cross_encoder_loss(
    tape: &mut Tape,
    per_label: &[(EdgeLabel, Vec<Var>)],
    temperature: f64,
    sign: CrossLossSign,
) -> Result<Var> {
    if per_label.len() < 2 {
        log::warn!("cross-encoder loss needs at least two labels, got {}", per_label.len());
        return sum_or_zero(tape, &[]);
    }
    let mut terms = Vec::new();
    for (a, (_, za)) in per_label.iter().enumerate() {
        for (b, (_, zb)) in per_label.iter().enumerate() {
            if a == b {
                continue;
            }
            for (&x, &y) in za.iter().zip(zb) {
                if let Some(t) = info_nce(tape, x, y, temperature)? {
                    terms.push(t);
                }
            }
        }
    }
    let total = sum_or_zero(tape, &terms)?;
    match sign {
        CrossLossSign::Attract => Ok(total),
        CrossLossSign::Repulsive => tape.scale(total, -1.0),
    }
}

fn sum_or_zero(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    if terms.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        tape.add_all(terms)
    }
}
