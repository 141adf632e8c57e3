//! Per-label GCN encoders.
//!
//! Node embeddings are stacked row-wise, users first then items, matching the
//! node order of [`NormalizedAdjacency`]. One encoder serves both augmented
//! views of its label, so its weights receive gradients from both branches.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EdgeLabel, NormalizedAdjacency};
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

/// Nonlinearity applied after each propagation step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    /// Row-wise softmax.
    #[default]
    Softmax,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Softmax => "softmax",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Activation::Softmax),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Config(format!("unknown activation '{s}'"))),
        }
    }
}

/// A labeled graph view ready for propagation.
#[derive(Clone, Debug)]
pub struct LabelView {
    pub label: EdgeLabel,
    pub adjacency: NormalizedAdjacency,
}

/// `K` propagation layers `H ← act(Ã·H·W)` with square `d × d` weights.
#[derive(Clone, Debug)]
pub struct GcnEncoder {
    label: EdgeLabel,
    weights: Vec<ParamId>,
    activation: Activation,
}

impl GcnEncoder {
    /// Registers `layers` Xavier-initialized `dim × dim` weights in `store`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        label: EdgeLabel,
        layers: usize,
        dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weights = (0..layers)
            .map(|k| {
                store.add(
                    format!("{prefix}.gcn.{label}.w{k}"),
                    Tensor::xavier_uniform(dim, dim, rng),
                )
            })
            .collect();
        GcnEncoder {
            label,
            weights,
            activation,
        }
    }

    /// An encoder over existing weight parameters.
    pub fn from_weights(label: EdgeLabel, weights: Vec<ParamId>, activation: Activation) -> Self {
        GcnEncoder {
            label,
            weights,
            activation,
        }
    }

    pub fn label(&self) -> EdgeLabel {
        self.label
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn params(&self) -> &[ParamId] {
        &self.weights
    }

    /// Propagates stacked embeddings `h0` through every layer.
    pub fn forward(&self, s: &mut Session, adjacency: &NormalizedAdjacency, h0: Var) -> Result<Var> {
        let (rows, _) = s.tape.shape(h0);
        if rows != adjacency.size() {
            return Err(Error::dim(
                "gcn_forward",
                format!("{rows} embedding rows for a {}-node adjacency", adjacency.size()),
            ));
        }
        let mut h = h0;
        for &w in &self.weights {
            let w = s.param(w);
            let propagated = s.tape.sparse_matmul(adjacency.csr(), h)?;
            let z = s.tape.matmul(propagated, w)?;
            h = match self.activation {
                Activation::Softmax => s.tape.row_softmax(z)?,
                Activation::Relu => s.tape.relu(z)?,
            };
        }
        Ok(h)
    }
}

/// Encodes both augmented views of one label with the same weights.
pub fn encode_label_pair(
    encoder: &GcnEncoder,
    s: &mut Session,
    view_t: &LabelView,
    view_t2: &LabelView,
    h0: Var,
) -> Result<(Var, Var)> {
    for view in [view_t, view_t2] {
        if view.label != encoder.label {
            return Err(Error::Contract(format!(
                "{} encoder given a {} view",
                encoder.label, view.label
            )));
        }
    }
    let a = encoder.forward(s, &view_t.adjacency, h0)?;
    let b = encoder.forward(s, &view_t2.adjacency, h0)?;
    Ok((a, b))
}

/// Splits stacked embeddings into `(users, items)`.
pub fn split_roles(s: &mut Session, stacked: Var, users: usize) -> Result<(Var, Var)> {
    let (rows, _) = s.tape.shape(stacked);
    let u = s.tape.slice_rows(stacked, 0, users)?;
    let i = s.tape.slice_rows(stacked, users, rows)?;
    Ok((u, i))
}
