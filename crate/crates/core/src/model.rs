//! The per-label contrastive stack shared by both tasks.
//!
//! A stack owns one GCN encoder per label, a view merger per label and role,
//! and a projection head and label aggregator per role. A role is a contiguous
//! row range of the stacked node table: users and items in the main task, the
//! whole node set of a homogeneous graph in the subtask.

use std::ops::Range;

use rand::Rng;

use crate::aggregation::{AggregationKind, AugmentationMerger, LabelAggregator, ProjectionHead};
use crate::contrastive::{cross_encoder_loss, same_encoder_loss, sum_augmentation_losses, CrossLossSign};
use crate::encoders::{encode_label_pair, Activation, GcnEncoder, LabelView};
use crate::error::{Error, Result};
use crate::graph::EdgeLabel;
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

/// Shape and behavior of a [`LabelStack`].
#[derive(Clone, Debug)]
pub struct StackSpec {
    pub labels: Vec<EdgeLabel>,
    pub roles: Vec<Range<usize>>,
    pub dim: usize,
    pub layers: usize,
    pub activation: Activation,
    pub aggregation: AggregationKind,
    pub per_label_h0: bool,
}

impl StackSpec {
    pub fn node_count(&self) -> usize {
        self.roles.last().map_or(0, |r| r.end)
    }
}

/// Both augmented views of every label, in the stack's label order.
#[derive(Clone, Debug)]
pub struct StackViews {
    pub per_label: Vec<(LabelView, LabelView)>,
    /// Whether either view of the label has an edge.
    pub active: Vec<bool>,
}

/// Results of one forward pass.
#[derive(Clone, Debug)]
pub struct StackOutput {
    /// Aggregated representation per role.
    pub roles: Vec<Var>,
    /// Same-encoder loss summed over active labels.
    pub same_loss: Var,
    /// Cross-encoder loss over active labels.
    pub cross_loss: Var,
}

#[derive(Clone, Debug)]
pub struct LabelStack {
    spec: StackSpec,
    h0: Vec<ParamId>,
    encoders: Vec<GcnEncoder>,
    mergers: Vec<Vec<AugmentationMerger>>,
    projections: Vec<ProjectionHead>,
    aggregators: Vec<LabelAggregator>,
}

impl LabelStack {
    /// Registers every parameter under `prefix`. `h0` is the initial node
    /// table; with per-label tables each label starts from a copy.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        spec: StackSpec,
        h0: Tensor,
        rng: &mut R,
    ) -> Result<Self> {
        if h0.shape() != (spec.node_count(), spec.dim) {
            return Err(Error::dim(
                "label_stack",
                format!(
                    "initial table {:?} for {} nodes of dim {}",
                    h0.shape(),
                    spec.node_count(),
                    spec.dim
                ),
            ));
        }
        if spec.labels.is_empty() {
            return Err(Error::Contract("a label stack needs at least one label".into()));
        }
        let h0 = if spec.per_label_h0 {
            spec.labels
                .iter()
                .map(|l| store.add(format!("{prefix}.h0.{l}"), h0.clone()))
                .collect()
        } else {
            vec![store.add(format!("{prefix}.h0"), h0)]
        };
        let encoders = spec
            .labels
            .iter()
            .map(|&l| GcnEncoder::new(store, prefix, l, spec.layers, spec.dim, spec.activation, rng))
            .collect();
        let mergers = spec
            .labels
            .iter()
            .map(|l| {
                (0..spec.roles.len())
                    .map(|r| {
                        AugmentationMerger::new(
                            store,
                            &format!("{prefix}.merge.{l}.r{r}"),
                            spec.aggregation,
                            spec.dim,
                            rng,
                        )
                    })
                    .collect()
            })
            .collect();
        let projections = (0..spec.roles.len())
            .map(|r| ProjectionHead::new(store, &format!("{prefix}.r{r}"), spec.dim, rng))
            .collect();
        let aggregators = (0..spec.roles.len())
            .map(|r| {
                LabelAggregator::new(
                    store,
                    &format!("{prefix}.agg.r{r}"),
                    spec.aggregation,
                    spec.labels.len(),
                    spec.dim,
                    rng,
                )
            })
            .collect();
        Ok(LabelStack {
            spec,
            h0,
            encoders,
            mergers,
            projections,
            aggregators,
        })
    }

    pub fn spec(&self) -> &StackSpec {
        &self.spec
    }

    /// Every parameter of the stack.
    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = self.h0.clone();
        ids.extend(self.encoders.iter().flat_map(|e| e.params().iter().copied()));
        ids.extend(self.mergers.iter().flatten().flat_map(|m| m.params()));
        ids.extend(self.projections.iter().flat_map(|p| p.params()));
        ids.extend(self.aggregators.iter().flat_map(|a| a.params()));
        ids
    }

    /// Encodes both views per label, merges them per role, computes both
    /// contrastive losses on the projected merges, and aggregates the merged
    /// (unprojected) matrices over labels.
    pub fn forward(
        &self,
        s: &mut Session,
        views: &StackViews,
        temperature: f64,
        sign: CrossLossSign,
    ) -> Result<StackOutput> {
        let labels = &self.spec.labels;
        if views.per_label.len() != labels.len() || views.active.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} views for a {}-label stack",
                views.per_label.len(),
                labels.len()
            )));
        }
        let roles = &self.spec.roles;
        let mut same_terms = Vec::new();
        let mut merged: Vec<Vec<Var>> = vec![Vec::new(); roles.len()];
        let mut projected: Vec<(EdgeLabel, Vec<Var>)> = Vec::new();
        for (k, encoder) in self.encoders.iter().enumerate() {
            let h0 = s.param(self.h0[if self.spec.per_label_h0 { k } else { 0 }]);
            let (view_t, view_t2) = &views.per_label[k];
            let (a, b) = encode_label_pair(encoder, s, view_t, view_t2, h0)?;
            let mut pairs = Vec::with_capacity(roles.len());
            let mut proj = Vec::with_capacity(roles.len());
            for (r, range) in roles.iter().enumerate() {
                let (ha, hb) = if roles.len() == 1 {
                    (a, b)
                } else {
                    (
                        s.tape.slice_rows(a, range.start, range.end)?,
                        s.tape.slice_rows(b, range.start, range.end)?,
                    )
                };
                pairs.push((ha, hb));
                let m = self.mergers[k][r].merge(s, ha, hb)?;
                merged[r].push(m);
                proj.push(self.projections[r].project(s, m)?);
            }
            if views.active[k] {
                same_terms.push(same_encoder_loss(&mut s.tape, &pairs, temperature)?);
                projected.push((labels[k], proj));
            }
        }
        let same_loss = sum_augmentation_losses(&mut s.tape, &same_terms)?;
        let cross_loss = cross_encoder_loss(&mut s.tape, &projected, temperature, sign)?;
        let roles = merged
            .iter()
            .zip(&self.aggregators)
            .map(|(per_label, agg)| agg.aggregate(s, per_label))
            .collect::<Result<Vec<_>>>()?;
        Ok(StackOutput {
            roles,
            same_loss,
            cross_loss,
        })
    }
}
