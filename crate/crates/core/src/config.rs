//! Training configuration as a flat `key = value` document.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error. Serialization writes every key, so parse → serialize → parse is the
//! identity.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::aggregation::AggregationKind;
use crate::contrastive::CrossLossSign;
use crate::encoders::Activation;
use crate::error::{Error, Result};
use crate::graph::LabelMode;
use crate::tensor::AdamConfig;

/// Which augmented views the main task contrasts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AugmentMode {
    /// One view by edge removal, the other by edge addition.
    #[default]
    Both,
    /// Two independent edge-removal views.
    Remove,
    /// Two independent edge-addition views.
    Add,
}

impl AugmentMode {
    pub fn name(self) -> &'static str {
        match self {
            AugmentMode::Both => "both",
            AugmentMode::Remove => "remove",
            AugmentMode::Add => "add",
        }
    }
}

/// Framework variant, for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    /// Main task, subtask and validation-stage fusion.
    #[default]
    Full,
    /// Untrained main-task representations feed the subtask.
    NoMain,
    /// Main task only; predictions use the main-task representations.
    NoSubtask,
    /// Main task and subtask fused with fixed equal weights.
    NoValidation,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMain => "no_main",
            Variant::NoSubtask => "no_subtask",
            Variant::NoValidation => "no_validation",
        }
    }
}

macro_rules! named_enum_parse {
    ($ty:ty, $what:literal, [$($v:expr),+]) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::Config(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum_parse!(
    AugmentMode,
    "augment_mode",
    [AugmentMode::Both, AugmentMode::Remove, AugmentMode::Add]
);
named_enum_parse!(
    Variant,
    "variant",
    [
        Variant::Full,
        Variant::NoMain,
        Variant::NoSubtask,
        Variant::NoValidation
    ]
);

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub p_augment: f64,
    pub augment_mode: AugmentMode,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub eta: f64,
    pub layers: usize,
    pub k_top: usize,
    pub epochs_main: usize,
    pub epochs_sub: usize,
    pub epochs_val: usize,
    pub seeds: Vec<u64>,
    pub label_mode: LabelMode,
    pub activation: Activation,
    pub temperature: f64,
    pub cross_loss_sign: CrossLossSign,
    pub per_label_h0: bool,
    pub aggregation: AggregationKind,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            learning_rate: 0.005,
            weight_decay: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            p_augment: 0.01,
            augment_mode: AugmentMode::Both,
            epsilon: 0.3,
            alpha: 0.6,
            beta: 0.8,
            mu: 0.6,
            gamma: 0.7,
            eta: 0.01,
            layers: 2,
            k_top: 10,
            epochs_main: 100,
            epochs_sub: 50,
            epochs_val: 50,
            seeds: vec![1, 2, 3, 4, 5],
            label_mode: LabelMode::Multi,
            activation: Activation::Softmax,
            temperature: 1.0,
            cross_loss_sign: CrossLossSign::Attract,
            per_label_h0: false,
            aggregation: AggregationKind::Attention,
            variant: Variant::Full,
        }
    }
}

/// Every key with a one-line description, in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("dim", "embedding dimension"),
    ("learning_rate", "Adam learning rate"),
    ("weight_decay", "L2 weight decay added to gradients"),
    ("adam_beta1", "Adam first-moment decay"),
    ("adam_beta2", "Adam second-moment decay"),
    ("adam_epsilon", "Adam denominator epsilon"),
    ("p_augment", "edge perturbation probability, 0 to 0.5"),
    ("augment_mode", "main-task views: both | remove | add"),
    ("epsilon", "fraction of training edges mined as hard samples"),
    ("alpha", "weight of the main-task contrastive losses"),
    ("beta", "weight of the main-task prediction loss"),
    ("mu", "weight of the subtask contrastive losses"),
    ("gamma", "weight of the subtask prediction loss"),
    ("eta", "weight of the readout regularizer"),
    ("layers", "GCN layers, 1 to 4"),
    ("k_top", "out-edges kept per node in homogeneous graphs"),
    ("epochs_main", "main-task epochs"),
    ("epochs_sub", "subtask epochs"),
    ("epochs_val", "validation-stage epochs"),
    ("seeds", "comma-separated run seeds"),
    ("label_mode", "multi | binary"),
    ("activation", "GCN layer activation: softmax | relu"),
    ("temperature", "contrastive temperature"),
    ("cross_loss_sign", "attract | repulsive"),
    ("per_label_h0", "separate initial embeddings per label: true | false"),
    ("aggregation", "attention | mlp | mean"),
    ("variant", "full | no_main | no_subtask | no_validation"),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dim" => self.dim = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "adam_epsilon" => self.adam_epsilon = parse_value(key, v)?,
            "p_augment" => self.p_augment = parse_value(key, v)?,
            "augment_mode" => self.augment_mode = v.parse()?,
            "epsilon" => self.epsilon = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "mu" => self.mu = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "eta" => self.eta = parse_value(key, v)?,
            "layers" => self.layers = parse_value(key, v)?,
            "k_top" => self.k_top = parse_value(key, v)?,
            "epochs_main" => self.epochs_main = parse_value(key, v)?,
            "epochs_sub" => self.epochs_sub = parse_value(key, v)?,
            "epochs_val" => self.epochs_val = parse_value(key, v)?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "label_mode" => self.label_mode = v.parse()?,
            "activation" => self.activation = v.parse()?,
            "temperature" => self.temperature = parse_value(key, v)?,
            "cross_loss_sign" => self.cross_loss_sign = v.parse()?,
            "per_label_h0" => self.per_label_h0 = parse_value(key, v)?,
            "aggregation" => self.aggregation = v.parse()?,
            "variant" => self.variant = v.parse()?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// The textual form of one field.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dim" => self.dim.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "adam_beta1" => self.adam_beta1.to_string(),
            "adam_beta2" => self.adam_beta2.to_string(),
            "adam_epsilon" => self.adam_epsilon.to_string(),
            "p_augment" => self.p_augment.to_string(),
            "augment_mode" => self.augment_mode.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "mu" => self.mu.to_string(),
            "gamma" => self.gamma.to_string(),
            "eta" => self.eta.to_string(),
            "layers" => self.layers.to_string(),
            "k_top" => self.k_top.to_string(),
            "epochs_main" => self.epochs_main.to_string(),
            "epochs_sub" => self.epochs_sub.to_string(),
            "epochs_val" => self.epochs_val.to_string(),
            "seeds" => self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            "label_mode" => self.label_mode.name().to_string(),
            "activation" => self.activation.to_string(),
            "temperature" => self.temperature.to_string(),
            "cross_loss_sign" => self.cross_loss_sign.to_string(),
            "per_label_h0" => self.per_label_h0.to_string(),
            "aggregation" => self.aggregation.to_string(),
            "variant" => self.variant.to_string(),
            _ => return None,
        })
    }

    /// Parses a document over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", k + 1)))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", k + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    /// Every key in [`KEYS`] order, one `key = value` line each.
    pub fn serialize(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(1..=4).contains(&self.layers) {
            return bad(format!("layers must be in 1..=4, got {}", self.layers));
        }
        if !(0.0..=0.5).contains(&self.p_augment) {
            return bad(format!("p_augment {} outside [0, 0.5]", self.p_augment));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon {} outside (0, 1]", self.epsilon));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("mu", self.mu),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1)"));
            }
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.k_top == 0 {
            return bad("k_top must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
