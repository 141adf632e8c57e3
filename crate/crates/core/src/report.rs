//! Run manifests, loss curves and checkpoints.
//!
//! A manifest is a flat `key = value` text document holding the config
//! snapshot, per-epoch losses of every stage, per-seed metrics and their
//! mean and standard deviation across seeds. Only the `timestamp` line varies
//! between identical runs.

use std::fmt::Write as _;

use crate::config::{TrainConfig, KEYS};
use crate::error::{Error, Result};
use crate::graph::{split, BipartiteGraph, LabelMode};
use crate::link_prediction::{evaluate, Metrics};
use crate::tensor::{Checkpoint, Tensor};
use crate::training::{predict_with, EpochLoss, RunResult};

/// Key of the only manifest line allowed to differ between identical runs.
pub const TIMESTAMP_KEY: &str = "timestamp";

/// Mean and sample standard deviation; the deviation is zero for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn stage_lines(out: &mut String, seed: u64, stage: &str, losses: &[EpochLoss]) {
    for (k, l) in losses.iter().enumerate() {
        let _ = writeln!(
            out,
            "seed.{seed}.loss.{stage}.{} = {},{},{},{}",
            k + 1,
            l.same,
            l.cross,
            l.task,
            l.total
        );
    }
}

/// The manifest of a multi-seed run. `timestamp` is written verbatim.
pub fn render_manifest(config: &TrainConfig, results: &[RunResult], timestamp: &str) -> String {
    let mut out = String::from("# mcgcl run manifest\n");
    let _ = writeln!(out, "{TIMESTAMP_KEY} = {timestamp}");
    for (key, _) in KEYS {
        let _ = writeln!(out, "config.{key} = {}", config.get(key).unwrap_or_default());
    }
    let seeds: Vec<String> = results.iter().map(|r| r.seed.to_string()).collect();
    let _ = writeln!(out, "run.seeds = {}", seeds.join(","));
    for r in results {
        let s = r.seed;
        let (tr, va, te) = r.split_sizes;
        let _ = writeln!(out, "seed.{s}.split = {tr},{va},{te}");
        let _ = writeln!(out, "seed.{s}.hard_edges = {}", r.hard.edges.len());
        let _ = writeln!(out, "seed.{s}.masked_users = {}", r.hard.masked_users());
        let _ = writeln!(out, "seed.{s}.masked_items = {}", r.hard.masked_items());
        let _ = writeln!(out, "seed.{s}.subtask_skipped = {}", r.subtask_skipped);
        let _ = writeln!(out, "seed.{s}.pairs.main = {}", r.main_pair_evaluations);
        let _ = writeln!(out, "seed.{s}.pairs.subtask = {}", r.sub_pair_evaluations);
        let _ = writeln!(out, "seed.{s}.fusion.user = {},{}", r.fusion_user.0, r.fusion_user.1);
        let _ = writeln!(out, "seed.{s}.fusion.item = {},{}", r.fusion_item.0, r.fusion_item.1);
        stage_lines(&mut out, s, "main", &r.main_losses);
        stage_lines(&mut out, s, "subtask", &r.sub_losses);
        stage_lines(&mut out, s, "validation", &r.val_losses);
        let _ = writeln!(out, "seed.{s}.loss.total = {}", r.total_loss);
        metric_lines(&mut out, &format!("seed.{s}.metric"), &r.metrics);
    }
    for (name, get) in METRICS {
        let values: Vec<f64> = results.iter().map(|r| get(&r.metrics)).collect();
        let (m, sd) = mean_std(&values);
        let _ = writeln!(out, "summary.{name} = {m},{sd}");
    }
    out
}

type MetricGetter = fn(&Metrics) -> f64;

const METRICS: [(&str, MetricGetter); 4] = [
    ("auc", |m| m.auc.unwrap_or(f64::NAN)),
    ("macro_f1", |m| m.macro_f1),
    ("micro_f1", |m| m.micro_f1),
    ("accuracy", |m| m.accuracy),
];

fn metric_lines(out: &mut String, prefix: &str, m: &Metrics) {
    for (name, get) in METRICS {
        let _ = writeln!(out, "{prefix}.{name} = {}", get(m));
    }
}

/// Human-readable per-seed table and mean ± std, metrics in percent.
pub fn render_summary(results: &[RunResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "seed {:>4}  {}", r.seed, r.metrics);
    }
    let pct = |get: MetricGetter| {
        let (m, s) = mean_std(&results.iter().map(|r| get(&r.metrics)).collect::<Vec<_>>());
        format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s)
    };
    let _ = writeln!(
        out,
        "mean       AUC {}  Macro-F1 {}  Micro-F1 {}",
        pct(METRICS[0].1),
        pct(METRICS[1].1),
        pct(METRICS[2].1)
    );
    out
}

/// Parses `key = value` lines, skipping blanks and `#` comments.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            l.split_once(" = ")
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Data(format!("manifest line {}: expected 'key = value'", n + 1)))
        })
        .collect()
}

/// `seed,stage,epoch,same,cross,task,total` rows for every epoch of every run.
pub fn render_loss_csv(results: &[RunResult]) -> String {
    let mut out = String::from("seed,stage,epoch,same,cross,task,total\n");
    for r in results {
        for (stage, losses) in [
            ("main", &r.main_losses),
            ("subtask", &r.sub_losses),
            ("validation", &r.val_losses),
        ] {
            for (k, l) in losses.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{stage},{},{},{},{},{}",
                    r.seed,
                    k + 1,
                    l.same,
                    l.cross,
                    l.task,
                    l.total
                );
            }
        }
    }
    out
}

const HEAD_NAMES: [&str; 4] = ["head.w1", "head.b1", "head.w2", "head.b2"];

/// Fused representations, prediction head and the metadata needed to rebuild
/// the test split.
pub fn build_checkpoint(result: &RunResult, mode: LabelMode) -> Checkpoint {
    let mut tensors = vec![
        ("z_user".to_string(), result.z_user.clone()),
        ("z_item".to_string(), result.z_item.clone()),
    ];
    tensors.extend(
        HEAD_NAMES
            .iter()
            .zip(&result.head)
            .map(|(n, t)| (n.to_string(), t.clone())),
    );
    Checkpoint {
        meta: vec![
            ("seed".into(), result.seed.to_string()),
            ("label_mode".into(), mode.name().into()),
            ("users".into(), result.z_user.rows().to_string()),
            ("items".into(), result.z_item.rows().to_string()),
        ],
        tensors,
    }
}

/// The pieces of a checkpoint needed for prediction.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub seed: u64,
    pub mode: LabelMode,
    pub z_user: Tensor,
    pub z_item: Tensor,
    pub head: [Tensor; 4],
}

pub fn load_model(ck: &Checkpoint) -> Result<LoadedModel> {
    let meta = |k: &str| {
        ck.meta(k)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta '{k}'")))
    };
    let tensor = |k: &str| {
        ck.tensor(k)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{k}'")))
    };
    let seed = meta("seed")?
        .parse()
        .map_err(|_| Error::Checkpoint("meta 'seed' is not an integer".into()))?;
    let mode = meta("label_mode")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad meta 'label_mode'".into()))?;
    Ok(LoadedModel {
        seed,
        mode,
        z_user: tensor("z_user")?,
        z_item: tensor("z_item")?,
        head: [
            tensor(HEAD_NAMES[0])?,
            tensor(HEAD_NAMES[1])?,
            tensor(HEAD_NAMES[2])?,
            tensor(HEAD_NAMES[3])?,
        ],
    })
}

/// Test-split metrics of a stored model on `graph`, re-split with the stored
/// seed. The node counts must match the stored representations.
pub fn evaluate_model(model: &LoadedModel, graph: &BipartiteGraph) -> Result<Metrics> {
    if graph.user_count() != model.z_user.rows() || graph.item_count() != model.z_item.rows() {
        return Err(Error::Data(format!(
            "checkpoint holds {} users and {} items, data has {} and {}",
            model.z_user.rows(),
            model.z_item.rows(),
            graph.user_count(),
            graph.item_count()
        )));
    }
    if graph.mode() != model.mode {
        return Err(Error::Data(format!(
            "checkpoint was trained in {} mode, data read in {} mode",
            model.mode.name(),
            graph.mode().name()
        )));
    }
    let parts = split(graph, model.seed)?;
    let probs = predict_with(&model.z_user, &model.z_item, &model.head, &parts.test)?;
    evaluate(&probs, &parts.test.class_labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn manifest_lines_parse() {
        let kv = parse_manifest("# c\nseed.1.metric.auc = 0.5\n\nx = a = b\n").unwrap();
        assert_eq!(kv[0], ("seed.1.metric.auc".into(), "0.5".into()));
        assert_eq!(kv[1], ("x".into(), "a = b".into()));
        assert!(parse_manifest("novalue\n").is_err());
    }
}
