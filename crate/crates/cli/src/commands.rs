use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survrelu::data::{apply_preprocess, fit_preprocess, kfold, load_csv, split_indices, Dataset, PreprocessSpec, Schema};
use survrelu::simulate::simulate;
use survrelu::tree::{covariate_importance, tree_to_dot, tree_to_json, RankRecord, TreeNode};

use crate::config::{DataSource, LossKind, ModelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::evaluate::{concordance_report, evaluate, EvalReport, TreeSummary};
use crate::model::TrainedModel;
use crate::train::{train, PruneEvent, TrainOutcome};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RANK_TRACE_FILE: &str = "rank_trace.csv";
pub const TREE_DOT_FILE: &str = "tree.dot";
pub const TREE_JSON_FILE: &str = "tree.json";
pub const TREE_PRE_DOT_FILE: &str = "tree_pre_prune.dot";
pub const TREE_PRE_JSON_FILE: &str = "tree_pre_prune.json";

/// Raw records as configured: simulated or read from CSV.
pub fn load_raw(cfg: &RunConfig) -> CliResult<Dataset> {
    match &cfg.data {
        DataSource::Simulated(sim) => Ok(simulate(sim)?),
        DataSource::Csv { path, time, event, features, categorical } => {
            let mut schema = Schema::new(time, event);
            schema.features = features.clone();
            schema.categorical = categorical.clone();
            Ok(load_csv(path, &schema)?)
        }
    }
}

fn categorical(cfg: &RunConfig) -> Vec<String> {
    match &cfg.data {
        DataSource::Csv { categorical, .. } => categorical.clone(),
        DataSource::Simulated(_) => Vec::new(),
    }
}

/// Preprocessed train / validation / test sets; the transform is fitted on
/// the training part only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub preprocess: PreprocessSpec,
}

pub fn prepare(cfg: &RunConfig, raw: &Dataset) -> CliResult<Prepared> {
    let [a, b, c] = cfg.eval.split;
    let [tr, va, te] = split_indices(raw.len(), (a, b, c), cfg.seed)?;
    let train_raw = raw.subset(&tr);
    let preprocess = fit_preprocess(&train_raw, &categorical(cfg))?;
    Ok(Prepared {
        train: apply_preprocess(&train_raw, &preprocess)?,
        val: apply_preprocess(&raw.subset(&va), &preprocess)?,
        test: apply_preprocess(&raw.subset(&te), &preprocess)?,
        preprocess,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: ModelKind,
    pub loss: LossKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub test: EvalReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub skipped_batches: usize,
    pub loss_curve: Vec<Option<f64>>,
    pub val_ctd_curve: Vec<Option<f64>>,
    pub rank_trace: Vec<RankRecord>,
    pub prune_events: Vec<PruneEvent>,
    pub tree_before_final_prune: Option<TreeSummary>,
    pub tree_after_final_prune: Option<TreeSummary>,
}

pub struct RunResult {
    pub outcome: TrainOutcome,
    pub metrics: Metrics,
    pub prepared: Prepared,
}

/// Split, train, select on validation and evaluate on test.
pub fn run(cfg: &RunConfig, bootstrap: bool) -> CliResult<RunResult> {
    cfg.validate()?;
    let raw = load_raw(cfg)?;
    let prepared = prepare(cfg, &raw)?;
    let outcome = train(cfg, &prepared.train, Some(&prepared.val), prepared.preprocess.clone())?;
    let boot = bootstrap.then_some((cfg.eval.bootstrap, cfg.seed));
    let test = evaluate(&outcome.model, &prepared.test, boot)?;
    let metrics = Metrics {
        model: cfg.model.kind,
        loss: cfg.model.loss,
        seed: cfg.seed,
        n_train: prepared.train.len(),
        n_val: prepared.val.len(),
        n_test: prepared.test.len(),
        test,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        skipped_batches: outcome.skipped_batches,
        loss_curve: outcome.history.iter().map(|h| h.loss).collect(),
        val_ctd_curve: outcome.history.iter().map(|h| h.val_ctd).collect(),
        rank_trace: outcome.rank_trace.records.clone(),
        prune_events: outcome.prune_events.clone(),
        tree_before_final_prune: outcome.tree_before.as_ref().map(TreeSummary::of),
        tree_after_final_prune: outcome.tree_after.as_ref().map(TreeSummary::of),
    };
    Ok(RunResult { outcome, metrics, prepared })
}

fn write_tree(model: &TrainedModel, tree: Option<&TreeNode>, names: &[String], dot: &Path, json: &Path) -> CliResult<()> {
    match (model.network(), tree) {
        (Some(net), Some(tree)) => {
            let imp = covariate_importance(net);
            fs::write(dot, tree_to_dot(tree, &imp, names))?;
            fs::write(json, tree_to_json(tree, &imp)?)?;
        }
        _ => {
            fs::write(dot, "digraph survival_tree {\n}\n")?;
            fs::write(json, "null\n")?;
        }
    }
    Ok(())
}

pub fn write_artifacts(out: &Path, cfg: &RunConfig, result: &RunResult) -> CliResult<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
    result.outcome.model.save(&out.join(CHECKPOINT_FILE))?;
    fs::write(out.join(METRICS_FILE), serde_json::to_string_pretty(&result.metrics)?)?;
    fs::write(out.join(RANK_TRACE_FILE), result.outcome.rank_trace.to_csv())?;
    let names = result.prepared.preprocess.output_names();
    let model = &result.outcome.model;
    write_tree(model, result.outcome.tree_after.as_ref(), &names, &out.join(TREE_DOT_FILE), &out.join(TREE_JSON_FILE))?;
    write_tree(model, result.outcome.tree_before.as_ref(), &names, &out.join(TREE_PRE_DOT_FILE), &out.join(TREE_PRE_JSON_FILE))?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<Metrics> {
    let result = run(cfg, true)?;
    write_artifacts(out, cfg, &result)?;
    Ok(result.metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetadata {
    pub config: survrelu::simulate::SimConfig,
    pub n: usize,
    pub events: usize,
}

/// Writes `<out>/data.csv` and the `<out>/data.meta.json` sidecar.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    let DataSource::Simulated(sim) = &cfg.data else {
        return Err(CliError::Usage("simulate needs a simulated data source".into()));
    };
    let ds = simulate(sim)?;
    fs::create_dir_all(out)?;
    let csv = out.join("data.csv");
    ds.write_csv(&csv)?;
    let meta = SimMetadata {
        config: sim.clone(),
        n: ds.len(),
        events: ds.records.iter().filter(|r| r.event).count(),
    };
    fs::write(out.join("data.meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(csv)
}

/// Evaluates a checkpoint on raw data, applying the stored preprocessing.
pub fn cmd_evaluate(checkpoint: &Path, data: &Dataset, bootstrap: usize, seed: u64) -> CliResult<EvalReport> {
    if bootstrap < 100 {
        return Err(CliError::Usage(format!("bootstrap must be at least 100, got {bootstrap}")));
    }
    let model = TrainedModel::load(checkpoint)?;
    let ds = apply_preprocess(data, &model.preprocess)?;
    if let Some(net) = model.network() {
        if net.dim() != ds.dim() {
            return Err(CliError::Data(format!("checkpoint expects {} features, data has {}", net.dim(), ds.dim())));
        }
    }
    evaluate(&model, &ds, Some((bootstrap, seed)))
}

pub fn cmd_export_tree(checkpoint: &Path, data: &Dataset, out: &Path) -> CliResult<()> {
    let model = TrainedModel::load(checkpoint)?;
    let ds = apply_preprocess(data, &model.preprocess)?;
    let tree = model.tree(&ds)?.ok_or_else(|| CliError::Usage("checkpoint has no splitting layers".into()))?;
    fs::create_dir_all(out)?;
    write_tree(&model, Some(&tree), &model.preprocess.output_names(), &out.join(TREE_DOT_FILE), &out.join(TREE_JSON_FILE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub harrell: Option<f64>,
    pub antolini: Option<f64>,
    /// Set when the fold was excluded from the summary.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub antolini_mean: f64,
    pub antolini_std: f64,
    pub harrell_mean: f64,
    pub harrell_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Stratified k-fold; each fold fits its own preprocessing and trains
/// without a validation set (last epoch kept).
pub fn cmd_cross_validate(cfg: &RunConfig) -> CliResult<CvReport> {
    cfg.validate()?;
    let raw = load_raw(cfg)?;
    let folds = kfold(&raw.events(), cfg.eval.cv_folds, cfg.seed, true)?;
    let mut results = Vec::with_capacity(folds.len());
    for (k, (tr, te)) in folds.iter().enumerate() {
        let train_raw = raw.subset(tr);
        let spec = fit_preprocess(&train_raw, &categorical(cfg))?;
        let train_ds = apply_preprocess(&train_raw, &spec)?;
        let test_ds = apply_preprocess(&raw.subset(te), &spec)?;
        let outcome = train(cfg, &train_ds, None, spec)?;
        let pred = outcome.model.predict(&test_ds)?;
        results.push(match concordance_report(&pred, &test_ds.times(), &test_ds.events(), None) {
            Ok((h, a)) => FoldResult { fold: k, harrell: Some(h.value), antolini: Some(a.value), note: None },
            Err(CliError::Data(m)) => FoldResult { fold: k, harrell: None, antolini: None, note: Some(m) },
            Err(e) => return Err(e),
        });
    }
    let a: Vec<f64> = results.iter().filter_map(|f| f.antolini).collect();
    let h: Vec<f64> = results.iter().filter_map(|f| f.harrell).collect();
    if a.is_empty() {
        return Err(CliError::Data("no fold had comparable pairs".into()));
    }
    let (antolini_mean, antolini_std) = mean_std(&a);
    let (harrell_mean, harrell_std) = mean_std(&h);
    Ok(CvReport { folds: results, antolini_mean, antolini_std, harrell_mean, harrell_std })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Depth,
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    pub ctd: Option<f64>,
    pub sparsity: Option<f64>,
    pub leaves: Option<usize>,
    pub error: Option<String>,
}

/// One model per sweep value with a shared seed; failed cells are recorded
/// and the sweep continues.
pub fn cmd_ablate(cfg: &RunConfig, sweep: Sweep, values: &[f64]) -> CliResult<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(CliError::Usage("empty sweep".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        match sweep {
            Sweep::Depth => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(CliError::Usage(format!("depth must be a positive integer, got {v}")));
                }
                c.model.layers = v as usize;
                c.model.widths = None;
            }
            Sweep::Lambda => c.optim.lambda_sparsity = v,
        }
        rows.push(match run(&c, false) {
            Ok(r) => AblationRow {
                value: v,
                ctd: Some(r.metrics.test.antolini.value),
                sparsity: r.metrics.test.sparsity,
                leaves: r.metrics.test.tree.as_ref().map(|t| t.leaves),
                error: None,
            },
            Err(e) => AblationRow { value: v, ctd: None, sparsity: None, leaves: None, error: Some(e.to_string()) },
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let mut out = String::from("value,ctd,sparsity,leaves,error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.value,
            opt(r.ctd.map(|v| v.to_string())),
            opt(r.sparsity.map(|v| v.to_string())),
            opt(r.leaves.map(|v| v.to_string())),
            opt(r.error.as_ref().map(|e| format!("\"{}\"", e.replace('"', "'"))))
        ));
    }
    out
}
