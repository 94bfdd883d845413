//! Training loop: soft-mode SGD with annealed patterns, rank-triggered
//! log-rank pruning, and model selection on hard-mode validation C^td.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use survrelu::baseline::{LinearCox, LinearCoxOptions};
use survrelu::data::{Dataset, PreprocessSpec};
use survrelu::losses::{cox_nll, deephit_loss, make_time_grid, BaselineHazard, LossValue, TimeGrid};
use survrelu::network::{Activation, ReluNetwork, Sgd};
use survrelu::stats::antolini_ctd;
use survrelu::tree::{apply_prune, build_pattern_matrix, logrank_scan, matrix_rank, rank_trigger, reconstruct_tree, PruneMask, RankTrace, TreeNode};
use survrelu::Error;

use crate::config::{LossKind, ModelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::model::{hard_traces, prediction_from_outputs, Predictor, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: Option<f64>,
    pub beta: f64,
    pub rank: usize,
    pub leaves: usize,
    pub val_ctd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub epoch: usize,
    /// Part of the fixpoint pass run on the selected model after training.
    pub final_pass: bool,
    pub leaves_before: usize,
    pub leaves_after: usize,
    pub merged: usize,
    pub val_ctd_before: Option<f64>,
    pub val_ctd_after: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
    pub rank_trace: RankTrace,
    pub prune_events: Vec<PruneEvent>,
    pub skipped_batches: usize,
    pub best_epoch: usize,
    /// Tree of the selected model before and after the final prune pass.
    pub tree_before: Option<TreeNode>,
    pub tree_after: Option<TreeNode>,
}

fn numerical(epoch: usize, e: Error) -> CliError {
    match e {
        Error::NonFinite(m) => CliError::Numerical(format!("epoch {epoch}: non-finite value in {m}")),
        Error::InvalidArgument(m) if m.contains("non-finite") => CliError::Numerical(format!("epoch {epoch}: {m}")),
        other => other.into(),
    }
}

/// Train on already preprocessed data. `val` drives model selection and
/// early stopping; without it the last epoch is kept.
pub fn train(cfg: &RunConfig, train: &Dataset, val: Option<&Dataset>, preprocess: PreprocessSpec) -> CliResult<TrainOutcome> {
    cfg.validate()?;
    match cfg.model.kind {
        ModelKind::LinearCox => train_linear_cox(cfg, train, preprocess),
        ModelKind::Survrelu => Trainer::new(cfg, train, val, preprocess)?.run(),
    }
}

fn train_linear_cox(cfg: &RunConfig, train: &Dataset, preprocess: PreprocessSpec) -> CliResult<TrainOutcome> {
    if cfg.model.loss != LossKind::Continuous {
        return Err(CliError::Usage("linear-cox supports only the continuous loss".into()));
    }
    let fit = LinearCox::fit(&train.covariates(), &train.times(), &train.events(), LinearCoxOptions::default())?;
    let mut model = TrainedModel {
        predictor: Predictor::LinearCox(fit),
        loss: LossKind::Continuous,
        grid: None,
        baseline: None,
        preprocess,
    };
    model.fit_baseline(train)?;
    Ok(TrainOutcome {
        model,
        history: Vec::new(),
        rank_trace: RankTrace::default(),
        prune_events: Vec::new(),
        skipped_batches: 0,
        best_epoch: 0,
        tree_before: None,
        tree_after: None,
    })
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    train: &'a Dataset,
    val: Option<&'a Dataset>,
    preprocess: PreprocessSpec,
    grid: Option<TimeGrid>,
    net: ReluNetwork,
    mask: PruneMask,
    beta: f64,
}

struct Snapshot {
    net: ReluNetwork,
    mask: PruneMask,
    beta: f64,
    epoch: usize,
    score: f64,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a RunConfig, train: &'a Dataset, val: Option<&'a Dataset>, preprocess: PreprocessSpec) -> CliResult<Self> {
        let grid = match cfg.model.loss {
            LossKind::Continuous => None,
            LossKind::Discrete => Some(make_time_grid(&train.times(), &train.events(), cfg.model.bins)?),
        };
        let outputs = grid.as_ref().map_or(1, TimeGrid::bins);
        let net = ReluNetwork::init(train.dim(), &cfg.model.widths(), cfg.model.head, outputs, cfg.seed)?;
        Ok(Self {
            cfg,
            train,
            val,
            preprocess,
            grid,
            net,
            mask: PruneMask::new(cfg.prune.scope()),
            beta: cfg.optim.beta0,
        })
    }

    fn batch_loss(&self, outputs: &[Vec<f64>], times: &[f64], events: &[bool]) -> survrelu::Result<LossValue> {
        match &self.grid {
            None => cox_nll(&outputs.iter().map(|o| o[0]).collect::<Vec<_>>(), times, events),
            Some(g) => deephit_loss(outputs, times, events, g, self.cfg.model.rank_alpha, self.cfg.model.rank_sigma),
        }
    }

    fn model(&self, net: &ReluNetwork, mask: &PruneMask, beta: f64) -> CliResult<TrainedModel> {
        let mut m = TrainedModel {
            predictor: Predictor::Survrelu {
                net: net.clone(),
                mask: mask.clone(),
                beta,
            },
            loss: self.cfg.model.loss,
            grid: self.grid.clone(),
            baseline: None,
            preprocess: self.preprocess.clone(),
        };
        m.fit_baseline(self.train)?;
        Ok(m)
    }

    /// Hard-mode validation C^td of the current parameters and mask.
    fn val_ctd(&self, train_outputs: &[Vec<f64>]) -> CliResult<Option<f64>> {
        let Some(val) = self.val else {
            return Ok(None);
        };
        let baseline = match self.cfg.model.loss {
            LossKind::Continuous => {
                let eta: Vec<f64> = train_outputs.iter().map(|o| o[0]).collect();
                Some(BaselineHazard::fit(&eta, &self.train.times(), &self.train.events())?)
            }
            LossKind::Discrete => None,
        };
        let outputs: Vec<Vec<f64>> = hard_traces(&self.net, &self.mask, val)?.into_iter().map(|t| t.output).collect();
        let pred = prediction_from_outputs(&outputs, self.cfg.model.loss, self.grid.as_ref(), baseline.as_ref())?;
        match antolini_ctd(|i, t| pred.survival_at(i, t), &val.times(), &val.events()) {
            Ok(c) => Ok(Some(c.value)),
            Err(Error::NoComparablePairs) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// One scan-and-merge pass on the training set. Returns
    /// (leaves before, leaves after, merged count).
    fn prune_once(&mut self) -> CliResult<(usize, usize, usize)> {
        let (tree, _) = self.train_tree()?;
        let decisions = logrank_scan(&tree, self.cfg.prune.alpha_level, self.cfg.prune.n_min, self.cfg.prune.literal_inequality);
        let merged = decisions.iter().filter(|d| d.merge).count();
        self.mask = apply_prune(&self.mask, &decisions);
        let (after, _) = self.train_tree()?;
        Ok((tree.leaf_count(), after.leaf_count(), merged))
    }

    fn train_tree(&self) -> CliResult<(TreeNode, Vec<Vec<f64>>)> {
        let traces = hard_traces(&self.net, &self.mask, self.train)?;
        let o = build_pattern_matrix(&traces)?;
        let outputs: Vec<Vec<f64>> = traces.into_iter().map(|t| t.output).collect();
        let risks = self.model(&self.net, &self.mask, self.beta)?.predict(self.train)?.risk_scores();
        Ok((reconstruct_tree(&o, &self.train.times(), &self.train.events(), &risks)?, outputs))
    }

    fn run(mut self) -> CliResult<TrainOutcome> {
        let cfg = self.cfg;
        let o = &cfg.optim;
        let n = self.train.len();
        let xs = self.train.covariates();
        let times = self.train.times();
        let events = self.train.events();
        let mut sgd = Sgd::new(o.lr, o.momentum)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..n).collect();

        let mut history = Vec::new();
        let mut rank_trace = RankTrace::default();
        let mut since_prune = 0;
        let mut prune_events = Vec::new();
        let mut skipped = 0;
        let mut best: Option<Snapshot> = None;
        let mut stale = 0;

        for epoch in 1..=o.epochs {
            order.shuffle(&mut rng);
            let (mut loss_sum, mut batches) = (0.0, 0usize);
            for chunk in order.chunks(o.batch_size) {
                let b_times: Vec<f64> = chunk.iter().map(|&i| times[i]).collect();
                let b_events: Vec<bool> = chunk.iter().map(|&i| events[i]).collect();
                if !b_events.iter().any(|&e| e) {
                    skipped += 1;
                    continue;
                }
                let activation = if cfg.model.straight_through { Activation::Hard } else { Activation::Soft { beta: self.beta } };
                let traces = chunk
                    .iter()
                    .map(|&i| self.net.forward(xs[i], activation, Some(&self.mask)))
                    .collect::<survrelu::Result<Vec<_>>>()
                    .map_err(|e| numerical(epoch, e))?;
                let outputs: Vec<Vec<f64>> = traces.iter().map(|t| t.output.clone()).collect();
                let loss = self.batch_loss(&outputs, &b_times, &b_events).map_err(|e| numerical(epoch, e))?;
                if !loss.total.is_finite() {
                    return Err(CliError::Numerical(format!("epoch {epoch}: loss diverged")));
                }
                let grads = if cfg.model.straight_through {
                    self.net.backward_straight_through(&traces, &loss.grad, self.beta)
                } else {
                    self.net.backward(&traces, &loss.grad)
                }
                .map_err(|e| numerical(epoch, e))?;
                sgd.step(&mut self.net, &grads).map_err(|e| numerical(epoch, e))?;
                if o.lambda_sparsity > 0.0 {
                    self.net.soft_threshold(o.lambda_sparsity);
                }
                loss_sum += loss.total;
                batches += 1;
            }
            if !self.net.is_finite() {
                return Err(CliError::Numerical(format!("epoch {epoch}: parameters diverged")));
            }

            let traces = hard_traces(&self.net, &self.mask, self.train)?;
            let patterns = build_pattern_matrix(&traces)?;
            rank_trace.push(epoch, matrix_rank(&patterns), n, patterns.cols);
            let train_outputs: Vec<Vec<f64>> = traces.into_iter().map(|t| t.output).collect();

            let p = &cfg.prune;
            if p.enabled && epoch >= p.start_epoch && rank_trigger(&rank_trace.records[since_prune..], p.patience) {
                let val_ctd_before = self.val_ctd(&train_outputs)?;
                let (leaves_before, leaves_after, merged) = self.prune_once()?;
                let (_, outs) = self.train_tree()?;
                prune_events.push(PruneEvent {
                    epoch,
                    final_pass: false,
                    leaves_before,
                    leaves_after,
                    merged,
                    val_ctd_before,
                    val_ctd_after: self.val_ctd(&outs)?,
                });
                since_prune = rank_trace.records.len();
            }

            let (tree, train_outputs) = self.train_tree()?;
            let val_ctd = self.val_ctd(&train_outputs)?;
            history.push(EpochRecord {
                epoch,
                loss: (batches > 0).then(|| loss_sum / batches as f64),
                beta: self.beta,
                rank: rank_trace.records.last().map_or(0, |r| r.rank),
                leaves: tree.leaf_count(),
                val_ctd,
            });

            let score = val_ctd.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().map_or(true, |b| score > b.score) || self.val.is_none() {
                best = Some(Snapshot {
                    net: self.net.clone(),
                    mask: self.mask.clone(),
                    beta: self.beta,
                    epoch,
                    score,
                });
                stale = 0;
            } else {
                stale += 1;
                if stale >= o.early_stop {
                    break;
                }
            }
            self.beta = (self.beta * o.beta_growth).min(o.beta_max);
        }

        let best = best.ok_or_else(|| CliError::Numerical("no epoch completed".into()))?;
        self.net = best.net;
        self.mask = best.mask;
        self.beta = best.beta;

        let (tree_before, _) = self.train_tree()?;
        if cfg.prune.enabled {
            loop {
                let (_, outs) = self.train_tree()?;
                let val_ctd_before = self.val_ctd(&outs)?;
                let previous = self.mask.clone();
                let (leaves_before, leaves_after, merged) = self.prune_once()?;
                if self.mask == previous {
                    break;
                }
                let (_, outs) = self.train_tree()?;
                prune_events.push(PruneEvent {
                    epoch: best.epoch,
                    final_pass: true,
                    leaves_before,
                    leaves_after,
                    merged,
                    val_ctd_before,
                    val_ctd_after: self.val_ctd(&outs)?,
                });
            }
        }
        let (tree_after, _) = self.train_tree()?;
        let model = self.model(&self.net, &self.mask, self.beta)?;
        Ok(TrainOutcome {
            model,
            history,
            rank_trace,
            prune_events,
            skipped_batches: skipped,
            best_epoch: best.epoch,
            tree_before: Some(tree_before),
            tree_after: Some(tree_after),
        })
    }
}
