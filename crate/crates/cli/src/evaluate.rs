use serde::{Deserialize, Serialize};
use survrelu::data::Dataset;
use survrelu::losses::SurvivalPrediction;
use survrelu::stats::{antolini_ctd, bootstrap_ci, harrell_c, BootstrapCi};
use survrelu::tree::TreeNode;

use crate::error::CliResult;
use crate::model::TrainedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub value: f64,
    pub comparable_pairs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<BootstrapCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub leaves: usize,
    pub depth: usize,
    pub split_p_values: Vec<f64>,
}

impl TreeSummary {
    pub fn of(tree: &TreeNode) -> Self {
        Self {
            leaves: tree.leaf_count(),
            depth: tree.split_depth(),
            split_p_values: tree.splits().iter().filter_map(|n| n.split.map(|s| s.p_value)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub events: usize,
    pub harrell: MetricReport,
    pub antolini: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
}

/// Survival of every subject at every observed time, indexed by the rank of
/// the query time among the sorted distinct times.
struct SurvivalTable {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SurvivalTable {
    fn new(pred: &SurvivalPrediction, times: &[f64]) -> Self {
        let mut grid = times.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let values = (0..pred.len()).map(|j| grid.iter().map(|&t| pred.survival_at(j, t)).collect()).collect();
        Self { grid, values }
    }

    fn at(&self, subject: usize, t: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g < t);
        self.values[subject][k]
    }
}

/// Point estimates, optionally with percentile bootstrap intervals.
pub fn concordance_report(pred: &SurvivalPrediction, times: &[f64], events: &[bool], bootstrap: Option<(usize, u64)>) -> CliResult<(MetricReport, MetricReport)> {
    let risks = pred.risk_scores();
    let table = SurvivalTable::new(pred, times);
    let h = harrell_c(&risks, times, events)?;
    let a = antolini_ctd(|j, t| table.at(j, t), times, events)?;
    let (mut harrell, mut antolini) = (
        MetricReport { value: h.value, comparable_pairs: h.comparable_pairs, ci: None },
        MetricReport { value: a.value, comparable_pairs: a.comparable_pairs, ci: None },
    );
    if let Some((b, seed)) = bootstrap {
        let pick = |idx: &[usize]| -> (Vec<f64>, Vec<bool>) { (idx.iter().map(|&i| times[i]).collect(), idx.iter().map(|&i| events[i]).collect()) };
        harrell.ci = Some(bootstrap_ci(
            |idx| {
                let (t, e) = pick(idx);
                let r: Vec<f64> = idx.iter().map(|&i| risks[i]).collect();
                Ok(harrell_c(&r, &t, &e)?.value)
            },
            times.len(),
            b,
            seed,
        )?);
        antolini.ci = Some(bootstrap_ci(
            |idx| {
                let (t, e) = pick(idx);
                Ok(antolini_ctd(|j, s| table.at(idx[j], s), &t, &e)?.value)
            },
            times.len(),
            b,
            seed,
        )?);
    }
    Ok((harrell, antolini))
}

/// Hard-mode evaluation of a model on preprocessed data.
pub fn evaluate(model: &TrainedModel, ds: &Dataset, bootstrap: Option<(usize, u64)>) -> CliResult<EvalReport> {
    let pred = model.predict(ds)?;
    let (harrell, antolini) = concordance_report(&pred, &ds.times(), &ds.events(), bootstrap)?;
    Ok(EvalReport {
        n: ds.len(),
        events: ds.records.iter().filter(|r| r.event).count(),
        harrell,
        antolini,
        tree: model.tree(ds)?.as_ref().map(TreeSummary::of),
        sparsity: model.network().map(|n| n.sparsity()),
    })
}
