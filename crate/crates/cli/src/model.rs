use std::path::Path;

use serde::{Deserialize, Serialize};
use survrelu::baseline::LinearCox;
use survrelu::data::{Dataset, PreprocessSpec};
use survrelu::losses::{BaselineHazard, SurvivalPrediction, TimeGrid};
use survrelu::network::{Activation, ForwardTrace, NetworkRecord, ReluNetwork};
use survrelu::tree::{build_pattern_matrix, reconstruct_tree, PatternMatrix, PruneMask, TreeNode};

use crate::config::{LossKind, ModelKind};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Survrelu { net: ReluNetwork, mask: PruneMask, beta: f64 },
    LinearCox(LinearCox),
}

/// A fitted model together with everything needed to score new data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub predictor: Predictor,
    pub loss: LossKind,
    pub grid: Option<TimeGrid>,
    pub baseline: Option<BaselineHazard>,
    pub preprocess: PreprocessSpec,
}

pub fn hard_traces(net: &ReluNetwork, mask: &PruneMask, ds: &Dataset) -> CliResult<Vec<ForwardTrace>> {
    ds.records
        .iter()
        .map(|r| net.forward(&r.covariates, Activation::Hard, Some(mask)).map_err(CliError::from))
        .collect()
}

/// Turns raw head outputs into survival curves. Continuous outputs need a
/// baseline hazard, discrete outputs a grid.
pub fn prediction_from_outputs(outputs: &[Vec<f64>], loss: LossKind, grid: Option<&TimeGrid>, baseline: Option<&BaselineHazard>) -> CliResult<SurvivalPrediction> {
    match loss {
        LossKind::Continuous => {
            let baseline = baseline.ok_or_else(|| CliError::Data("continuous model without baseline hazard".into()))?;
            Ok(SurvivalPrediction::continuous(outputs.iter().map(|o| o[0]).collect(), baseline.clone()))
        }
        LossKind::Discrete => {
            let grid = grid.ok_or_else(|| CliError::Data("discrete model without time grid".into()))?;
            Ok(SurvivalPrediction::discrete(outputs, grid.clone()))
        }
    }
}

impl TrainedModel {
    /// Hard-mode head outputs for already preprocessed records.
    pub fn outputs(&self, ds: &Dataset) -> CliResult<Vec<Vec<f64>>> {
        match &self.predictor {
            Predictor::Survrelu { net, mask, .. } => Ok(hard_traces(net, mask, ds)?.into_iter().map(|t| t.output).collect()),
            Predictor::LinearCox(m) => Ok(m.predict(&ds.covariates())?.into_iter().map(|v| vec![v]).collect()),
        }
    }

    /// Refits the Breslow baseline on training data (continuous loss only).
    pub fn fit_baseline(&mut self, train: &Dataset) -> CliResult<()> {
        if self.loss == LossKind::Continuous {
            let eta: Vec<f64> = self.outputs(train)?.iter().map(|o| o[0]).collect();
            self.baseline = Some(BaselineHazard::fit(&eta, &train.times(), &train.events())?);
        }
        Ok(())
    }

    pub fn predict(&self, ds: &Dataset) -> CliResult<SurvivalPrediction> {
        let out = self.outputs(ds)?;
        prediction_from_outputs(&out, self.loss, self.grid.as_ref(), self.baseline.as_ref())
    }

    pub fn pattern_matrix(&self, ds: &Dataset) -> CliResult<Option<PatternMatrix>> {
        match &self.predictor {
            Predictor::Survrelu { net, mask, .. } => Ok(Some(build_pattern_matrix(&hard_traces(net, mask, ds)?)?)),
            Predictor::LinearCox(_) => Ok(None),
        }
    }

    /// The tree induced on `ds` by the masked hard patterns.
    pub fn tree(&self, ds: &Dataset) -> CliResult<Option<TreeNode>> {
        let Some(o) = self.pattern_matrix(ds)? else {
            return Ok(None);
        };
        let risks = self.predict(ds)?.risk_scores();
        Ok(Some(reconstruct_tree(&o, &ds.times(), &ds.events(), &risks)?))
    }

    pub fn network(&self) -> Option<&ReluNetwork> {
        match &self.predictor {
            Predictor::Survrelu { net, .. } => Some(net),
            Predictor::LinearCox(_) => None,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let (model, network, beta, prune_mask, coefficients) = match &self.predictor {
            Predictor::Survrelu { net, mask, beta } => (ModelKind::Survrelu, Some(NetworkRecord::from(net)), Some(*beta), Some(mask.clone()), None),
            Predictor::LinearCox(m) => (ModelKind::LinearCox, None, None, None, Some(m.coefficients.clone())),
        };
        Checkpoint {
            model,
            network,
            beta,
            prune_mask,
            coefficients,
            loss: self.loss,
            time_grid: self.grid.clone(),
            baseline_hazard: self.baseline.clone(),
            preprocess: self.preprocess.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> CliResult<Self> {
        let missing = |what: &str| CliError::Data(format!("checkpoint is missing {what}"));
        let predictor = match c.model {
            ModelKind::Survrelu => Predictor::Survrelu {
                net: ReluNetwork::try_from(c.network.ok_or_else(|| missing("network"))?)?,
                mask: c.prune_mask.ok_or_else(|| missing("prune_mask"))?,
                beta: c.beta.ok_or_else(|| missing("beta"))?,
            },
            ModelKind::LinearCox => Predictor::LinearCox(LinearCox {
                coefficients: c.coefficients.ok_or_else(|| missing("coefficients"))?,
            }),
        };
        Ok(TrainedModel {
            predictor,
            loss: c.loss,
            grid: c.time_grid,
            baseline: c.baseline_hazard,
            preprocess: c.preprocess,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_mask: Option<PruneMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    pub loss: LossKind,
    #[serde(default)]
    pub time_grid: Option<TimeGrid>,
    #[serde(default)]
    pub baseline_hazard: Option<BaselineHazard>,
    pub preprocess: PreprocessSpec,
}
