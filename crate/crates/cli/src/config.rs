use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survrelu::network::HeadKind;
use survrelu::simulate::SimConfig;
use survrelu::tree::MergeScope;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Simulated(SimConfig),
    Csv {
        path: PathBuf,
        time: String,
        event: String,
        #[serde(default)]
        features: Option<Vec<String>>,
        #[serde(default)]
        categorical: Vec<String>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Simulated(SimConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Survrelu,
    LinearCox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub layers: usize,
    /// Per-layer widths; all 1 when absent.
    pub widths: Option<Vec<usize>>,
    pub head: HeadKind,
    pub loss: LossKind,
    pub bins: usize,
    pub rank_alpha: f64,
    pub rank_sigma: f64,
    pub straight_through: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Survrelu,
            layers: 6,
            widths: None,
            head: HeadKind::Linear,
            loss: LossKind::Continuous,
            bins: 32,
            rank_alpha: 1.0,
            rank_sigma: 0.1,
            straight_through: false,
        }
    }
}

impl ModelConfig {
    pub fn widths(&self) -> Vec<usize> {
        self.widths.clone().unwrap_or_else(|| vec![1; self.layers])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub epochs: usize,
    pub lambda_sparsity: f64,
    pub beta0: f64,
    pub beta_growth: f64,
    pub beta_max: f64,
    /// Epochs without validation improvement before stopping.
    pub early_stop: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            batch_size: 1024,
            momentum: 0.9,
            epochs: 200,
            lambda_sparsity: 0.0,
            beta0: 1.0,
            beta_growth: 1.05,
            beta_max: 1e3,
            early_stop: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub enabled: bool,
    pub alpha_level: f64,
    pub n_min: usize,
    pub patience: usize,
    /// First epoch at which a rank-triggered prune may run.
    pub start_epoch: usize,
    pub literal_inequality: bool,
    /// Zero the merged node's layer and every deeper layer. Off by default:
    /// only the merged coordinate is zeroed.
    pub subtree_collapse: bool,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha_level: 0.05,
            n_min: 10,
            patience: 5,
            start_epoch: 20,
            literal_inequality: false,
            subtree_collapse: false,
        }
    }
}

impl PruneConfig {
    pub fn scope(&self) -> MergeScope {
        if self.subtree_collapse {
            MergeScope::Subtree
        } else {
            MergeScope::Coordinate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub bootstrap: usize,
    pub cv_folds: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            cv_folds: 5,
            split: [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub prune: PruneConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        let m = &self.model;
        if m.kind == ModelKind::Survrelu {
            if m.layers == 0 {
                return bad("model.layers must be at least 1".into());
            }
            if let Some(w) = &m.widths {
                if w.len() != m.layers || w.contains(&0) {
                    return bad(format!("model.widths must list {} positive widths", m.layers));
                }
            }
        }
        if m.loss == LossKind::Discrete && (m.bins < 2 || !(m.rank_sigma > 0.0) || !(m.rank_alpha >= 0.0)) {
            return bad("discrete loss needs bins >= 2, rank_sigma > 0, rank_alpha >= 0".into());
        }
        let o = &self.optim;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.momentum) || o.batch_size == 0 || o.epochs == 0 {
            return bad("optim needs lr > 0, momentum in [0, 1), batch_size > 0, epochs > 0".into());
        }
        if !(o.lambda_sparsity >= 0.0) || !(o.beta0 > 0.0) || !(o.beta_growth >= 1.0) || !(o.beta_max >= o.beta0) {
            return bad("optim needs lambda >= 0, beta0 > 0, beta_growth >= 1, beta_max >= beta0".into());
        }
        if !(self.prune.alpha_level > 0.0 && self.prune.alpha_level < 1.0) {
            return bad("prune.alpha_level must lie in (0, 1)".into());
        }
        if self.eval.bootstrap < 100 {
            return bad(format!("eval.bootstrap must be at least 100, got {}", self.eval.bootstrap));
        }
        if self.eval.cv_folds < 2 {
            return bad("eval.cv_folds must be at least 2".into());
        }
        if let DataSource::Simulated(sim) = &self.data {
            sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.optim.batch_size, 1024);
        assert_eq!(cfg.optim.lr, 0.1);
        assert_eq!(cfg.model.widths(), vec![1; 6]);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"model": {"layers": 30}, "seed": 4}"#).unwrap();
        assert_eq!(cfg.model.layers, 30);
        assert_eq!(cfg.prune.n_min, 10);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn small_bootstrap_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.eval.bootstrap = 50;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }
}
