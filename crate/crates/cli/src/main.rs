use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use survrelu::data::{load_csv, Schema};
use survrelu::network::HeadKind;
use survrelu::simulate::RiskKind;
use survrelu_cli::commands::{self, Sweep};
use survrelu_cli::config::{DataSource, LossKind, ModelKind, RunConfig};
use survrelu_cli::model::TrainedModel;
use survrelu_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "survrelu", version, about = "ReLU survival networks as pruned oblique survival trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset (CSV plus metadata sidecar).
    Simulate(RunArgs),
    /// Train, select on validation, evaluate on test and write run artifacts.
    Train(RunArgs),
    /// Evaluate a checkpoint on a CSV file.
    Evaluate(EvalArgs),
    /// Stratified k-fold cross-validation.
    CrossValidate(RunArgs),
    /// Sweep depth or sparsity strength and tabulate C^td, sparsity and leaves.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        sweep: SweepArg,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Export the tree of a checkpoint on a CSV file as DOT and JSON.
    ExportTree(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Depth,
    Lambda,
}

#[derive(Clone, Copy, ValueEnum)]
enum RiskArg {
    Linear,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Survrelu,
    LinearCox,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Continuous,
    Discrete,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// CSV data instead of simulation.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "event")]
    event_col: String,
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[arg(long, value_enum)]
    risk: Option<RiskArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    censoring: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width of an MLP head; a linear head when absent.
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Collapse the whole subtree below a merged node.
    #[arg(long)]
    subtree_merge: bool,
    #[arg(long)]
    no_prune: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "event")]
    event_col: String,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(path) = &self.data {
            cfg.data = DataSource::Csv {
                path: path.clone(),
                time: self.time_col.clone(),
                event: self.event_col.clone(),
                features: None,
                categorical: self.categorical.clone(),
            };
        }
        if let DataSource::Simulated(sim) = &mut cfg.data {
            if let Some(s) = self.seed {
                sim.seed = s;
            }
            if let Some(r) = self.risk {
                sim.risk = match r {
                    RiskArg::Linear => RiskKind::Linear,
                    RiskArg::Gaussian => RiskKind::Gaussian,
                };
            }
            set(&mut sim.n, self.n);
            set(&mut sim.d, self.d);
            set(&mut sim.censoring_fraction, self.censoring);
        } else if self.risk.is_some() || self.n.is_some() {
            return Err(CliError::Usage("--risk/--n apply to simulated data only".into()));
        }
        if let Some(m) = self.model {
            cfg.model.kind = match m {
                ModelArg::Survrelu => ModelKind::Survrelu,
                ModelArg::LinearCox => ModelKind::LinearCox,
            };
        }
        if let Some(l) = self.loss {
            cfg.model.loss = match l {
                LossArg::Continuous => LossKind::Continuous,
                LossArg::Discrete => LossKind::Discrete,
            };
        }
        if let Some(l) = self.layers {
            cfg.model.layers = l;
            cfg.model.widths = None;
        }
        if let Some(h) = self.mlp_hidden {
            cfg.model.head = HeadKind::Mlp { hidden: h };
        }
        set(&mut cfg.optim.epochs, self.epochs);
        set(&mut cfg.optim.lr, self.lr);
        set(&mut cfg.optim.lambda_sparsity, self.lambda);
        set(&mut cfg.eval.bootstrap, self.bootstrap);
        set(&mut cfg.eval.cv_folds, self.folds);
        if self.subtree_merge {
            cfg.prune.subtree_collapse = true;
        }
        if self.no_prune {
            cfg.prune.enabled = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_for_checkpoint(args: &EvalArgs) -> CliResult<survrelu::data::Dataset> {
    let model = TrainedModel::load(&args.checkpoint)?;
    let mut schema = Schema::new(&args.time_col, &args.event_col);
    schema.categorical = model.preprocess.categorical.iter().map(|c| c.name.clone()).collect();
    Ok(load_csv(&args.data, &schema)?)
}

fn write_json<T: serde::Serialize>(out: &Path, name: &str, value: &T) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(out.join(name), &text)?;
    println!("{text}");
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.config()?;
            let path = commands::cmd_simulate(&cfg, &args.out)?;
            println!("{}", path.display());
        }
        Command::Train(args) => {
            let cfg = args.config()?;
            let metrics = commands::cmd_train(&cfg, &args.out)?;
            println!("{}", serde_json::to_string_pretty(&metrics.test)?);
        }
        Command::Evaluate(args) => {
            let data = load_for_checkpoint(&args)?;
            let report = commands::cmd_evaluate(&args.checkpoint, &data, args.bootstrap, args.seed)?;
            write_json(&args.out, "evaluation.json", &report)?;
        }
        Command::CrossValidate(args) => {
            let cfg = args.config()?;
            let report = commands::cmd_cross_validate(&cfg)?;
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(args.out.join(commands::CONFIG_FILE), serde_json::to_string_pretty(&cfg)?)?;
            write_json(&args.out, "cv.json", &report)?;
        }
        Command::Ablate { run, sweep, values } => {
            let cfg = run.config()?;
            let sweep = match sweep {
                SweepArg::Depth => Sweep::Depth,
                SweepArg::Lambda => Sweep::Lambda,
            };
            let rows = commands::cmd_ablate(&cfg, sweep, &values)?;
            let csv = commands::ablation_csv(&rows);
            std::fs::create_dir_all(&run.out)?;
            std::fs::write(run.out.join("ablation.csv"), &csv)?;
            print!("{csv}");
        }
        Command::ExportTree(args) => {
            let data = load_for_checkpoint(&args)?;
            commands::cmd_export_tree(&args.checkpoint, &data, &args.out)?;
            println!("{}", args.out.join(commands::TREE_DOT_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
