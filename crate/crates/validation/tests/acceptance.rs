//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially in a
//! single test so the runtime check sees one core. INFO lines carry context
//! and never affect the verdict. Lines go straight to stdout, past the test
//! harness capture, so they show whether or not the suite passes.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::io::Write;
use std::time::Instant;

use oracles::{central_differences, chi2_sf_by_quadrature, logrank_oracle, max_relative_error, naive_antolini, naive_harrell, rational_rank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use survrelu::data::split_indices;
use survrelu::losses::{cox_nll, deephit_loss, TimeGrid};
use survrelu::network::{Activation, HeadKind, ReluNetwork};
use survrelu::simulate::{risk_gaussian, RiskKind};
use survrelu::stats::{antolini_ctd, chi2_sf, harrell_c, kaplan_meier, log_rank_test};
use survrelu::tree::{matrix_rank, MergeScope, PatternMatrix, PruneMask};
use survrelu_cli::commands::{cmd_ablate, cmd_cross_validate, load_raw, run, RunResult, Sweep};
use survrelu_cli::config::{DataSource, LossKind, ModelKind, RunConfig};
use survrelu_cli::model::{Predictor, TrainedModel};

const SEED: u64 = 1;

const LINEAR_CTD_MIN: f64 = 0.76;
const GAUSSIAN_CTD_MIN: f64 = 0.62;
const LINEAR_COX_BAND: (f64, f64) = (0.45, 0.57);
const DISCRETE_CTD_MIN: f64 = 0.76;
const RUNTIME_LIMIT_S: f64 = 300.0;
const METABRIC_TARGET: f64 = 0.679;
const METABRIC_TOL: f64 = 0.04;
const METABRIC_ENV: &str = "SURVRELU_METABRIC_CSV";

const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_ABS_FLOOR: f64 = 1e-6;
const FD_INSTANCES: u64 = 20;

const LOGRANK_TOL: f64 = 1e-9;
const CHI2_TOL: f64 = 1e-8;
const CONCORDANCE_INSTANCES: u64 = 50;

const ALPHA: f64 = 0.05;
const N_MIN: usize = 10;
const RANK_MATRICES: u64 = 100;

const LAMBDAS: [f64; 4] = [0.0, 0.01, 0.05, 0.1];
const DETERMINISM_TOL: f64 = 1e-12;
const SHIFT_TOL: f64 = 1e-9;

#[derive(Default)]
struct Verdicts {
    failed: Vec<String>,
}

fn say(line: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

impl Verdicts {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        say(format!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" }));
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

fn info(detail: String) {
    say(format!("INFO {detail}"));
}

fn sim_config(risk: RiskKind, layers: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = SEED;
    cfg.model.layers = layers;
    if let DataSource::Simulated(sim) = &mut cfg.data {
        sim.risk = risk;
        sim.seed = SEED;
    }
    cfg
}

fn ctd(r: &RunResult) -> f64 {
    r.metrics.test.antolini.value
}

fn ci(r: &RunResult) -> String {
    match &r.metrics.test.antolini.ci {
        Some(c) => format!("({:.3}, {:.3})", c.lower, c.upper),
        None => String::from("(no CI)"),
    }
}

/// Harrell C of the generating risk on the test split of `cfg`.
fn gaussian_oracle(cfg: &RunConfig) -> f64 {
    let raw = load_raw(cfg).unwrap();
    let DataSource::Simulated(sim) = &cfg.data else { unreachable!() };
    let (a, b, c) = (cfg.eval.split[0], cfg.eval.split[1], cfg.eval.split[2]);
    let [_, _, test] = split_indices(raw.len(), (a, b, c), cfg.seed).unwrap();
    let ds = raw.subset(&test);
    let risk: Vec<f64> = ds.covariates().iter().map(|x| risk_gaussian(x, sim.r_max, sim.risk_sigma)).collect();
    harrell_c(&risk, &ds.times(), &ds.events()).unwrap().value
}

fn final_tree_violations(r: &RunResult) -> usize {
    let tree = r.outcome.tree_after.as_ref().unwrap();
    tree.splits()
        .iter()
        .filter(|n| {
            let p = n.split.unwrap().p_value;
            p >= ALPHA || n.children.iter().any(|c| c.members.len() < N_MIN)
        })
        .count()
}

fn nonincreasing_events(r: &RunResult) -> bool {
    r.outcome.prune_events.iter().all(|e| e.leaves_after <= e.leaves_before)
}

fn root_prune_leaves(r: &RunResult) -> usize {
    let Predictor::Survrelu { net, beta, .. } = &r.outcome.model.predictor else { unreachable!() };
    let mut mask = PruneMask::new(MergeScope::Subtree);
    mask.insert(vec![]);
    let mut model = TrainedModel {
        predictor: Predictor::Survrelu { net: net.clone(), mask, beta: *beta },
        ..r.outcome.model.clone()
    };
    model.fit_baseline(&r.prepared.train).unwrap();
    model.tree(&r.prepared.train).unwrap().unwrap().leaf_count()
}

fn gradient_error(seed: u64, discrete: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let d = 4;
    let grid = TimeGrid::new(vec![1.0, 2.0, 3.5]).unwrap();
    let outputs = if discrete { grid.bins() } else { 1 };
    let head = if discrete { HeadKind::Mlp { hidden: 4 } } else { HeadKind::Linear };
    let net = ReluNetwork::init(d, &[1, 1, 1], head, outputs, seed).unwrap();
    let x: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let times: Vec<f64> = (0..8).map(|_| rng.gen_range(0.1..5.0)).collect();
    let mut events: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.6)).collect();
    events[0] = true;
    let beta = rng.gen_range(0.5..3.0);
    let eval = |net: &ReluNetwork| {
        let traces: Vec<_> = x.iter().map(|xi| net.forward(xi, Activation::Soft { beta }, None).unwrap()).collect();
        let outs: Vec<Vec<f64>> = traces.iter().map(|t| t.output.clone()).collect();
        let l = if discrete {
            deephit_loss(&outs, &times, &events, &grid, 1.0, 0.1).unwrap()
        } else {
            cox_nll(&outs.iter().map(|o| o[0]).collect::<Vec<_>>(), &times, &events).unwrap()
        };
        (l.total, traces, l.grad)
    };
    let (_, traces, grad) = eval(&net);
    let analytic = net.backward(&traces, &grad).unwrap().flatten();
    let mut probe = net.clone();
    let numeric = central_differences(&net.parameters(), FD_STEP, |p| {
        probe.set_parameters(p).unwrap();
        eval(&probe).0
    });
    max_relative_error(&analytic, &numeric, FD_ABS_FLOOR)
}

fn random_survival(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let t = (0..n).map(|_| f64::from(rng.gen_range(1u8..25))).collect();
    let e = (0..n).map(|_| rng.gen_bool(0.6)).collect();
    (t, e)
}

fn json_close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= tol,
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_close(p, q, tol)),
        (Value::Object(x), Value::Object(y)) => x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w, tol))),
        _ => a == b,
    }
}

#[test]
fn acceptance() {
    let mut v = Verdicts::default();
    say(String::new());

    // 1: linear simulation, continuous loss, L = 6
    let lin_cfg = sim_config(RiskKind::Linear, 6);
    let start = Instant::now();
    let lin = run(&lin_cfg, true).unwrap();
    let secs = start.elapsed().as_secs_f64();
    v.record(
        "1",
        ctd(&lin) >= LINEAR_CTD_MIN && secs < RUNTIME_LIMIT_S,
        format!(
            "linear sim test C^td = {:.4} {} (need >= {LINEAR_CTD_MIN}), {} leaves, runtime {secs:.1} s (need < {RUNTIME_LIMIT_S} s)",
            ctd(&lin),
            ci(&lin),
            lin.metrics.test.tree.as_ref().unwrap().leaves
        ),
    );
    let mut lin_cox_cfg = lin_cfg.clone();
    lin_cox_cfg.model.kind = ModelKind::LinearCox;
    let lin_cox = run(&lin_cox_cfg, false).unwrap();
    info(format!("linear sim: linear-Cox test C^td = {:.4} (correctly specified reference)", ctd(&lin_cox)));
    let mut subtree_cfg = lin_cfg.clone();
    subtree_cfg.prune.subtree_collapse = true;
    let subtree = run(&subtree_cfg, false).unwrap();
    info(format!(
        "linear sim with subtree-collapse merging: test C^td = {:.4}, {} leaves",
        ctd(&subtree),
        subtree.metrics.test.tree.as_ref().unwrap().leaves
    ));

    // 2: gaussian simulation, L = 30, plus the linear-Cox gap
    let gauss_cfg = sim_config(RiskKind::Gaussian, 30);
    let gauss = run(&gauss_cfg, true).unwrap();
    let mut cox_cfg = gauss_cfg.clone();
    cox_cfg.model.kind = ModelKind::LinearCox;
    let cox = run(&cox_cfg, false).unwrap();
    let oracle = gaussian_oracle(&gauss_cfg);
    let in_band = (LINEAR_COX_BAND.0..=LINEAR_COX_BAND.1).contains(&ctd(&cox));
    v.record(
        "2",
        ctd(&gauss) >= GAUSSIAN_CTD_MIN && in_band,
        format!(
            "gaussian sim test C^td = {:.4} {} (need >= {GAUSSIAN_CTD_MIN}); linear-Cox C^td = {:.4} (need in [{}, {}]); generating-risk oracle Harrell C = {oracle:.4}",
            ctd(&gauss),
            ci(&gauss),
            ctd(&cox),
            LINEAR_COX_BAND.0,
            LINEAR_COX_BAND.1
        ),
    );

    // 3: discrete loss on the linear simulation
    let mut disc_cfg = lin_cfg.clone();
    disc_cfg.model.loss = LossKind::Discrete;
    let disc = run(&disc_cfg, true).unwrap();
    v.record(
        "3",
        ctd(&disc) >= DISCRETE_CTD_MIN,
        format!("discrete loss, linear sim test C^td = {:.4} {} (need >= {DISCRETE_CTD_MIN})", ctd(&disc), ci(&disc)),
    );

    // 4: METABRIC, only with user-supplied data
    match std::env::var(METABRIC_ENV) {
        Ok(path) => {
            let mut cfg = RunConfig::default();
            cfg.seed = SEED;
            cfg.model.layers = 14;
            cfg.data = DataSource::Csv {
                path: path.into(),
                time: std::env::var("SURVRELU_METABRIC_TIME").unwrap_or_else(|_| "time".into()),
                event: std::env::var("SURVRELU_METABRIC_EVENT").unwrap_or_else(|_| "event".into()),
                features: None,
                categorical: Vec::new(),
            };
            let report = cmd_cross_validate(&cfg).unwrap();
            v.record(
                "4",
                (report.antolini_mean - METABRIC_TARGET).abs() <= METABRIC_TOL,
                format!(
                    "METABRIC 5-fold C^td = {:.4} +- {:.4} (need within {METABRIC_TOL} of {METABRIC_TARGET})",
                    report.antolini_mean, report.antolini_std
                ),
            );
        }
        Err(_) => say(format!("SKIP criterion 4: set {METABRIC_ENV} to a METABRIC CSV to run the conditional check")),
    }

    // 5: gradients of both losses through the soft network
    let cont: Vec<f64> = (0..FD_INSTANCES).map(|s| gradient_error(s, false)).collect();
    let disc_err: Vec<f64> = (0..FD_INSTANCES).map(|s| gradient_error(s, true)).collect();
    let worst = cont.iter().chain(&disc_err).copied().fold(0.0, f64::max);
    v.record(
        "5",
        worst < FD_REL_TOL,
        format!("{} continuous + {} discrete finite-difference instances, worst relative error {worst:.2e} (need < {FD_REL_TOL:e})", cont.len(), disc_err.len()),
    );

    // 6: statistical oracles
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut conc_ok = true;
    let mut lr_err: f64 = 0.0;
    let mut p_err: f64 = 0.0;
    for _ in 0..CONCORDANCE_INSTANCES {
        let n = rng.gen_range(2..=200);
        let (t, e) = random_survival(&mut rng, n);
        let risk: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0u8..10))).collect();
        let surv: Vec<Vec<f64>> = (0..n).map(|_| (0..25).map(|_| f64::from(rng.gen_range(0u8..5))).collect()).collect();
        let s = |i: usize, t: f64| surv[i][t as usize];
        let ours = (harrell_c(&risk, &t, &e).ok(), antolini_ctd(s, &t, &e).ok());
        let naive = (naive_harrell(&risk, &t, &e), naive_antolini(s, &t, &e));
        conc_ok &= ours.0.map(|c| (c.value, c.comparable_pairs)) == naive.0 && ours.1.map(|c| (c.value, c.comparable_pairs)) == naive.1;

        let split = rng.gen_range(1..n);
        let (ta, tb) = t.split_at(split);
        let (ea, eb) = e.split_at(split);
        let r = log_rank_test((ta, ea), (tb, eb)).unwrap();
        let (o, ex, var) = logrank_oracle(ta, ea, tb, eb);
        let (stat, p) = if var > 0.0 { ((o - ex).powi(2) / var, chi2_sf_by_quadrature((o - ex).powi(2) / var)) } else { (0.0, 1.0) };
        lr_err = lr_err.max((r.statistic - stat).abs());
        p_err = p_err.max((r.p_value - p).abs());
    }
    let chi_err = (0..=600).map(|k| f64::from(k) * 0.1).map(|x| (chi2_sf(x).unwrap() - chi2_sf_by_quadrature(x)).abs()).fold(0.0, f64::max);
    let km_all = kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
    let km_cens = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
    let km_ok = km_all.survival == [2.0 / 3.0, 1.0 / 3.0, 0.0] && km_cens.times == [1.0, 3.0] && km_cens.survival == [2.0 / 3.0, 0.0];
    v.record(
        "6",
        conc_ok && lr_err < LOGRANK_TOL && p_err < LOGRANK_TOL && chi_err < CHI2_TOL && km_ok,
        format!(
            "concordance exact on {CONCORDANCE_INSTANCES} instances: {conc_ok}; log-rank max |diff| stat {lr_err:.1e}, p {p_err:.1e} (need < {LOGRANK_TOL:e}); chi2_sf max |diff| {chi_err:.1e} (need < {CHI2_TOL:e}); KM hand values exact: {km_ok}"
        ),
    );

    // 7: pruning properties on the trained runs
    let events_ok = [&lin, &gauss, &disc].iter().all(|r| nonincreasing_events(r));
    let violations: usize = [&lin, &gauss, &disc].iter().map(|r| final_tree_violations(r)).sum();
    let root_leaves = root_prune_leaves(&lin);
    v.record(
        "7",
        events_ok && violations == 0 && root_leaves == 1,
        format!(
            "every prune event has leaves_after <= leaves_before: {events_ok}; final-tree splits with p >= {ALPHA} or a branch < {N_MIN}: {violations}; root prune leaves: {root_leaves}"
        ),
    );
    for (name, r) in [("linear", &lin), ("gaussian", &gauss)] {
        let seq: Vec<String> = r.outcome.prune_events.iter().map(|e| format!("{}->{}", e.leaves_before, e.leaves_after)).collect();
        info(format!("{name} prune events (leaves before->after): {}", seq.join(" ")));
    }

    // 8: rank behaviour
    let trace = &gauss.outcome.rank_trace.records;
    let (first, last) = (trace.first().unwrap(), trace.last().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rank_ok = (0..RANK_MATRICES).all(|_| {
        let (rows, cols) = (rng.gen_range(1..40), rng.gen_range(1..25));
        let density = rng.gen_range(0.05..0.95);
        let m: Vec<Vec<u8>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_bool(density) as u8).collect()).collect();
        matrix_rank(&PatternMatrix::from_rows(&m, vec![1; cols]).unwrap()) == rational_rank(&m)
    });
    v.record(
        "8",
        last.rank_ratio < first.rank_ratio && rank_ok,
        format!(
            "gaussian rank ratio {:.3} (epoch {}) -> {:.3} (epoch {}); matrix_rank equals exact elimination on {RANK_MATRICES} matrices: {rank_ok}",
            first.rank_ratio, first.epoch, last.rank_ratio, last.epoch
        ),
    );

    // 9: sparsity ablation on the gaussian set
    let rows = cmd_ablate(&gauss_cfg, Sweep::Lambda, &LAMBDAS).unwrap();
    let sparsity: Vec<f64> = rows.iter().map(|r| r.sparsity.unwrap_or(f64::NAN)).collect();
    let ctds: Vec<f64> = rows.iter().map(|r| r.ctd.unwrap_or(f64::NAN)).collect();
    let monotone = sparsity.windows(2).all(|w| w[0] <= w[1]);
    v.record(
        "9",
        monotone && ctds[ctds.len() - 1] <= ctds[0],
        format!("lambda {LAMBDAS:?}: sparsity {sparsity:.3?}, C^td {ctds:.3?}"),
    );

    // 10: determinism
    let again = run(&lin_cfg, true).unwrap();
    let a = serde_json::to_value(&lin.metrics).unwrap();
    let b = serde_json::to_value(&again.metrics).unwrap();
    v.record("10", json_close(&a, &b, DETERMINISM_TOL), format!("two seeded linear runs give metrics.json equal field-wise within {DETERMINISM_TOL:e}"));

    // 11: Cox loss shift invariance
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..60);
        let (t, mut e) = random_survival(&mut rng, n);
        e[0] = true;
        let eta: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c = rng.gen_range(-50.0..50.0);
        let shifted: Vec<f64> = eta.iter().map(|x| x + c).collect();
        let (l0, l1) = (cox_nll(&eta, &t, &e).unwrap(), cox_nll(&shifted, &t, &e).unwrap());
        worst = worst.max((l0.total - l1.total).abs());
        for (g0, g1) in l0.grad.iter().zip(&l1.grad) {
            worst = worst.max((g0[0] - g1[0]).abs());
        }
    }
    v.record("11", worst < SHIFT_TOL, format!("max change in Cox loss/gradient under additive shift {worst:.1e} (need < {SHIFT_TOL:e})"));

    assert!(v.failed.is_empty(), "failed criteria: {}", v.failed.join(", "));
}
