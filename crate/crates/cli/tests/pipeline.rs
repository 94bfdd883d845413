use proptest::prelude::*;
use survrelu::simulate::RiskKind;
use survrelu::tree::TreeNode;
use survrelu_cli::commands::run;
use survrelu_cli::config::{DataSource, LossKind, RunConfig};
use survrelu_cli::model::TrainedModel;

fn small(seed: u64, risk: RiskKind, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    if let DataSource::Simulated(sim) = &mut cfg.data {
        sim.n = 900;
        sim.seed = seed;
        sim.risk = risk;
    }
    cfg.optim.epochs = epochs;
    cfg.prune.start_epoch = 5;
    cfg.eval.bootstrap = 100;
    cfg
}

fn branch_sizes(node: &TreeNode) -> (usize, usize) {
    (node.children[0].members.len(), node.children[1].members.len())
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    for loss in [LossKind::Continuous, LossKind::Discrete] {
        let mut cfg = small(2, RiskKind::Linear, 15);
        cfg.model.loss = loss;
        let r = run(&cfg, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        r.outcome.model.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, r.outcome.model);
        let test = &r.prepared.test;
        assert_eq!(back.outputs(test).unwrap(), r.outcome.model.outputs(test).unwrap());
    }
}

#[test]
fn huge_sparsity_penalty_leaves_a_single_leaf() {
    let mut cfg = small(5, RiskKind::Linear, 10);
    cfg.optim.lambda_sparsity = 10.0;
    let r = run(&cfg, false).unwrap();
    assert_eq!(r.metrics.test.sparsity, Some(1.0));
    assert_eq!(r.metrics.test.tree.as_ref().unwrap().leaves, 1);
}

#[test]
fn linear_cox_has_no_tree() {
    let mut cfg = small(1, RiskKind::Linear, 1);
    cfg.model.kind = survrelu_cli::config::ModelKind::LinearCox;
    let r = run(&cfg, false).unwrap();
    assert!(r.metrics.test.tree.is_none());
    assert!(r.metrics.test.antolini.value > 0.6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // post-convergence significance and per-event monotonicity on trained models
    #[test]
    fn final_tree_splits_are_significant(seed in 0u64..1000, gaussian in any::<bool>(), subtree in any::<bool>()) {
        let risk = if gaussian { RiskKind::Gaussian } else { RiskKind::Linear };
        let mut cfg = small(seed, risk, 25);
        cfg.prune.subtree_collapse = subtree;
        let r = run(&cfg, false).unwrap();
        let tree = r.outcome.tree_after.as_ref().unwrap();
        for node in tree.splits() {
            let p = node.split.unwrap().p_value;
            let (a, b) = branch_sizes(node);
            prop_assert!(p < cfg.prune.alpha_level, "surviving split with p = {p}");
            prop_assert!(a >= cfg.prune.n_min && b >= cfg.prune.n_min);
        }
        for e in &r.outcome.prune_events {
            prop_assert!(e.leaves_after <= e.leaves_before);
        }
    }
}
