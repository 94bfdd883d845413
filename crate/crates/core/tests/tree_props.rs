mod common;

use common::oracles::rational_rank;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survrelu::tree::{apply_prune, logrank_scan, matrix_rank, reconstruct_tree, MergeScope, PatternMatrix, PruneMask};

fn binary_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> Vec<Vec<u8>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_bool(density) as u8).collect()).collect()
}

#[test]
fn rank_matches_rational_elimination_on_100_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let rows = rng.gen_range(1..40);
        let cols = rng.gen_range(1..25);
        let density = rng.gen_range(0.05..0.95);
        let m = binary_matrix(&mut rng, rows, cols, density);
        let o = PatternMatrix::from_rows(&m, vec![1; cols]).unwrap();
        assert_eq!(matrix_rank(&o), rational_rank(&m), "case {case}: {m:?}");
    }
}

proptest! {
    #[test]
    fn rank_bounds(m in prop::collection::vec(prop::collection::vec(0u8..2, 6), 1..30)) {
        let o = PatternMatrix::from_rows(&m, vec![1; 6]).unwrap();
        let r = matrix_rank(&o);
        prop_assert_eq!(r, rational_rank(&m));
        prop_assert!(r <= o.distinct_rows().min(6));
    }
}

struct Cohort {
    bits: Vec<Vec<u8>>,
    times: Vec<f64>,
    events: Vec<bool>,
}

/// Patterns whose first and third coordinates drive the hazard.
fn cohort(seed: u64, n: usize, p: usize) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = binary_matrix(&mut rng, n, p, 0.5);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for row in &bits {
        let rate = (1.5 * row[0] as f64 - 1.0 * row[2.min(p - 1)] as f64).exp();
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let t = -u.ln() / rate;
        let c = rng.gen_range(0.0..3.0);
        times.push(t.min(c));
        events.push(t <= c);
    }
    Cohort { bits, times, events }
}

fn prune_to_fixpoint(c: &Cohort, scope: MergeScope, alpha: f64, n_min: usize) -> (Vec<usize>, survrelu::tree::TreeNode) {
    let p = c.bits[0].len();
    let mut mask = PruneMask::new(scope);
    let mut leaves = Vec::new();
    loop {
        let rows: Vec<Vec<u8>> = c.bits.iter().map(|b| mask.apply(b)).collect();
        let o = PatternMatrix::from_rows(&rows, (1..=p).collect()).unwrap();
        let tree = reconstruct_tree(&o, &c.times, &c.events, &vec![0.0; c.times.len()]).unwrap();
        leaves.push(tree.leaf_count());
        let decisions = logrank_scan(&tree, alpha, n_min, false);
        let next = apply_prune(&mask, &decisions);
        if next == mask {
            return (leaves, tree);
        }
        mask = next;
    }
}

#[test]
fn pruning_is_monotone_and_leaves_only_significant_splits() {
    for seed in 0..20 {
        for scope in [MergeScope::Subtree, MergeScope::Coordinate] {
            let c = cohort(seed, 400, 5);
            let (leaves, tree) = prune_to_fixpoint(&c, scope, 0.05, 10);
            assert!(leaves.windows(2).all(|w| w[1] <= w[0]), "{leaves:?}");
            for node in tree.splits() {
                let split = node.split.expect("two-branch node carries a test");
                assert!(split.p_value < 0.05);
                assert!(node.children.iter().all(|ch| ch.members.len() >= 10));
            }
        }
    }
}

#[test]
fn signal_survives_pruning() {
    let c = cohort(7, 2000, 4);
    let (_, tree) = prune_to_fixpoint(&c, MergeScope::Subtree, 0.05, 10);
    assert!(tree.leaf_count() >= 2);
}

#[test]
fn pruning_the_root_leaves_one_leaf() {
    let c = cohort(3, 300, 5);
    let mut mask = PruneMask::new(MergeScope::Subtree);
    mask.insert(Vec::new());
    let rows: Vec<Vec<u8>> = c.bits.iter().map(|b| mask.apply(b)).collect();
    let o = PatternMatrix::from_rows(&rows, vec![1; 5]).unwrap();
    let tree = reconstruct_tree(&o, &c.times, &c.events, &vec![0.0; 300]).unwrap();
    assert_eq!(tree.leaf_count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masks_only_merge(seed in any::<u64>(), picks in prop::collection::vec(prop::collection::vec(0u8..2, 0..4), 1..6)) {
        let c = cohort(seed, 120, 4);
        let layers: Vec<usize> = (1..=4).collect();
        let leaves = |m: &PruneMask| {
            let rows: Vec<Vec<u8>> = c.bits.iter().map(|b| m.apply(b)).collect();
            reconstruct_tree(&PatternMatrix::from_rows(&rows, layers.clone()).unwrap(), &c.times, &c.events, &vec![0.0; 120])
                .unwrap()
                .leaf_count()
        };
        for scope in [MergeScope::Subtree, MergeScope::Coordinate] {
            let mut mask = PruneMask::new(scope);
            let mut prev = leaves(&mask);
            for prefix in &picks {
                mask.insert(prefix.clone());
                let now = leaves(&mask);
                prop_assert!(now <= prev);
                prev = now;
            }
        }
    }

    #[test]
    fn masked_bits_are_idempotent(bits in prop::collection::vec(0u8..2, 6), prefixes in prop::collection::vec(prop::collection::vec(0u8..2, 0..5), 0..4)) {
        for scope in [MergeScope::Subtree, MergeScope::Coordinate] {
            let mut mask = PruneMask::new(scope);
            for p in &prefixes {
                mask.insert(p.clone());
            }
            let once = mask.apply(&bits);
            prop_assert_eq!(mask.apply(&once), once.clone());
            prop_assert!(once.iter().zip(&bits).all(|(a, b)| a <= b));
        }
    }
}
