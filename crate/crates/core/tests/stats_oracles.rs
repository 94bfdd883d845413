mod common;

use common::oracles::*;
use proptest::prelude::*;
use survrelu::stats::{antolini_ctd, chi2_sf, harrell_c, kaplan_meier, log_rank_test};

fn survival_data(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    // small integer times so ties are common
    (2..max_n).prop_flat_map(|n| (prop::collection::vec(1u8..20, n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(t, e)| (t.into_iter().map(f64::from).collect(), e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn harrell_matches_enumeration((t, e) in survival_data(200), seed in any::<u64>()) {
        let risks: Vec<f64> = (0..t.len()).map(|i| ((i as u64).wrapping_mul(seed | 1) % 7) as f64).collect();
        match (harrell_c(&risks, &t, &e), naive_harrell(&risks, &t, &e)) {
            (Ok(c), Some((v, pairs))) => {
                prop_assert_eq!(c.comparable_pairs, pairs);
                prop_assert_eq!(c.value, v);
            }
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn antolini_matches_enumeration((t, e) in survival_data(200), rates in prop::collection::vec(0u8..5, 200)) {
        // exponential curves with tied rates, evaluated in closed form
        let surv = |i: usize, s: f64| (-(rates[i] as f64) * 0.1 * s).exp();
        match (antolini_ctd(surv, &t, &e), naive_antolini(surv, &t, &e)) {
            (Ok(c), Some((v, pairs))) => {
                prop_assert_eq!(c.comparable_pairs, pairs);
                prop_assert_eq!(c.value, v);
            }
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn logrank_matches_tabulation((ta, ea) in survival_data(60), (tb, eb) in survival_data(60)) {
        let r = log_rank_test((&ta, &ea), (&tb, &eb)).unwrap();
        let (o, e, v) = logrank_oracle(&ta, &ea, &tb, &eb);
        prop_assert!((r.observed_a - o).abs() < 1e-9);
        prop_assert!((r.expected_a - e).abs() < 1e-9);
        if v > 0.0 {
            let stat = (o - e).powi(2) / v;
            prop_assert!((r.statistic - stat).abs() < 1e-9 * stat.max(1.0));
            prop_assert!((r.p_value - chi2_sf_by_quadrature(stat)).abs() < 1e-9);
        } else {
            prop_assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        }
    }

    #[test]
    fn logrank_is_symmetric_and_scale_free((ta, ea) in survival_data(40), (tb, eb) in survival_data(40), scale in 0.01f64..100.0) {
        let ab = log_rank_test((&ta, &ea), (&tb, &eb)).unwrap();
        let ba = log_rank_test((&tb, &eb), (&ta, &ea)).unwrap();
        prop_assert!((ab.statistic - ba.statistic).abs() < 1e-9 * ab.statistic.max(1.0));
        let sa: Vec<f64> = ta.iter().map(|t| t * scale).collect();
        let sb: Vec<f64> = tb.iter().map(|t| t * scale).collect();
        let scaled = log_rank_test((&sa, &ea), (&sb, &eb)).unwrap();
        prop_assert!((ab.statistic - scaled.statistic).abs() < 1e-9 * ab.statistic.max(1.0));
    }

    #[test]
    fn km_is_monotone_and_bounded((t, e) in survival_data(100)) {
        let km = kaplan_meier(&t, &e).unwrap();
        prop_assert!(km.survival.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(km.survival.iter().all(|&s| (0.0..=1.0).contains(&s)));
        prop_assert!(km.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn chi2_sf_matches_quadrature(x in 0.0f64..60.0) {
        prop_assert!((chi2_sf(x).unwrap() - chi2_sf_by_quadrature(x)).abs() < 1e-8);
    }
}

#[test]
fn chi2_sf_on_a_grid() {
    for k in 0..=400 {
        let x = k as f64 * 0.1;
        let (got, want) = (chi2_sf(x).unwrap(), chi2_sf_by_quadrature(x));
        assert!((got - want).abs() < 1e-8, "x={x}: {got} vs {want}");
    }
}

#[test]
fn km_hand_computed() {
    let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
    assert_eq!(km.survival, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
    let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
    assert_eq!(km.times, vec![1.0, 3.0]);
    assert_eq!(km.survival, vec![2.0 / 3.0, 0.0]);
}

#[test]
fn logrank_separated_groups() {
    let (ta, tb) = ([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]);
    let ev = [true; 3];
    let r = log_rank_test((&ta, &ev), (&tb, &ev)).unwrap();
    let (o, e, v) = logrank_oracle(&ta, &ev, &tb, &ev);
    assert!((r.statistic - (o - e).powi(2) / v).abs() < 1e-12);
    assert!(r.p_value < 0.05);
}
