use hi3::prior::vague_priors;
use hi3::sim::{
    efficiency_sweep, generate_historical_data, generate_random_scenarios, replication_rng, run_trial, run_trial_with_rng,
    simulate_batch, simulate_design, true_mtd, TrueMtd,
};
use hi3::{Design, DesignParams, HistoricalData, Scenario};
use proptest::prelude::*;

fn scenario(label: &str, p: &[f64]) -> Scenario {
    Scenario::new(label, p.to_vec()).unwrap()
}

#[test]
fn certain_toxicity_terminates() {
    let dp = DesignParams::default();
    let sc = scenario("toxic", &[1.0, 1.0, 1.0]);
    for seed in 0..20 {
        let outcome = run_trial(&sc, &vague_priors(3, &dp), &dp, seed).unwrap();
        assert!(outcome.state.terminated);
        assert_eq!(outcome.state.total_patients(), 3);
        assert_eq!(outcome.mtd.selected, None);
    }
}

#[test]
fn zero_toxicity_climbs_to_the_top() {
    let dp = DesignParams::default();
    let sc = scenario("safe", &[0.0; 5]);
    let outcome = run_trial(&sc, &vague_priors(5, &dp), &dp, 9).unwrap();
    assert_eq!(outcome.state.n, vec![3, 3, 3, 3, 18]);
    assert_eq!(outcome.mtd.selected, Some(4));
}

#[test]
fn i3_scenario_two_selection() {
    let dp = DesignParams::default();
    let sc = scenario("s2", &[0.15, 0.27, 0.40, 0.50, 0.65]);
    let hist = HistoricalData::empty(5);
    let summary = simulate_design(Design::I3Plus3, &sc, &hist, &dp, 10_000, 17).unwrap();
    assert!((summary.pcs - 0.493).abs() <= 0.05, "pcs {}", summary.pcs);
    let parts = summary.pcs + summary.sel_over + summary.sel_under + summary.none_sel;
    assert!((parts - 1.0).abs() < 1e-9);
    let patients = summary.pat_at + summary.pat_over + summary.pat_under;
    assert!((patients - 1.0).abs() < 1e-9);
}

#[test]
fn summaries_are_reproducible() {
    let dp = DesignParams::default();
    let sc = scenario("s11", &[0.05, 0.10, 0.20, 0.30, 0.45]);
    let hist = HistoricalData::new(vec![2.0, 0.0, 6.0, 0.0, 0.0], vec![9.0, 3.0, 18.0, 0.0, 0.0]).unwrap();
    let a = simulate_batch(&sc, &hist, &dp, 500, 3).unwrap();
    let b = simulate_batch(&sc, &hist, &dp, 500, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = simulate_batch(&sc, &hist, &dp, 500, 4).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sweep_shares_the_calibration() {
    let dp = DesignParams::default();
    let sc = scenario("s14-1", &[0.08, 0.15, 0.31, 0.48, 0.55]);
    let hist = HistoricalData::new(vec![0.0, 3.0, 5.0, 0.0, 0.0], vec![3.0, 15.0, 12.0, 0.0, 0.0]).unwrap();
    let rows = efficiency_sweep(&sc, &hist, &dp, &[24, 30], 300, 5).unwrap();
    assert_eq!(rows.iter().map(|r| r.max_n).collect::<Vec<_>>(), vec![24, 30]);
    let direct = simulate_batch(&sc, &hist, &dp, 300, 5).unwrap();
    assert_eq!(rows[1], direct);
}

#[test]
fn historical_trials_have_thirty_patients() {
    let dp = DesignParams::default();
    let sc = scenario("s2", &[0.15, 0.27, 0.40, 0.50, 0.65]);
    for seed in 0..20 {
        let hist = generate_historical_data(&sc, &dp, seed).unwrap();
        let total: f64 = hist.n.iter().sum();
        assert!(total == 30.0 || hist.n[0] == total, "{hist:?}");
        assert!(hist.x.iter().zip(&hist.n).all(|(x, n)| x <= n));
    }
}

#[test]
fn mtd_location_is_roughly_uniform() {
    let dp = DesignParams::default();
    let scenarios = generate_random_scenarios(10_000, 5, &dp, 99).unwrap();
    let mut counts = [0usize; 6];
    for sc in &scenarios {
        sc.validate().unwrap();
        let slot = match true_mtd(sc, &dp) {
            TrueMtd::Doses(d) if sc.true_probs[d[0]] >= dp.ei_lower() => d[0],
            TrueMtd::Doses(_) => panic!("sampler always places a dose in the interval: {sc:?}"),
            TrueMtd::None => 5,
        };
        counts[slot] += 1;
    }
    let expected = 10_000.0 / 6.0;
    for c in counts {
        assert!((c as f64 - expected).abs() <= 0.2 * expected, "{counts:?}");
    }
}

#[test]
fn single_dose_scenarios() {
    let dp = DesignParams::default();
    for sc in generate_random_scenarios(100, 1, &dp, 1).unwrap() {
        assert!(sc.true_probs[0] > 0.0 && sc.true_probs[0] < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trials_respect_the_sample_size(seed in any::<u64>(), rep in any::<u64>(), scale in 0.0f64..1.0) {
        let dp = DesignParams::default();
        let p: Vec<f64> = [0.05, 0.12, 0.25, 0.4, 0.6].iter().map(|v| v * scale * 2.0).map(|v: f64| v.min(1.0)).collect();
        let sc = scenario("p", &p);
        let outcome = run_trial_with_rng(&sc, &vague_priors(5, &dp), &dp, &mut replication_rng(seed, rep)).unwrap();
        let state = &outcome.state;
        prop_assert!(state.total_patients() <= dp.max_n);
        prop_assert!(state.terminated || state.total_patients() == dp.max_n);
        prop_assert!(state.x.iter().zip(&state.n).all(|(x, n)| x <= n));
        if let Some(d) = outcome.mtd.selected {
            prop_assert!(state.n[d] > 0);
            prop_assert!(outcome.mtd.d_safe.contains(&d));
        }
    }
}
