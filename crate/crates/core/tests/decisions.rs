use hi3::prior::vague_priors;
use hi3::{build_table, build_tables, core_decision, next_action, Decision, DesignParams, DosePrior, TrialState};
use proptest::prelude::*;

/// `P(Bin(trials, p) <= k)` by direct summation.
fn binomial_cdf(k: u32, trials: u32, p: f64) -> f64 {
    let mut term = (1.0 - p).powi(trials as i32);
    let mut total = term;
    for i in 1..=k {
        term *= (trials - i + 1) as f64 / i as f64 * p / (1.0 - p);
        total += term;
    }
    total
}

fn textbook_i3(x: u32, n: u32) -> Decision {
    // p_t = 0.3, EI = [0.25, 0.35], uniform-prior safety rule at 0.95
    if binomial_cdf(x, n + 1, 0.3) > 0.95 {
        return Decision::DeEscalateUnacceptable;
    }
    if 4 * x < n {
        Decision::Escalate
    } else if 20 * x <= 7 * n || 4 * (x - 1) < n {
        Decision::Stay
    } else {
        Decision::DeEscalate
    }
}

#[test]
fn empty_history_reduces_to_i3() {
    let dp = DesignParams::default();
    let tables = build_tables(&vague_priors(5, &dp), &dp).unwrap();
    for table in &tables {
        assert_eq!(table.cells().count(), 135);
        for (n, x, d) in table.cells() {
            assert_eq!(d, textbook_i3(x, n), "dose {} n={n} x={x}", table.dose);
        }
    }
}

#[test]
fn known_i3_cells() {
    let dp = DesignParams::default();
    let table = build_table(1, &vague_priors(1, &dp)[0], &dp).unwrap();
    let row3: Vec<&str> = (0..=3).map(|x| table.get(3, x).unwrap().symbol()).collect();
    assert_eq!(row3, ["E", "S", "D", "DU"]);
    assert_eq!(table.get(4, 1), Some(Decision::Stay));
    assert_eq!(table.get(6, 2), Some(Decision::Stay));
    assert_eq!(table.get(6, 3), Some(Decision::DeEscalate));
}

#[test]
fn csv_round_trip() {
    let dp = DesignParams::default();
    let prior = DosePrior { a_star: 2.0, m: 7.0, p_star: 2.0 / 7.0, omega: 1.0 };
    let table = build_table(3, &prior, &dp).unwrap();
    let csv = table.to_csv();
    assert!(csv.starts_with("n,0,1,2,"));
    assert_eq!(hi3::DecisionTable::from_csv(3, &csv).unwrap(), table);
}

#[test]
fn first_cohort_paths() {
    let dp = DesignParams::default();
    let priors = vague_priors(5, &dp);
    let mut state = TrialState::new(5);
    state.record_cohort(0, 3).unwrap();
    assert_eq!(next_action(&mut state, &priors, &dp).unwrap(), Decision::Escalate);
    assert_eq!(state.current, 1);

    let mut state = TrialState::new(5);
    state.record_cohort(3, 3).unwrap();
    assert_eq!(next_action(&mut state, &priors, &dp).unwrap(), Decision::TerminateTrial);
    assert!(state.terminated);
}

fn prior_strategy() -> impl Strategy<Value = DosePrior> {
    (0.01f64..0.99, 0.01f64..9.0).prop_map(|(p, m)| DosePrior { a_star: p * m, m, p_star: p, omega: 1.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rows_never_get_more_aggressive(prior in prior_strategy()) {
        let dp = DesignParams::default();
        let table = build_table(1, &prior, &dp).unwrap();
        for row in &table.rows {
            for pair in row.windows(2) {
                prop_assert!(pair[0].aggressiveness() >= pair[1].aggressiveness(), "{row:?}");
            }
            // once unacceptable, every higher count is unacceptable too
            if let Some(first) = row.iter().position(|&d| d == Decision::DeEscalateUnacceptable) {
                prop_assert!(row[first..].iter().all(|&d| d == Decision::DeEscalateUnacceptable));
            }
        }
    }

    #[test]
    fn columns_never_get_less_aggressive(prior in prior_strategy(), x in 0u32..15) {
        let dp = DesignParams::default();
        let mut last = 0u8;
        for n in x.max(1)..=15 {
            let d = core_decision(x, n, prior.a_star, prior.m, &dp).unwrap();
            prop_assert!(d.aggressiveness() >= last);
            last = d.aggressiveness();
        }
    }

    #[test]
    fn borrowing_matches_pseudo_counts(x in 0u32..10, extra in 0u32..10, a in 0u32..6, m_extra in 0u32..6) {
        // whole-number pseudo data behave exactly like extra observed patients
        let n = x + extra + 1;
        let m = a + m_extra + 1;
        let dp = DesignParams::default();
        let borrowed = core_decision(x, n, a as f64, m as f64, &dp).unwrap();
        let pooled = core_decision(x + a, n + m, 0.0, 0.0, &dp).unwrap();
        prop_assert_eq!(borrowed, pooled);
    }
}
