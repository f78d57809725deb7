use mts_milp::{solve_lp, solve_milp, LpOptions, LpStatus, MilpOptions, MilpStatus, Sense, StandardForm};
use proptest::prelude::*;

/// Small bounded instances: every variable lives in an integer box [0, u].
fn arb_bounded(max_n: usize, max_m: usize) -> impl Strategy<Value = StandardForm> {
    (1..=max_n, 1..=max_m)
        .prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec((0i32..=3, -4i32..=4), n),
                proptest::collection::vec((proptest::collection::vec(-3i32..=3, n), 0u8..3, -2i32..=8), m),
            )
        })
        .prop_map(|(vars, rows)| {
            let mut sf = StandardForm::new();
            for (j, (u, c)) in vars.iter().enumerate() {
                sf.add_var(0.0, *u as f64, true, *c as f64, format!("x{j}"));
            }
            for (i, (a, s, b)) in rows.into_iter().enumerate() {
                let coefs = a.iter().enumerate().map(|(j, v)| (j, *v as f64)).collect();
                let sense = [Sense::Le, Sense::Ge, Sense::Eq][s as usize];
                sf.add_row(coefs, sense, b as f64, format!("r{i}"));
            }
            sf
        })
}

fn enumerate_best(sf: &StandardForm) -> Option<f64> {
    let n = sf.num_vars();
    let mut x = vec![0.0; n];
    let mut best: Option<f64> = None;
    loop {
        if sf.max_violation(&x) < 1e-9 {
            let v = sf.objective(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
        let mut j = 0;
        loop {
            if j == n {
                return best;
            }
            if x[j] < sf.ub[j] {
                x[j] += 1.0;
                break;
            }
            x[j] = 0.0;
            j += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn milp_matches_enumeration(sf in arb_bounded(4, 3)) {
        let r = solve_milp(&sf, &MilpOptions::default());
        match enumerate_best(&sf) {
            None => prop_assert_eq!(r.status, MilpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(r.status, MilpStatus::Optimal);
                prop_assert!((r.objective - best).abs() < 1e-7, "{} vs {}", r.objective, best);
                prop_assert!(sf.max_violation(&r.x) < 1e-7);
            }
        }
    }

    #[test]
    fn lp_optimum_satisfies_strong_duality(sf in arb_bounded(5, 4)) {
        let relaxed = sf.relaxation();
        let r = solve_lp(&relaxed, &LpOptions::default());
        prop_assert!(r.status != LpStatus::Failed && r.status != LpStatus::Unbounded);
        if r.status == LpStatus::Optimal {
            prop_assert!(relaxed.max_violation(&r.x) < 1e-7);
            prop_assert!((r.dual_objective(&relaxed) - r.objective).abs() < 1e-6);
            prop_assert!(r.complementarity(&relaxed) < 1e-6);
            let milp = solve_milp(&sf, &MilpOptions::default());
            if milp.status == MilpStatus::Optimal {
                prop_assert!(r.objective <= milp.objective + 1e-7);
            }
        }
    }

    #[test]
    fn repeated_solves_are_bitwise_identical(sf in arb_bounded(5, 4)) {
        let a = solve_milp(&sf, &MilpOptions::default());
        let b = solve_milp(&sf, &MilpOptions::default());
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        prop_assert!(a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
