use chaos_descent::problem::{make_coupled_quadratic, make_quadratic, Coupling, Target};
use chaos_descent::solver::{self, Method, SolverConfig, StepPolicy, TruncationSchedule};
use chaos_descent::BasisSpec;
use proptest::prelude::*;

fn spec() -> BasisSpec {
    BasisSpec::trigonometric(256).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn paper_schedule_is_nondecreasing(k in 0usize..100_000) {
        let s = TruncationSchedule::PaperSqrt;
        prop_assert!(s.level(k) <= s.level(k + 1));
        prop_assert!(s.level(k + 1) - s.level(k) <= 1);
    }

    #[test]
    fn exact_fixed_gd_never_increases_error(m in 1usize..40, mu in 0.1f64..5.0, ratio in 1.0f64..100.0) {
        let p = make_quadratic(mu, mu * ratio, Target::paper()).unwrap();
        let s = spec();
        let cfg = SolverConfig::new(Method::FixedGd, TruncationSchedule::Constant { level: m }, StepPolicy::GdExact, 30);
        let t = solver::run(&p, &s, &cfg).unwrap();
        let um = p.truncated_optimum(&s, m).unwrap();
        let mut prev = f64::INFINITY;
        let mut state = cfg.clone();
        // Per-step distance to the truncated optimum, via restarts.
        for _ in 0..5 {
            let r = solver::run(&p, &s, &SolverConfig { iterations: 1, ..state.clone() }).unwrap();
            let e = r.final_state.distance_sq(&um);
            prop_assert!(e <= prev * (1.0 + 1e-12) + 1e-28);
            prev = e;
            state.initial = Some(r.final_state);
        }
        prop_assert!(t.records.iter().all(|r| r.err_trunc_sq.is_finite()));
    }

    #[test]
    fn level_growth_zero_extends(levels in proptest::collection::vec(1usize..20, 2..6)) {
        let mut levels = levels;
        levels.sort_unstable();
        let p = make_quadratic(1.0, 10.0, Target::paper()).unwrap();
        let s = spec();
        let n = levels.len();
        let cfg = SolverConfig::new(Method::Gd, TruncationSchedule::Explicit { levels: levels.clone() }, StepPolicy::GdExact, n - 1);
        let t = solver::run(&p, &s, &cfg).unwrap();
        prop_assert_eq!(t.final_state.level(), *levels.last().unwrap());
        for (r, &m) in t.records.iter().zip(&levels) {
            prop_assert_eq!(r.m, m);
        }
    }

    #[test]
    fn coupled_truncated_optimum_solves_normal_equations(m in 1usize..24, amp in 0.0f64..0.9) {
        let p = make_coupled_quadratic(Coupling::sinusoidal(1.0, amp).unwrap(), Target::paper()).unwrap();
        let s = spec();
        let um = p.truncated_optimum(&s, m).unwrap();
        // The projected gradient vanishes at the truncated optimum.
        let q = s.quadrature();
        let mut b = vec![0.0; m + 1];
        let mut g = [0.0];
        for (&t, &w) in q.nodes.iter().zip(&q.weights) {
            let x = s.synthesize(&um, t).unwrap();
            p.gradient(&x, t, &mut g);
            for (i, bi) in b.iter_mut().enumerate() {
                *bi += w * g[0] * s.evaluate(i, t).unwrap();
            }
        }
        prop_assert!(b.iter().all(|v| v.abs() < 1e-10), "{:?}", b);
    }
}
