use proptest::prelude::*;

use steinmc::cli::{parse_config, RunConfig};
use steinmc::model::{
    apply_g0, apply_gdiff, apply_gn, error_term_breakdown, transition_rates, LatticeState, ModelParams, NoiseModel,
    ScalarField, ScaledPoint, ScalingScheme, TestFunction,
};
use steinmc::stationary::{
    adaptive_box, solve_stationary, solve_stationary_dense_oracle, verify_stationarity, SolverMethod, SolverOptions,
    TruncatedChain, TruncationBox,
};
use steinmc::stein::fit_points;

fn rates() -> impl Strategy<Value = ModelParams> {
    (0.2..5.0f64, 0.2..3.0f64, 0.2..5.0f64, 0.2..3.0f64).prop_map(|(l, m, g, n)| ModelParams::new(l, m, g, n).unwrap())
}

fn scheme() -> impl Strategy<Value = ScalingScheme> {
    (1u32..400, 0.1..1.0f64, 0.2..3.0f64, 0.2..1.0f64, 0.2..1.0f64, rates(), any::<bool>()).prop_map(
        |(n, alpha, kappa, p, q, params, both)| {
            let noise = if both { NoiseModel::ArrivalAndService } else { NoiseModel::ArrivalOnly };
            ScalingScheme::with_exponents(n, alpha, kappa, p, q, params).unwrap().with_noise(noise)
        },
    )
}

fn polynomial() -> impl Strategy<Value = TestFunction> {
    prop::collection::vec(((0u32..=4, 0u32..=4), -1.0..1.0f64), 0..8)
        .prop_map(|terms| TestFunction::polynomial(terms.into_iter().filter(|((a, b), _)| a + b <= 4)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lattice_round_trip(s in scheme(), i in 0usize..2000, j in 0usize..2000) {
        let st = LatticeState::new(i, j);
        prop_assert_eq!(s.to_lattice(s.to_scaled(st)).unwrap(), st);
    }

    #[test]
    fn generator_splits_exactly(s in scheme(), u in polynomial(), i in 0usize..600, j in 0usize..600) {
        let p = s.to_scaled(LatticeState::new(i, j));
        let gn = apply_gn(&u, p, &s);
        let b = error_term_breakdown(&u, p, &s);
        prop_assert!((gn - (apply_gdiff(&u, p, &s) + b.remainder())).abs() <= 1e-9 * (1.0 + gn.abs()));
        prop_assert!((b.total() - gn).abs() <= 1e-9 * (1.0 + gn.abs()));
    }

    #[test]
    fn generators_kill_constants(s in scheme(), c in -10.0..10.0f64, i in 0usize..500, j in 0usize..500) {
        let u = TestFunction::constant(c);
        let p = s.to_scaled(LatticeState::new(i, j));
        prop_assert_eq!(apply_gn(&u, p, &s), 0.0);
        prop_assert_eq!(apply_gdiff(&u, p, &s), 0.0);
        prop_assert_eq!(apply_g0(&u, LatticeState::new(i, j), s.params()), 0.0);
    }

    #[test]
    fn raw_rates_are_nonnegative_and_local(params in rates(), i in 0usize..100, j in 0usize..100) {
        for (t, r) in transition_rates(LatticeState::new(i, j), &params) {
            prop_assert!(r > 0.0);
            prop_assert_eq!(t.i.abs_diff(i) + t.j.abs_diff(j), 1);
        }
    }

    #[test]
    fn centered_drift_vanishes_at_equilibrium(s in scheme()) {
        // the scaled origin sits at (n, n + kappa n^alpha), where both jump
        // directions balance
        let (b1, b2) = s.drift_fields(ScaledPoint::new(0.0, 0.0));
        prop_assert!((b1 * s.mu() - s.lambda_n()).abs() <= 1e-9 * s.lambda_n());
        prop_assert!((b2 * s.nu() - s.gamma_n()).abs() <= 1e-9 * s.gamma_n().max(1.0));
    }

    #[test]
    fn polynomial_text_round_trips(u in polynomial()) {
        let back: TestFunction = u.to_string().parse().unwrap();
        for p in [ScaledPoint::new(0.3, -1.2), ScaledPoint::new(-2.0, 0.7)] {
            prop_assert!((back.value(p) - u.value(p)).abs() <= 1e-12 * (1.0 + u.value(p).abs()));
        }
    }

    #[test]
    fn config_echo_round_trips(
        lambda in 0.01..100.0f64,
        mu in 0.01..10.0f64,
        n in 1u32..5000,
        alpha in 0.01..1.0f64,
        seed in any::<u64>(),
        tail in 1e-14..0.5f64,
    ) {
        let mut cfg = RunConfig::with_lambda(lambda);
        cfg.model.mu = mu;
        cfg.scaling.n = n;
        cfg.scaling.alpha = alpha;
        cfg.sde.seed = seed;
        cfg.solver.tail_target = tail;
        prop_assert_eq!(parse_config(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn exact_power_laws_are_recovered(c in 0.01..10.0f64, rate in -2.0..0.5f64) {
        let pts: Vec<(u32, f64)> = [8u32, 32, 128, 512].iter().map(|&n| (n, c * f64::from(n).powf(rate))).collect();
        let fit = fit_points(&pts).unwrap();
        prop_assert!((fit.slope - rate).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stationary_solves_are_distributions(params in rates(), i_max in 1usize..25, j_max in 1usize..25, gs in any::<bool>()) {
        let chain = TruncatedChain::new(params, TruncationBox::new(i_max, j_max)).unwrap();
        let method = if gs { SolverMethod::GaussSeidel } else { SolverMethod::Power };
        let opts = SolverOptions { tol: 1e-13, max_iter: 5_000_000, method };
        let d = solve_stationary(&chain, &opts).unwrap();
        let total: f64 = d.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(d.probabilities().iter().all(|p| *p >= 0.0));
        let oracle = solve_stationary_dense_oracle(&chain).unwrap();
        let worst = d.probabilities().iter().zip(oracle.probabilities()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-10, "L-inf {worst:e}");
        prop_assert!(chain.residual(oracle.probabilities()) < 1e-12);
    }

    #[test]
    fn tighter_tails_never_shrink_the_box(n in 2u32..12, a in 1.0..6.0f64, b in 1.0..6.0f64) {
        let s = ScalingScheme::halfin_whitt(n, ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let (loose, tight) = (10f64.powf(-a.min(b)), 10f64.powf(-a.max(b)));
        let opts = SolverOptions { method: SolverMethod::GaussSeidel, ..SolverOptions::default() };
        let bl = adaptive_box(&s, loose, &opts).unwrap();
        let bt = adaptive_box(&s, tight, &opts).unwrap();
        prop_assert!(bt.i_max >= bl.i_max && bt.j_max >= bl.j_max);
        prop_assert!(bt.contains_equilibrium(&s.chain_params()));
    }

    #[test]
    fn truncated_stationarity_is_bounded_by_the_residual(
        n in 2u32..30,
        gs in any::<bool>(),
        u in polynomial().prop_filter("degree <= 3", |u| u.terms().all(|((a, b), _)| a + b <= 3)),
    ) {
        let s = ScalingScheme::halfin_whitt(n, ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let method = if gs { SolverMethod::GaussSeidel } else { SolverMethod::Power };
        let tol = 1e-12;
        let box_ = TruncationBox::new(2 * n as usize + 4, 2 * n as usize + 12);
        let chain = TruncatedChain::for_scheme(&s, box_).unwrap();
        let d = solve_stationary(&chain, &SolverOptions { tol, max_iter: 1_000_000, method }).unwrap();
        prop_assert!(d.residual() <= 10.0 * chain.uniformization() * tol, "residual {:e}", d.residual());
        let f_max = d.iter().map(|(st, _)| u.value(s.to_scaled(st)).abs()).fold(0.0, f64::max);
        let c = verify_stationarity(&d, &u, &chain, &s);
        prop_assert!(c.truncated <= d.residual() * f_max * (1.0 + 1e-6) + 1e-15, "{c:?}");
    }
}
