//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Runs under a custom harness so the lines are printed whether or not a
//! criterion fails. Pass criterion numbers to run a subset:
//! `cargo test --test acceptance -- 3 8`.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steinmc::cli::{dispatch, parse_config};
use steinmc::diffusion::{
    simulate_stationary_expectation, solve_poisson_mc, Dynamics, PoissonGrid, PoissonOptions, SdeConfig,
};
use steinmc::model::{
    apply_g0, apply_gdiff, apply_gn, error_term_breakdown, LatticeState, ModelParams, NoiseModel, ScalingScheme,
    TestFunction,
};
use steinmc::stationary::{
    foster_lyapunov_check, solve_adaptive, solve_stationary, solve_stationary_dense_oracle, verify_moment_identities,
    verify_stationarity, MomentTolerance, SolverMethod, SolverOptions, TruncatedChain, TruncationBox,
};
use steinmc::stein::{check_trend, run_error_study, ErrorCurve, ErrorProbe, ExperimentPlan};

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn unit_rates() -> ModelParams {
    ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
}

fn hw(n: u32) -> ScalingScheme {
    ScalingScheme::halfin_whitt(n, unit_rates()).unwrap()
}

fn within(limit: Duration, start: Instant) -> bool {
    start.elapsed() <= limit
}

fn random_polynomial(rng: &mut ChaCha8Rng) -> TestFunction {
    let mut terms = Vec::new();
    for px in 0..=4u32 {
        for py in 0..=(4 - px) {
            if rng.random_bool(0.6) {
                terms.push(((px, py), rng.random_range(-1.0..=1.0)));
            }
        }
    }
    TestFunction::polynomial(terms)
}

fn generator_decomposition() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let schemes = [
        hw(25),
        ScalingScheme::with_exponents(64, 0.75, 2.0, 0.5, 0.5, unit_rates()).unwrap(),
        ScalingScheme::with_exponents(100, 0.5, 1.5, 0.4, 0.6, ModelParams::new(1.0, 1.5, 1.0, 0.7).unwrap())
            .unwrap()
            .with_noise(NoiseModel::ArrivalAndService),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..100 {
        let u = random_polynomial(&mut rng);
        for _ in 0..20 {
            let (i, j) = (rng.random_range(0..300usize), rng.random_range(0..300usize));
            for s in &schemes {
                let p = s.to_scaled(LatticeState::new(i, j));
                let gn = apply_gn(&u, p, s);
                let split = apply_gdiff(&u, p, s) + error_term_breakdown(&u, p, s).remainder();
                worst = worst.max((gn - split).abs() / (1.0 + gn.abs()));
                checked += 1;
            }
        }
    }
    let fast = within(Duration::from_secs(1), start);
    outcome(worst <= 1e-9 && fast, format!("{checked} cases, worst relative mismatch {worst:.2e} (limit 1e-9)"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut largest = 0;
    for _ in 0..20 {
        let params = ModelParams::new(
            rng.random_range(0.5..4.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..4.0),
            rng.random_range(0.5..2.0),
        )
        .unwrap();
        let i_max = rng.random_range(3..50usize);
        let j_max = rng.random_range(3..=(2500 / (i_max + 1) - 1).min(80));
        let chain = TruncatedChain::new(params, TruncationBox::new(i_max, j_max)).unwrap();
        largest = largest.max(chain.len());
        let opts = SolverOptions { tol: 1e-13, max_iter: 2_000_000, method: SolverMethod::Power };
        let it = solve_stationary(&chain, &opts).unwrap();
        let gth = solve_stationary_dense_oracle(&chain).unwrap();
        let diff = it.probabilities().iter().zip(gth.probabilities()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    let fast = within(Duration::from_secs(30), start);
    outcome(worst <= 1e-10 && fast, format!("20 boxes up to {largest} states, worst L-inf {worst:.2e} (limit 1e-10)"))
}

fn probes() -> Vec<(&'static str, TestFunction)> {
    ["x", "y", "x^2", "x*y", "y^2"].iter().map(|s| (*s, s.parse().unwrap())).collect()
}

fn truncated_stationarity() -> Outcome {
    let start = Instant::now();
    let s = hw(25);
    let (_, chain, dist) = solve_adaptive(&s, 1e-10, &SolverOptions::default()).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, f) in probes() {
        let c = verify_stationarity(&dist, &f, &chain, &s);
        ok &= c.truncated <= 1e-8;
        parts.push(format!("{name} {:.1e}", c.truncated));
    }
    let fast = within(Duration::from_secs(60), start);
    outcome(ok && fast, format!("|E[G_trunc f]|: {} (limit 1e-8)", parts.join(", ")))
}

fn moment_equalities() -> Outcome {
    let s = hw(25);
    let tol = MomentTolerance::default();
    let eq_gaps = |tail: f64| {
        let (_, _, dist) = solve_adaptive(&s, tail, &SolverOptions::default()).unwrap();
        let r = verify_moment_identities(&dist, &s, &tol);
        ["mean_b1", "mean_b2"].map(|name| r.row(name).unwrap().gap.abs())
    };
    let at_run = eq_gaps(1e-10);
    let small = at_run.iter().all(|g| *g <= 1e-6);
    let seq: Vec<[f64; 2]> = [1e-4, 1e-6, 1e-8].iter().map(|&t| eq_gaps(t)).collect();
    // targets met by the same box give the same residual, so non-increasing
    // with an overall decrease
    let shrinking = (0..2).all(|k| seq.windows(2).all(|w| w[1][k] <= w[0][k]) && seq[2][k] < seq[0][k]);
    let fmt = |g: &[f64; 2]| format!("({:.1e}, {:.1e})", g[0], g[1]);
    outcome(
        small && shrinking,
        format!(
            "|gap| (b1, b2) at tail 1e-10: {}; across 1e-4, 1e-6, 1e-8: {}",
            fmt(&at_run),
            seq.iter().map(fmt).collect::<Vec<_>>().join(" -> ")
        ),
    )
}

fn moment_inequalities() -> Outcome {
    let tol = MomentTolerance::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for n in [10u32, 25, 50] {
        let s = hw(n);
        let (_, _, dist) = solve_adaptive(&s, 1e-8, &SolverOptions::default()).unwrap();
        let r = verify_moment_identities(&dist, &s, &tol);
        let mut row_parts = Vec::new();
        for name in ["mean_y", "mean_x_region", "second_moment_b1", "second_moment_b2"] {
            let row = r.row(name).unwrap();
            ok &= row.pass;
            row_parts.push(format!(
                "{name} slack {:.3e} [literal {}]",
                row.gap,
                if row.literal_pass { "holds" } else { "fails" }
            ));
        }
        lines.push(format!("n={n}: {}", row_parts.join(", ")));
    }
    outcome(ok, lines.join("; "))
}

fn foster_lyapunov() -> Outcome {
    let params = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
    let f = TestFunction::polynomial([((4, 0), 1.0), ((0, 4), 1.0)]);
    let g = apply_g0(&f, LatticeState::new(10, 10), &params);
    // direct: 2 (11^4 - 10^4) + 10 (9^4 - 10^4) + (11^4 - 10^4), no server departures
    let direct = 2.0 * (14641.0 - 10000.0) + 10.0 * (6561.0 - 10000.0) + (14641.0 - 10000.0);
    let spot = g == -20467.0 && g == direct;
    let scan = 60;
    match foster_lyapunov_check(&params, scan) {
        Ok(c) => {
            let full = (scan + 1 - c.x0) * (scan + 1 - c.y0);
            let ok = spot && c.points_checked == full && c.asymptotic_margin >= 0.0;
            outcome(
                ok,
                format!(
                    "G0 f(10,10) = {g}; certificate x0={}, y0={}, C={}, {} of {full} points re-verified, margin {}",
                    c.x0, c.y0, c.c, c.points_checked, c.asymptotic_margin
                ),
            )
        }
        Err(e) => outcome(false, format!("G0 f(10,10) = {g}; {e}")),
    }
}

fn ou_oracles() -> Outcome {
    let start = Instant::now();
    let ou = Dynamics::OrnsteinUhlenbeck { theta: 1.0, sigma: 1.0 };
    let x2 = TestFunction::monomial(2, 0);
    let mut covered = 0;
    for seed in 0..50u64 {
        let cfg = SdeConfig { horizon: 1e4, burn_in: 50.0, replications: 1, base_seed: seed, ..SdeConfig::default() };
        if simulate_stationary_expectation(&x2, &ou, &cfg).unwrap().covers(0.5) {
            covered += 1;
        }
    }
    let grid = PoissonGrid::line(-2.0, 2.0, 0.25);
    let cfg = SdeConfig::default();
    let opts = PoissonOptions { paths: 4000, ..PoissonOptions::default() };
    let max_err = |h: &TestFunction, exact: &dyn Fn(f64) -> f64| {
        let sol = solve_poisson_mc(h, &ou, &grid, &cfg, &opts).unwrap();
        grid.nodes().iter().zip(sol.values()).map(|(p, u)| (u - exact(p.x)).abs()).fold(0.0, f64::max)
    };
    let ex = max_err(&TestFunction::monomial(1, 0), &|x| -x);
    let ex2 = max_err(&x2, &|x| -x * x / 2.0 + 0.25);
    let fast = within(Duration::from_secs(120), start);
    outcome(
        covered >= 45 && ex <= 0.05 && ex2 <= 0.05 && fast,
        format!("variance covered in {covered}/50 seeds; Poisson max error h=x {ex:.4}, h=x^2 {ex2:.4} (limit 0.05)"),
    )
}

const STUDY_NS: [u32; 3] = [16, 64, 256];

fn study_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan::halfin_whitt(STUDY_NS.to_vec(), TestFunction::monomial(1, 0));
    plan.solver = SolverOptions { method: SolverMethod::GaussSeidel, ..SolverOptions::default() };
    plan.sde = SdeConfig { horizon: 200_050.0, ..SdeConfig::default() };
    plan.probe = Some(ErrorProbe::PoissonOf {
        h: TestFunction::monomial(0, 2),
        half_width: 3.0,
        spacing: 0.5,
        options: PoissonOptions { paths: 400, ..PoissonOptions::default() },
    });
    plan
}

/// The main study, shared by the trend and per-term criteria.
fn study() -> &'static (ErrorCurve, Duration) {
    static STUDY: OnceLock<(ErrorCurve, Duration)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let start = Instant::now();
        let curve = run_error_study(&study_plan()).unwrap();
        (curve, start.elapsed())
    })
}

fn describe(curve: &ErrorCurve) -> String {
    let t = check_trend(curve, -1.0, -0.1);
    let gaps: Vec<String> = curve
        .points
        .iter()
        .map(|p| {
            let gated = if p.noise_dominated { " gated" } else { "" };
            format!("{}:{:.4}+-{:.4}{gated}", p.n, p.gap, p.diffusion.ci_half_width)
        })
        .collect();
    format!(
        "gaps {}, decreasing {}, slope {:.3}, C = {:.3}, C from smallest n bounds the rest: {}",
        gaps.join(" "),
        t.decreasing,
        t.fit.as_ref().map_or(f64::NAN, |f| f.slope),
        t.constant,
        t.first_point_bound
    )
}

fn error_trend() -> Outcome {
    let (curve, elapsed) = study();
    let t = check_trend(curve, -1.0, -0.1);
    let fast = *elapsed <= Duration::from_secs(600);

    // same chain values against the diffusion whose x-noise also carries
    // the service jumps; reported only
    let plan = study_plan();
    let h = TestFunction::monomial(1, 0);
    let mut alt = curve.clone();
    for p in &mut alt.points {
        let s = plan.scheme(p.n).unwrap().with_noise(NoiseModel::ArrivalAndService);
        p.diffusion = simulate_stationary_expectation(&h, &Dynamics::Model(s), &plan.sde).unwrap();
        p.gap = (p.chain_mean - p.diffusion.mean).abs();
        p.noise_dominated = p.gap < p.diffusion.ci_half_width;
    }
    outcome(
        t.pass() && fast,
        format!(
            "{}; slope band [-1, -0.1] {}, e_n <= C n^-1/2 {}; {:.0}s [arrival+service noise: {}]",
            describe(curve),
            t.slope_in_band,
            t.dominated_by_rate,
            elapsed.as_secs_f64(),
            describe(&alt)
        ),
    )
}

fn per_term_orders() -> Outcome {
    let cubic = TestFunction::monomial(3, 0);
    let mut e1_ok = true;
    let mut e1_parts = Vec::new();
    for n in STUDY_NS {
        let s = hw(n);
        let opts = SolverOptions { method: SolverMethod::GaussSeidel, ..SolverOptions::default() };
        let (_, _, dist) = solve_adaptive(&s, 1e-6, &opts).unwrap();
        let t = steinmc::stein::estimate_error_expectations(&dist, &cubic, &s);
        let ratio = t.e[0] / (f64::from(n) * s.delta().powi(3));
        e1_ok &= (ratio - s.mu()).abs() <= 1e-6;
        e1_parts.push(format!("{n}:{ratio:.9}"));
    }
    let (curve, _) = study();
    let mut spread_ok = true;
    let mut parts = Vec::new();
    for (k, name) in [(2, "E3"), (3, "E4")] {
        let r: Vec<f64> = curve
            .points
            .iter()
            .map(|p| {
                let e = p.errors.as_ref().unwrap().e[k];
                e / (f64::from(p.n).powf(0.5) * p.eta * p.eta)
            })
            .collect();
        let same_sign = r.iter().all(|v| *v > 0.0) || r.iter().all(|v| *v < 0.0);
        let mags: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        let spread = mags.iter().cloned().fold(0.0, f64::max) / mags.iter().cloned().fold(f64::INFINITY, f64::min);
        spread_ok &= same_sign && spread <= 3.0;
        parts.push(format!(
            "{name}/(n^a eta^2) = [{}], spread {spread:.2}",
            r.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ));
    }
    let excluded = curve.points.iter().map(|p| p.errors.as_ref().unwrap().excluded_mass).fold(0.0, f64::max);
    outcome(
        e1_ok && spread_ok,
        format!(
            "E1/(n delta^3) = [{}]; {} (limit 3); excluded mass <= {excluded:.1e}",
            e1_parts.join(", "),
            parts.join("; ")
        ),
    )
}

fn reproducibility() -> Outcome {
    let cfg = parse_config(
        "model.lambda = 1\nscaling.n = 9\nscaling.n_list = 4, 9, 16\nsolver.tail_target = 1e-6\n\
         sde.horizon = 250\nsde.replications = 2\npoisson.paths = 20\npoisson.half_width = 1\n\
         poisson.spacing = 0.5\npoisson.t_max = 20\nstudy.probe = exact\n",
    )
    .unwrap();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in steinmc::cli::COMMANDS {
        let ra = dispatch(cmd, &cfg, a.path()).unwrap();
        let rb = dispatch(cmd, &cfg, b.path()).unwrap();
        for (pa, pb) in ra.outputs.iter().zip(&rb.outputs) {
            if pa.extension().is_some_and(|e| e == "csv") {
                compared += 1;
                if std::fs::read(pa).unwrap() != std::fs::read(pb).unwrap() {
                    mismatches.push(pa.file_name().unwrap().to_string_lossy().into_owned());
                }
            }
        }
    }
    outcome(
        mismatches.is_empty() && compared > 0,
        format!("{compared} CSVs from all six commands compared byte for byte; mismatches: {mismatches:?}"),
    )
}

fn main() {
    let criteria: [Check; 10] = [
        ("generator decomposition", generator_decomposition),
        ("iterative vs dense oracle", oracle_equivalence),
        ("truncated stationarity", truncated_stationarity),
        ("moment equalities", moment_equalities),
        ("moment inequalities", moment_inequalities),
        ("Foster-Lyapunov certificate", foster_lyapunov),
        ("OU oracles", ou_oracles),
        ("error trend", error_trend),
        ("per-term orders", per_term_orders),
        ("reproducibility", reproducibility),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {number:>2} {} {name} [{:.1}s]: {}",
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
