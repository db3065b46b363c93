//! The chain-versus-diffusion gap for h = x across system sizes, with the
//! log-log fit and the trend checks, under both x-noise variants.

use steinmc::diffusion::SdeConfig;
use steinmc::model::{NoiseModel, TestFunction};
use steinmc::stationary::{SolverMethod, SolverOptions};
use steinmc::stein::{check_trend, run_error_study, ErrorProbe, ExperimentPlan};

fn main() {
    for noise in [NoiseModel::ArrivalOnly, NoiseModel::ArrivalAndService] {
        let mut plan = ExperimentPlan::halfin_whitt(vec![16, 36, 81, 144], TestFunction::monomial(1, 0));
        plan.noise = noise;
        plan.solver = SolverOptions { method: SolverMethod::GaussSeidel, ..SolverOptions::default() };
        plan.sde = SdeConfig { horizon: 100_050.0, ..SdeConfig::default() };
        plan.probe = Some(ErrorProbe::Exact(TestFunction::monomial(3, 0)));
        let curve = run_error_study(&plan).unwrap();

        println!("x-noise: {}", noise.name());
        println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>10}", "n", "chain", "diffusion", "ci", "gap", "E1(x^3)");
        for p in &curve.points {
            println!(
                "{:>5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                p.n,
                p.chain_mean,
                p.diffusion.mean,
                p.diffusion.ci_half_width,
                p.gap,
                p.errors.as_ref().map_or(f64::NAN, |e| e.e[0])
            );
        }
        let t = check_trend(&curve, -1.0, -0.1);
        let slope = t.fit.as_ref().map_or(f64::NAN, |f| f.slope);
        println!(
            "slope {slope:.3} (rate {}), decreasing {}, C = {:.3}, C from smallest n bounds the rest: {}\n",
            curve.theoretical_rate, t.decreasing, t.constant, t.first_point_bound
        );
    }
}
