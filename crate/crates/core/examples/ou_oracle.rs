//! The Ornstein-Uhlenbeck process as an end-to-end check of the simulator
//! and the Monte Carlo Poisson solver.

use steinmc::diffusion::{
    simulate_stationary_expectation, solve_poisson_mc, Dynamics, PoissonGrid, PoissonOptions, SdeConfig,
};
use steinmc::model::TestFunction;

fn main() {
    let ou = Dynamics::OrnsteinUhlenbeck { theta: 1.0, sigma: 1.0 };
    let x2 = TestFunction::monomial(2, 0);
    let cfg = SdeConfig { horizon: 10_000.0, replications: 1, ..SdeConfig::default() };
    let est = simulate_stationary_expectation(&x2, &ou, &cfg).unwrap();
    println!("E[X^2] = {:.4} +- {:.4} (exact 0.5)", est.mean, est.ci_half_width);

    let grid = PoissonGrid::line(-2.0, 2.0, 0.5);
    let opts = PoissonOptions { paths: 2000, ..PoissonOptions::default() };
    let sol = solve_poisson_mc(&x2, &ou, &grid, &SdeConfig::default(), &opts).unwrap();
    println!("{:>6} {:>10} {:>10} {:>8}", "x", "u", "exact", "noise");
    for (p, (u, s)) in grid.nodes().iter().zip(sol.values().iter().zip(sol.noise())) {
        println!("{:>6.2} {:>10.4} {:>10.4} {:>8.4}", p.x, u, 0.25 - p.x * p.x / 2.0, s);
    }
}
