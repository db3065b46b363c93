//! Solves the truncated chain on an adaptively grown box and reads off a
//! few stationary expectations.

use steinmc::model::{ModelParams, ScalingScheme, TestFunction};
use steinmc::stationary::{expect, solve_adaptive, solve_stationary_dense_oracle, SolverMethod, SolverOptions};

fn main() {
    let params = ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let scheme = ScalingScheme::halfin_whitt(25, params).unwrap();
    let opts = SolverOptions { method: SolverMethod::GaussSeidel, ..SolverOptions::default() };
    let (bx, chain, dist) = solve_adaptive(&scheme, 1e-10, &opts).unwrap();
    println!(
        "box {}x{} ({} states), {} sweeps, residual {:.2e}, boundary mass {:.2e}",
        bx.i_max,
        bx.j_max,
        bx.len(),
        dist.iterations(),
        dist.residual(),
        dist.boundary_mass()
    );
    for h in ["x", "y", "x^2", "x*y", "y^2"] {
        let f: TestFunction = h.parse().unwrap();
        println!("E[{h}] = {:.10}", expect(&dist, &f, &scheme));
    }

    // the banded elimination oracle agrees on a box this size
    let gth = solve_stationary_dense_oracle(&chain);
    match gth {
        Ok(g) => {
            let diff =
                dist.probabilities().iter().zip(g.probabilities()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            println!("max |pi - pi_oracle| = {diff:.2e}");
        }
        Err(e) => println!("oracle skipped: {e}"),
    }
}
