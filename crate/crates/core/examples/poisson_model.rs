//! Monte Carlo Poisson solution for the model diffusion on a square window,
//! with the generator residual at interior nodes.

use steinmc::diffusion::{solve_poisson_mc, Dynamics, PoissonGrid, PoissonOptions, SdeConfig};
use steinmc::model::{ModelParams, NoiseModel, ScalingScheme, TestFunction};

fn main() {
    let params = ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let scheme = ScalingScheme::halfin_whitt(64, params).unwrap().with_noise(NoiseModel::ArrivalAndService);
    let dynamics = Dynamics::Model(scheme);
    let h = TestFunction::monomial(1, 0);
    let grid = PoissonGrid::rect(-2.0, 2.0, 0.5, -2.0, 2.0, 0.5);
    let opts = PoissonOptions { paths: 400, ..PoissonOptions::default() };
    let sol = solve_poisson_mc(&h, &dynamics, &grid, &SdeConfig::default(), &opts).unwrap();
    println!(
        "h = {h}, centering {:.4}, horizon {}, max node noise {:.3e}",
        sol.centering(),
        sol.horizon(),
        sol.max_noise()
    );
    let (nx, ny) = (grid.nx, grid.ny);
    let mut within = 0;
    let mut total = 0;
    for ix in 1..nx - 1 {
        for iy in 1..ny - 1 {
            let (r, bound) = sol.generator_residual(ix, iy, &h, &dynamics).unwrap();
            total += 1;
            if r.abs() <= 2.0 * bound {
                within += 1;
            }
        }
    }
    println!("generator residual within twice its noise bound at {within} of {total} interior nodes");
    let mid = grid.ny / 2;
    for ix in 0..nx {
        let p = grid.node(ix, mid);
        println!("u({:>5.2}, {:>5.2}) = {:>9.4}", p.x, p.y, sol.value(ix, mid));
    }
}
