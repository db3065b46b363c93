//! Splits the scaled-chain generator of a test function into the diffusion
//! generator plus the four jump remainders, at a few lattice points.

use steinmc::model::{
    apply_gdiff, apply_gn, error_term_breakdown, LatticeState, ModelParams, ScalingScheme, TestFunction,
};

fn main() {
    let params = ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let scheme = ScalingScheme::halfin_whitt(100, params).unwrap();
    let u: TestFunction = "x^3 - 0.5*x*y + y^2".parse().unwrap();
    println!("u = {u}, n = {}, delta = eta = {}", scheme.n(), scheme.delta());
    println!("{:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}", "x", "y", "G_n u", "G u", "E1", "E2", "E3+E4");
    for (i, j) in [(100, 110), (90, 110), (110, 100), (120, 140)] {
        let p = scheme.to_scaled(LatticeState::new(i, j));
        let b = error_term_breakdown(&u, p, &scheme);
        println!(
            "{:>12.4} {:>12.4} {:>12.6} {:>12.6} {:>12.2e} {:>12.2e} {:>12.2e}",
            p.x,
            p.y,
            apply_gn(&u, p, &scheme),
            apply_gdiff(&u, p, &scheme),
            b.e1,
            b.e2,
            b.e3 + b.e4
        );
    }
}
