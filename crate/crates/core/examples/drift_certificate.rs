//! Finds a drift certificate for the quartic Lyapunov function.

use steinmc::model::{apply_g0, LatticeState, ModelParams, TestFunction};
use steinmc::stationary::foster_lyapunov_check;

fn main() {
    let params = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
    let f = TestFunction::polynomial([((4, 0), 1.0), ((0, 4), 1.0)]);
    println!("G0 f(10, 10) = {}", apply_g0(&f, LatticeState::new(10, 10), &params));
    match foster_lyapunov_check(&params, 60) {
        Ok(c) => println!(
            "G0 f <= -{} (x^3 + y^3) for x >= {}, y >= {} ({} points checked, asymptotic margin {})",
            c.c, c.x0, c.y0, c.points_checked, c.asymptotic_margin
        ),
        Err(e) => println!("{e}"),
    }
    // a scan that stops too early has nothing to certify
    if let Err(e) = foster_lyapunov_check(&ModelParams::new(20.0, 1.0, 1.0, 1.0).unwrap(), 15) {
        println!("lambda = 20, scan 15: {e}");
    }
}
