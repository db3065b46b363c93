//! Checks the first- and second-moment relations of the stationary chain
//! for three system sizes, with the as-displayed forms alongside.

use steinmc::model::{ModelParams, ScalingScheme};
use steinmc::stationary::{solve_adaptive, verify_moment_identities, MomentTolerance, SolverOptions};

fn main() {
    let params = ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    for n in [10, 25, 50] {
        let scheme = ScalingScheme::halfin_whitt(n, params).unwrap();
        let (_, _, dist) = solve_adaptive(&scheme, 1e-8, &SolverOptions::default()).unwrap();
        let report = verify_moment_identities(&dist, &scheme, &MomentTolerance::default());
        println!("n = {n}");
        for r in &report.rows {
            println!(
                "  {:<18} {:>14.6} vs {:>14.6}  gap {:>11.3e}  {}  (literal: {})",
                r.name,
                r.lhs,
                r.rhs,
                r.gap,
                if r.pass { "ok" } else { "FAILS" },
                if r.literal_pass { "holds" } else { "fails" }
            );
        }
    }
}
