//! Drives the batch front end from code: parse a config, run a command
//! into a scratch directory and print the report.

use steinmc::cli::{dispatch, parse_config};

fn main() {
    let cfg = parse_config(
        "# unit rates, square-root regime\n\
         model.lambda = 1\n\
         scaling.n = 16\n\
         solver.tail_target = 1e-8\n",
    )
    .unwrap();
    let dir = std::env::temp_dir().join("steinmc-batch-example");
    let report = dispatch("moments", &cfg, &dir).unwrap();
    print!("{}", report.render());
    println!("exit code would be {}", report.exit_code());
}
