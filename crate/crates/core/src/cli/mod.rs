//! Batch front end: config parsing, the six commands, CSV output and run
//! reports.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use thiserror::Error;

pub use config::{parse_config, ConfigError, DriftSection, DynamicsKind, PoissonSection, RunConfig, SdeSection};

use crate::diffusion::{
    simulate_stationary_expectation, solve_poisson_mc, Dynamics, PoissonGrid, PoissonOptions, SdeConfig, SimError,
    GENERATOR_ID,
};
use crate::model::{ModelError, ScalingScheme, TestFunction};
use crate::stationary::{
    foster_lyapunov_check, solve_adaptive, verify_moment_identities, verify_stationarity, MomentTolerance, Relation,
    SolverError, SolverOptions, StationaryDistribution, TruncatedChain,
};
use crate::stein::{check_trend, run_error_study, ErrorProbe, ExperimentPlan, StudyError};

pub const COMMANDS: [&str; 6] = ["stationary", "moments", "drift-check", "diffusion", "poisson", "stein-study"];

/// Environment variable consulted when `--out` is absent.
pub const OUT_ENV: &str = "STEINMC_OUT";

pub fn build_id() -> String {
    let base = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
    match option_env!("STEINMC_BUILD_ID") {
        Some(id) => format!("{base} ({id})"),
        None => base.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("simulation failure: {0}")]
    Simulation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => 2,
            CliError::Simulation(_) => 3,
            _ => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(m) => CliError::Validation(m),
            other => CliError::Simulation(other.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Solver { .. } => CliError::Solver(e.to_string()),
            StudyError::Simulation { .. } => CliError::Simulation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Criterion { name: name.to_string(), pass, detail }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: String,
    pub config_echo: String,
    pub build_id: String,
    pub generator_id: &'static str,
    pub seed: u64,
    pub wall_time: Duration,
    /// Every file written by the run, the report itself last.
    pub outputs: Vec<PathBuf>,
    pub criteria: Vec<Criterion>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            4
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "build: {}", self.build_id);
        let _ = writeln!(s, "generator: {}", self.generator_id);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "wall_time_s: {:.3}", self.wall_time.as_secs_f64());
        let _ = writeln!(s, "outputs:");
        for p in &self.outputs {
            let _ = writeln!(s, "  {}", p.display());
        }
        let _ = writeln!(s, "criteria:");
        for c in &self.criteria {
            let _ = writeln!(s, "  {} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "status: {}", if self.all_pass() { "pass" } else { "fail" });
        let _ = writeln!(s, "config:");
        for line in self.config_echo.lines() {
            let _ = writeln!(s, "  {line}");
        }
        s
    }
}

struct Output<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Output<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io_err = |source| CliError::Io { path: path.clone(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.files.push(path);
        Ok(())
    }
}

fn scheme(cfg: &RunConfig, n: u32) -> Result<ScalingScheme, CliError> {
    let s = &cfg.scaling;
    Ok(ScalingScheme::with_exponents(n, s.alpha, s.kappa, s.delta_exp, s.eta_exp, cfg.model)?.with_noise(s.noise))
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter, method: cfg.solver.method }
}

fn sde_config(cfg: &RunConfig) -> SdeConfig {
    let s = &cfg.sde;
    SdeConfig {
        dt: s.dt,
        burn_in: s.burn_in,
        horizon: s.horizon,
        replications: s.replications,
        base_seed: s.seed,
        batch_count: s.batch_count,
    }
}

fn dynamics(cfg: &RunConfig) -> Result<Dynamics, CliError> {
    Ok(match cfg.sde.dynamics {
        DynamicsKind::Model => Dynamics::Model(scheme(cfg, cfg.scaling.n)?),
        DynamicsKind::OrnsteinUhlenbeck => {
            Dynamics::OrnsteinUhlenbeck { theta: cfg.sde.ou_theta, sigma: cfg.sde.ou_sigma }
        }
    })
}

fn poisson_options(p: &PoissonSection) -> PoissonOptions {
    PoissonOptions { paths: p.paths, t_max: p.t_max, tail_fraction: p.tail_fraction, ..PoissonOptions::default() }
}

/// Test functions whose stationarity residuals the `stationary` and
/// `moments` commands report.
fn stationarity_probes() -> Vec<(&'static str, TestFunction)> {
    vec![
        ("x", TestFunction::monomial(1, 0)),
        ("y", TestFunction::monomial(0, 1)),
        ("x^2", TestFunction::monomial(2, 0)),
        ("x*y", TestFunction::monomial(1, 1)),
        ("y^2", TestFunction::monomial(0, 2)),
    ]
}

fn write_stationarity<W: Write>(
    w: &mut W,
    dist: &StationaryDistribution,
    chain: &TruncatedChain,
    scheme: &ScalingScheme,
) -> io::Result<()> {
    writeln!(w, "f,truncated,untruncated,boundary_correction")?;
    for (name, f) in stationarity_probes() {
        let c = verify_stationarity(dist, &f, chain, scheme);
        writeln!(w, "{name},{:.16e},{:.16e},{:.16e}", c.truncated, c.untruncated, c.boundary_correction)?;
    }
    Ok(())
}

fn run_stationary(cfg: &RunConfig, out: &mut Output) -> Result<Vec<Criterion>, CliError> {
    let s = scheme(cfg, cfg.scaling.n)?;
    let opts = solver_options(cfg);
    let (bx, chain, dist) = solve_adaptive(&s, cfg.solver.tail_target, &opts)?;
    out.write("stationary.csv", |w| dist.write_csv(w))?;
    out.write("stationary_residuals.csv", |w| {
        writeln!(w, "quantity,value")?;
        writeln!(w, "i_max,{}", bx.i_max)?;
        writeln!(w, "j_max,{}", bx.j_max)?;
        writeln!(w, "states,{}", bx.len())?;
        writeln!(w, "iterations,{}", dist.iterations())?;
        writeln!(w, "residual,{:.16e}", dist.residual())?;
        writeln!(w, "boundary_mass,{:.16e}", dist.boundary_mass())?;
        writeln!(w, "job_face_mass,{:.16e}", dist.job_face_mass())?;
        writeln!(w, "server_face_mass,{:.16e}", dist.server_face_mass())?;
        Ok(())
    })?;
    out.write("stationarity.csv", |w| write_stationarity(w, &dist, &chain, &s))?;
    // a converged iterate satisfies ||pi Q||_1 <= Lambda * (L1 change); the
    // factor 10 covers Gauss-Seidel, whose sweeps are not uniformised steps
    let residual_limit = 10.0 * chain.uniformization() * cfg.solver.tol;
    Ok(vec![
        Criterion::new(
            "tail_target",
            dist.boundary_mass() <= cfg.solver.tail_target,
            format!("boundary mass {:e} <= {:e}", dist.boundary_mass(), cfg.solver.tail_target),
        ),
        Criterion::new(
            "residual",
            dist.residual() <= residual_limit,
            format!("||pi Q||_1 = {:e} <= {:e}", dist.residual(), residual_limit),
        ),
    ])
}

fn run_moments(cfg: &RunConfig, out: &mut Output) -> Result<Vec<Criterion>, CliError> {
    let s = scheme(cfg, cfg.scaling.n)?;
    let (_, chain, dist) = solve_adaptive(&s, cfg.solver.tail_target, &solver_options(cfg))?;
    let tol = MomentTolerance { equality: cfg.study.tol_equality, inequality: cfg.study.tol_inequality };
    let report = verify_moment_identities(&dist, &s, &tol);
    out.write("moments.csv", |w| {
        writeln!(w, "name,relation,lhs,rhs,gap,boundary_correction,pass,literal_lhs,literal_rhs,literal_pass")?;
        for r in &report.rows {
            let rel = match r.relation {
                Relation::Equality => "equality",
                Relation::UpperBound => "upper_bound",
            };
            writeln!(
                w,
                "{},{rel},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{}",
                r.name,
                r.lhs,
                r.rhs,
                r.gap,
                r.boundary_correction,
                r.pass,
                r.literal_lhs,
                r.literal_rhs,
                r.literal_pass
            )?;
        }
        Ok(())
    })?;
    out.write("stationarity.csv", |w| write_stationarity(w, &dist, &chain, &s))?;
    Ok(report
        .rows
        .iter()
        .map(|r| {
            Criterion::new(
                r.name,
                r.pass,
                format!("lhs {:.6e}, rhs {:.6e}, gap {:.3e} (literal form {})", r.lhs, r.rhs, r.gap, r.literal_pass),
            )
        })
        .collect())
}

fn run_drift(cfg: &RunConfig, out: &mut Output) -> Result<Vec<Criterion>, CliError> {
    cfg.model.validate()?;
    let result = foster_lyapunov_check(&cfg.model, cfg.drift.scan_limit);
    out.write("drift.csv", |w| {
        writeln!(w, "found,x0,y0,c,scan_limit,asymptotic_margin,points_checked,worst_x,worst_y,worst_ratio")?;
        match &result {
            Ok(c) => writeln!(
                w,
                "true,{},{},{:.16e},{},{:.16e},{},,,",
                c.x0, c.y0, c.c, c.scan_limit, c.asymptotic_margin, c.points_checked
            ),
            Err(f) => writeln!(
                w,
                "false,,,,{},,,{},{},{:.16e}",
                cfg.drift.scan_limit, f.worst_point.0, f.worst_point.1, f.worst_ratio
            ),
        }
    })?;
    Ok(match result {
        Ok(c) => vec![
            Criterion::new(
                "certificate",
                true,
                format!("G0 f <= -{} (x^3 + y^3) on [{}, {}]x[{}, {}]", c.c, c.x0, c.scan_limit, c.y0, c.scan_limit),
            ),
            Criterion::new(
                "asymptotic_margin",
                c.asymptotic_margin >= 0.0,
                format!("margin {:.6e} beyond the scan", c.asymptotic_margin),
            ),
        ],
        Err(f) => vec![Criterion::new("certificate", false, f.to_string())],
    })
}

fn run_diffusion(cfg: &RunConfig, out: &mut Output) -> Result<Vec<Criterion>, CliError> {
    let dyn_ = dynamics(cfg)?;
    let h = &cfg.study.h;
    let est = simulate_stationary_expectation(h, &dyn_, &sde_config(cfg))?;
    out.write("diffusion.csv", |w| {
        writeln!(w, "h,mean,std_error,ci_half_width,batches,steps_per_batch")?;
        writeln!(
            w,
            "{h},{:.16e},{:.16e},{:.16e},{},{}",
            est.mean, est.std_error, est.ci_half_width, est.batches, est.steps_per_batch
        )
    })?;
    let mut criteria = vec![Criterion::new(
        "finite",
        est.mean.is_finite() && est.ci_half_width.is_finite(),
        format!("{:.6e} +- {:.3e}", est.mean, est.ci_half_width),
    )];
    if let Dynamics::OrnsteinUhlenbeck { theta, sigma } = dyn_ {
        if *h == TestFunction::monomial(2, 0) {
            let v = sigma * sigma / (2.0 * theta);
            criteria.push(Criterion::new("ou_variance", est.covers(v), format!("interval covers {v}")));
        }
    }
    Ok(criteria)
}

fn run_poisson(cfg: &RunConfig, out: &mut Output) -> Result<Vec<Criterion>, CliError> {
    let dyn_ = dynamics(cfg)?;
    let p = &cfg.poisson;
    let grid = if dyn_.is_one_dimensional() {
        PoissonGrid::line(-p.half_width, p.half_width, p.spacing)
    } else {
        PoissonGrid::rect(-p.half_width, p.half_width, p.spacing, -p.half_width, p.half_width, p.spacing)
    };
    let sol = solve_poisson_mc(&cfg.study.h, &dyn_, &grid, &sde_config(cfg), &poisson_options(p))?;
    out.write("poisson.csv", |w| sol.write_csv(w))?;
    let finite = sol.values().iter().chain(sol.noise()).all(|v| v.is_finite());
    Ok(vec![Criterion::new(
        "finite",
        finite,
        format!("{} nodes, horizon {}, max noise {:.3e}", grid.len(), sol.horizon(), sol.max_noise()),
    )])
}

fn run_study(cfg: &RunConfig, out: &mut Output) -> Result<Vec<Criterion>, CliError> {
    let s = &cfg.scaling;
    let probe = match cfg.study.probe.as_str() {
        "exact" => Some(ErrorProbe::Exact(cfg.study.u.clone())),
        "poisson" => Some(ErrorProbe::PoissonOf {
            h: cfg.study.h.clone(),
            half_width: cfg.poisson.half_width,
            spacing: cfg.poisson.spacing,
            options: poisson_options(&cfg.poisson),
        }),
        _ => None,
    };
    let plan = ExperimentPlan {
        n_values: s.n_list.clone(),
        alpha: s.alpha,
        kappa: s.kappa,
        delta_exp: s.delta_exp,
        eta_exp: s.eta_exp,
        params: cfg.model,
        noise: s.noise,
        h: cfg.study.h.clone(),
        tail_target: cfg.solver.tail_target,
        solver: solver_options(cfg),
        sde: sde_config(cfg),
        probe,
    };
    plan.validate()?;
    let curve = run_error_study(&plan)?;
    out.write("stein_study.csv", |w| curve.write_csv(w))?;
    let t = check_trend(&curve, cfg.study.slope_min, cfg.study.slope_max);
    let gaps: Vec<String> = t.used.iter().map(|(n, e)| format!("{n}:{e:.4e}")).collect();
    let slope = t.fit.as_ref().map_or("unavailable".to_string(), |f| format!("{:.4}", f.slope));
    Ok(vec![
        Criterion::new("decreasing", t.decreasing, format!("gaps {}", gaps.join(" "))),
        Criterion::new(
            "slope_band",
            t.slope_in_band,
            format!("slope {slope} in [{}, {}]", cfg.study.slope_min, cfg.study.slope_max),
        ),
        Criterion::new(
            "rate_bound",
            t.dominated_by_rate,
            format!("e_n <= {:.4e} n^{}", t.constant, curve.theoretical_rate),
        ),
    ])
}

/// Runs `command`, writes its CSVs and `<command>_report.txt` into
/// `out_dir`, and returns the report.
pub fn dispatch(command: &str, cfg: &RunConfig, out_dir: &Path) -> Result<RunReport, CliError> {
    if !COMMANDS.contains(&command) {
        return Err(CliError::Usage(format!("unknown command `{command}`\n{}", usage())));
    }
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    let start = Instant::now();
    let mut out = Output { dir: out_dir, files: Vec::new() };
    let criteria = match command {
        "stationary" => run_stationary(cfg, &mut out)?,
        "moments" => run_moments(cfg, &mut out)?,
        "drift-check" => run_drift(cfg, &mut out)?,
        "diffusion" => run_diffusion(cfg, &mut out)?,
        "poisson" => run_poisson(cfg, &mut out)?,
        _ => run_study(cfg, &mut out)?,
    };
    let report_name = format!("{}_report.txt", command.replace('-', "_"));
    let mut outputs = out.files;
    outputs.push(out_dir.join(&report_name));
    let report = RunReport {
        command: command.to_string(),
        config_echo: cfg.echo(),
        build_id: build_id(),
        generator_id: GENERATOR_ID,
        seed: cfg.sde.seed,
        wall_time: start.elapsed(),
        outputs,
        criteria,
    };
    let path = out_dir.join(report_name);
    fs::write(&path, report.render()).map_err(|source| CliError::Io { path, source })?;
    Ok(report)
}

pub fn usage() -> String {
    format!("usage: steinmc <command> --config <path> [--out <dir>] [--seed <u64>]\ncommands: {}", COMMANDS.join(", "))
}

#[derive(Debug, Parser)]
#[command(name = "steinmc", version, about = "Chain, diffusion and generator-comparison experiments")]
struct Args {
    /// stationary, moments, drift-check, diffusion, poisson or stein-study
    command: String,
    /// Flat `section.key = value` config file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $STEINMC_OUT, then the current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `sde.seed`
    #[arg(long)]
    seed: Option<u64>,
}

/// Entry point behind the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_args(&args) {
        Ok(report) => {
            print!("{}", report.render());
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_args(args: &Args) -> Result<RunReport, CliError> {
    if !COMMANDS.contains(&args.command.as_str()) {
        return Err(CliError::Usage(format!("unknown command `{}`\n{}", args.command, usage())));
    }
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io { path: args.config.clone(), source })?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.sde.seed = seed;
    }
    let out =
        args.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    dispatch(&args.command, &cfg, &out)
}
