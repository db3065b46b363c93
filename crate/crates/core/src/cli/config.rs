use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{ModelParams, NoiseModel, TestFunction};
use crate::stationary::SolverMethod;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    AtLine { line: usize, message: String },
    #[error("{0}")]
    Missing(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::AtLine { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DynamicsKind {
    #[default]
    Model,
    OrnsteinUhlenbeck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSection {
    pub n: u32,
    pub n_list: Vec<u32>,
    pub alpha: f64,
    pub kappa: f64,
    pub delta_exp: f64,
    pub eta_exp: f64,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub tail_target: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSection {
    pub dt: f64,
    pub burn_in: f64,
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub batch_count: usize,
    pub dynamics: DynamicsKind,
    pub ou_theta: f64,
    pub ou_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySection {
    pub h: TestFunction,
    pub tol_equality: f64,
    pub tol_inequality: f64,
    pub slope_min: f64,
    pub slope_max: f64,
    /// `none`, `exact` (uses `study.u`) or `poisson`.
    pub probe: String,
    pub u: TestFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSection {
    pub paths: usize,
    pub half_width: f64,
    pub spacing: f64,
    pub t_max: f64,
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSection {
    pub scan_limit: usize,
}

/// Everything a command needs, with defaults for all keys except
/// `model.lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub scaling: ScalingSection,
    pub solver: SolverSection,
    pub sde: SdeSection,
    pub study: StudySection,
    pub poisson: PoissonSection,
    pub drift: DriftSection,
}

impl RunConfig {
    /// Defaults with the given job arrival rate.
    pub fn with_lambda(lambda: f64) -> Self {
        RunConfig {
            model: ModelParams { lambda, mu: 1.0, gamma: 1.0, nu: 1.0 },
            scaling: ScalingSection {
                n: 25,
                n_list: vec![16, 64, 256],
                alpha: 0.5,
                kappa: 1.0,
                delta_exp: 0.5,
                eta_exp: 0.5,
                noise: NoiseModel::ArrivalOnly,
            },
            solver: SolverSection { tail_target: 1e-8, tol: 1e-12, max_iter: 200_000, method: SolverMethod::Power },
            sde: SdeSection {
                dt: 0.01,
                burn_in: 50.0,
                horizon: 2050.0,
                replications: 4,
                seed: 42,
                batch_count: 20,
                dynamics: DynamicsKind::Model,
                ou_theta: 1.0,
                ou_sigma: 1.0,
            },
            study: StudySection {
                h: TestFunction::monomial(1, 0),
                tol_equality: 1e-6,
                tol_inequality: 1e-6,
                slope_min: -1.0,
                slope_max: -0.1,
                probe: "none".into(),
                u: TestFunction::monomial(3, 0),
            },
            poisson: PoissonSection { paths: 1000, half_width: 4.0, spacing: 0.25, t_max: 200.0, tail_fraction: 0.01 },
            drift: DriftSection { scan_limit: 60 },
        }
    }

    /// Canonical `section.key = value` text; parsing it gives back `self`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let method = match self.solver.method {
            SolverMethod::Power => "power",
            SolverMethod::GaussSeidel => "gauss-seidel",
        };
        let dynamics = match self.sde.dynamics {
            DynamicsKind::Model => "model",
            DynamicsKind::OrnsteinUhlenbeck => "ou",
        };
        let rows: Vec<(&str, String)> = vec![
            ("model.lambda", self.model.lambda.to_string()),
            ("model.mu", self.model.mu.to_string()),
            ("model.gamma", self.model.gamma.to_string()),
            ("model.nu", self.model.nu.to_string()),
            ("scaling.n", self.scaling.n.to_string()),
            ("scaling.n_list", list(&self.scaling.n_list)),
            ("scaling.alpha", self.scaling.alpha.to_string()),
            ("scaling.kappa", self.scaling.kappa.to_string()),
            ("scaling.delta_exp", self.scaling.delta_exp.to_string()),
            ("scaling.eta_exp", self.scaling.eta_exp.to_string()),
            ("scaling.noise", self.scaling.noise.name().to_string()),
            ("solver.tail_target", self.solver.tail_target.to_string()),
            ("solver.tol", self.solver.tol.to_string()),
            ("solver.max_iter", self.solver.max_iter.to_string()),
            ("solver.method", method.to_string()),
            ("sde.dt", self.sde.dt.to_string()),
            ("sde.burn_in", self.sde.burn_in.to_string()),
            ("sde.horizon", self.sde.horizon.to_string()),
            ("sde.replications", self.sde.replications.to_string()),
            ("sde.seed", self.sde.seed.to_string()),
            ("sde.batch_count", self.sde.batch_count.to_string()),
            ("sde.dynamics", dynamics.to_string()),
            ("sde.ou_theta", self.sde.ou_theta.to_string()),
            ("sde.ou_sigma", self.sde.ou_sigma.to_string()),
            ("study.h", self.study.h.to_string()),
            ("study.tol_equality", self.study.tol_equality.to_string()),
            ("study.tol_inequality", self.study.tol_inequality.to_string()),
            ("study.slope_min", self.study.slope_min.to_string()),
            ("study.slope_max", self.study.slope_max.to_string()),
            ("study.probe", self.study.probe.clone()),
            ("study.u", self.study.u.to_string()),
            ("poisson.paths", self.poisson.paths.to_string()),
            ("poisson.half_width", self.poisson.half_width.to_string()),
            ("poisson.spacing", self.poisson.spacing.to_string()),
            ("poisson.t_max", self.poisson.t_max.to_string()),
            ("poisson.tail_fraction", self.poisson.tail_fraction.to_string()),
            ("drift.scan_limit", self.drift.scan_limit.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| at(line, format!("`{key}`: cannot parse `{v}`")))
}

fn positive(line: usize, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(at(line, format!("`{key}` must be positive, got {v}")))
    }
}

/// Parses flat `section.key = value` text. Blank lines and `#` comments are
/// ignored; unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected `section.key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !key.contains('.') {
            return Err(at(line, format!("key `{key}` has no section")));
        }
        if let Some((first, _)) = entries.get(key) {
            return Err(at(line, format!("`{key}` already set on line {first}")));
        }
        entries.insert(key.to_string(), (line, value.to_string()));
    }

    let lambda_line = entries.get("model.lambda").map(|(l, _)| *l);
    let lambda = match entries.get("model.lambda") {
        Some((l, v)) => num::<f64>(*l, "model.lambda", v)?,
        None => return Err(ConfigError::Missing("missing required key `model.lambda`".into())),
    };
    let mut cfg = RunConfig::with_lambda(lambda);

    for (key, (line, v)) in &entries {
        let line = *line;
        let k = key.as_str();
        match k {
            "model.lambda" => {}
            "model.mu" => cfg.model.mu = num(line, k, v)?,
            "model.gamma" => cfg.model.gamma = num(line, k, v)?,
            "model.nu" => cfg.model.nu = num(line, k, v)?,
            "scaling.n" => cfg.scaling.n = num(line, k, v)?,
            "scaling.n_list" => {
                cfg.scaling.n_list =
                    v.split(',').map(|s| num::<u32>(line, k, s.trim())).collect::<Result<Vec<_>, _>>()?
            }
            "scaling.alpha" => cfg.scaling.alpha = num(line, k, v)?,
            "scaling.kappa" => cfg.scaling.kappa = positive(line, k, num(line, k, v)?)?,
            "scaling.delta_exp" => cfg.scaling.delta_exp = positive(line, k, num(line, k, v)?)?,
            "scaling.eta_exp" => cfg.scaling.eta_exp = positive(line, k, num(line, k, v)?)?,
            "scaling.noise" => {
                cfg.scaling.noise = NoiseModel::parse(v)
                    .ok_or_else(|| at(line, format!("`{k}` must be `arrival` or `arrival+service`, got `{v}`")))?
            }
            "solver.tail_target" => cfg.solver.tail_target = num(line, k, v)?,
            "solver.tol" => cfg.solver.tol = positive(line, k, num(line, k, v)?)?,
            "solver.max_iter" => cfg.solver.max_iter = num(line, k, v)?,
            "solver.method" => {
                cfg.solver.method = match v.as_str() {
                    "power" => SolverMethod::Power,
                    "gauss-seidel" => SolverMethod::GaussSeidel,
                    _ => return Err(at(line, format!("`{k}` must be `power` or `gauss-seidel`, got `{v}`"))),
                }
            }
            "sde.dt" => cfg.sde.dt = positive(line, k, num(line, k, v)?)?,
            "sde.burn_in" => cfg.sde.burn_in = num(line, k, v)?,
            "sde.horizon" => cfg.sde.horizon = positive(line, k, num(line, k, v)?)?,
            "sde.replications" => cfg.sde.replications = num(line, k, v)?,
            "sde.seed" => cfg.sde.seed = num(line, k, v)?,
            "sde.batch_count" => cfg.sde.batch_count = num(line, k, v)?,
            "sde.dynamics" => {
                cfg.sde.dynamics = match v.as_str() {
                    "model" => DynamicsKind::Model,
                    "ou" => DynamicsKind::OrnsteinUhlenbeck,
                    _ => return Err(at(line, format!("`{k}` must be `model` or `ou`, got `{v}`"))),
                }
            }
            "sde.ou_theta" => cfg.sde.ou_theta = num(line, k, v)?,
            "sde.ou_sigma" => cfg.sde.ou_sigma = positive(line, k, num(line, k, v)?)?,
            "study.h" => cfg.study.h = v.parse().map_err(|e| at(line, format!("`{k}`: {e}")))?,
            "study.u" => cfg.study.u = v.parse().map_err(|e| at(line, format!("`{k}`: {e}")))?,
            "study.tol_equality" => cfg.study.tol_equality = positive(line, k, num(line, k, v)?)?,
            "study.tol_inequality" => cfg.study.tol_inequality = positive(line, k, num(line, k, v)?)?,
            "study.slope_min" => cfg.study.slope_min = num(line, k, v)?,
            "study.slope_max" => cfg.study.slope_max = num(line, k, v)?,
            "study.probe" => {
                if !matches!(v.as_str(), "none" | "exact" | "poisson") {
                    return Err(at(line, format!("`{k}` must be `none`, `exact` or `poisson`, got `{v}`")));
                }
                cfg.study.probe = v.clone();
            }
            "poisson.paths" => cfg.poisson.paths = num(line, k, v)?,
            "poisson.half_width" => cfg.poisson.half_width = positive(line, k, num(line, k, v)?)?,
            "poisson.spacing" => cfg.poisson.spacing = positive(line, k, num(line, k, v)?)?,
            "poisson.t_max" => cfg.poisson.t_max = positive(line, k, num(line, k, v)?)?,
            "poisson.tail_fraction" => cfg.poisson.tail_fraction = positive(line, k, num(line, k, v)?)?,
            "drift.scan_limit" => cfg.drift.scan_limit = num(line, k, v)?,
            _ => return Err(at(line, format!("unknown key `{k}`"))),
        }
    }

    let line_of = |key: &str| entries.get(key).map(|(l, _)| *l);
    for (key, value) in [
        ("model.lambda", cfg.model.lambda),
        ("model.mu", cfg.model.mu),
        ("model.gamma", cfg.model.gamma),
        ("model.nu", cfg.model.nu),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(at(
                line_of(key).or(lambda_line).unwrap_or(0),
                format!("`{key}` must be a positive rate, got {value}"),
            ));
        }
    }
    let check = |key: &str, ok: bool, what: String| -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(match line_of(key) {
                Some(l) => at(l, what),
                None => ConfigError::Missing(what),
            })
        }
    };
    check("scaling.n", cfg.scaling.n > 0, "`scaling.n` must be positive".into())?;
    check(
        "scaling.alpha",
        cfg.scaling.alpha > 0.0 && cfg.scaling.alpha <= 1.0,
        format!("`scaling.alpha` must lie in (0, 1], got {}", cfg.scaling.alpha),
    )?;
    check(
        "solver.tail_target",
        cfg.solver.tail_target > 0.0 && cfg.solver.tail_target < 1.0,
        format!("`solver.tail_target` must lie in (0, 1), got {}", cfg.solver.tail_target),
    )?;
    check("solver.max_iter", cfg.solver.max_iter > 0, "`solver.max_iter` must be positive".into())?;
    check(
        "sde.horizon",
        cfg.sde.horizon > cfg.sde.burn_in && cfg.sde.burn_in >= 0.0,
        format!("`sde.horizon` ({}) must exceed `sde.burn_in` ({})", cfg.sde.horizon, cfg.sde.burn_in),
    )?;
    check("sde.replications", cfg.sde.replications >= 1, "`sde.replications` must be at least 1".into())?;
    check(
        "sde.batch_count",
        cfg.sde.batch_count >= 10,
        format!("`sde.batch_count` must be at least 10, got {}", cfg.sde.batch_count),
    )?;
    check("poisson.paths", cfg.poisson.paths >= 1, "`poisson.paths` must be at least 1".into())?;
    check(
        "study.slope_max",
        cfg.study.slope_min <= cfg.study.slope_max,
        "`study.slope_min` exceeds `study.slope_max`".into(),
    )?;
    Ok(cfg)
}
