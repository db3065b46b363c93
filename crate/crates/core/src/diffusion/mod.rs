//! Euler-Maruyama simulation of the limiting diffusion.
//!
//! The diffusion is the one whose generator is
//! `a_x u_x + a_y u_y + s u_xx`: noise enters the `x` coordinate only, with
//! variance `2 s` per unit time. A one-dimensional Ornstein-Uhlenbeck
//! process is available as a closed-form reference.

mod poisson;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{ScalarField, ScaledPoint, ScalingScheme};

pub use poisson::{
    numeric_partials, solve_poisson_mc, solve_poisson_mc_centered, NodePartials, PoissonGrid, PoissonOptions,
    PoissonSolution,
};

/// Identifier of the random source, recorded in run metadata.
pub const GENERATOR_ID: &str =
    "ChaCha8Rng (rand_chacha 0.9, seed_from_u64 + set_stream) with StandardNormal (rand_distr 0.5)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("trajectory left the finite range at step {step} of replication {replication}: state ({x}, {y})")]
    NonFinite { replication: usize, step: u64, x: f64, y: f64 },
    #[error("poisson integral tail not below {fraction} of the accumulated value by T = {t_max}: tail {tail:e}, accumulated {accumulated:e}, last chunk decay ratio {ratio}")]
    TailUnmet { t_max: f64, fraction: f64, tail: f64, accumulated: f64, ratio: f64 },
    #[error("node ({ix}, {iy}) has no interior neighbours on a {nx}x{ny} grid")]
    BoundaryNode { ix: usize, iy: usize, nx: usize, ny: usize },
}

/// Time discretisation and sampling plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub dt: f64,
    /// Time discarded at the start of each replication.
    pub burn_in: f64,
    /// Total simulated time per replication, burn-in included.
    pub horizon: f64,
    pub replications: usize,
    pub base_seed: u64,
    /// Batches per replication for the batch-means interval.
    pub batch_count: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig { dt: 0.01, burn_in: 50.0, horizon: 2050.0, replications: 4, base_seed: 42, batch_count: 20 }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.burn_in.is_nan() || self.burn_in < 0.0 {
            return bad(format!("burn_in must be nonnegative, got {}", self.burn_in));
        }
        if !(self.horizon > self.burn_in && self.horizon.is_finite()) {
            return bad(format!("horizon {} must exceed burn_in {}", self.horizon, self.burn_in));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.batch_count < 10 {
            return bad(format!("batch_count must be at least 10, got {}", self.batch_count));
        }
        if self.sampled_steps() < self.batch_count as u64 {
            return bad("fewer post-burn-in steps than batches".into());
        }
        Ok(())
    }

    pub fn burn_in_steps(&self) -> u64 {
        (self.burn_in / self.dt).round() as u64
    }

    /// Post-burn-in steps per replication, a multiple of `batch_count`.
    pub fn sampled_steps(&self) -> u64 {
        let total = ((self.horizon - self.burn_in) / self.dt).round() as u64;
        total - total % self.batch_count as u64
    }
}

/// The process being simulated.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// The diffusion limit of a scaled chain.
    Model(ScalingScheme),
    /// `dX = -theta X dt + sigma dW` in `x`; `y` stays at its start.
    OrnsteinUhlenbeck { theta: f64, sigma: f64 },
}

impl Dynamics {
    pub fn drift(&self, p: ScaledPoint) -> (f64, f64) {
        match self {
            Dynamics::Model(s) => s.drift_coefficients(p),
            Dynamics::OrnsteinUhlenbeck { theta, .. } => (-theta * p.x, 0.0),
        }
    }

    /// Standard deviation per unit time of the `x` noise.
    pub fn noise_scale(&self) -> f64 {
        match self {
            Dynamics::Model(s) => s.diffusion_variance().sqrt(),
            Dynamics::OrnsteinUhlenbeck { sigma, .. } => *sigma,
        }
    }

    /// Coefficient of `u_xx` in the generator.
    pub fn second_order_coefficient(&self) -> f64 {
        0.5 * self.noise_scale().powi(2)
    }

    /// Start of stationary runs: the equilibrium point, mapped to the origin.
    pub fn start(&self) -> ScaledPoint {
        ScaledPoint::new(0.0, 0.0)
    }

    pub fn is_one_dimensional(&self) -> bool {
        matches!(self, Dynamics::OrnsteinUhlenbeck { .. })
    }
}

/// One Euler-Maruyama step driven by the standard normal draw `g`.
pub fn em_step(p: ScaledPoint, dynamics: &Dynamics, dt: f64, g: f64) -> ScaledPoint {
    let (ax, ay) = dynamics.drift(p);
    ScaledPoint::new(p.x + ax * dt + dynamics.noise_scale() * dt.sqrt() * g, p.y + ay * dt)
}

/// Random stream `stream` of the family seeded by `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Monte Carlo estimate of a stationary expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub mean: f64,
    /// Standard error from the spread of the batch means.
    pub std_error: f64,
    /// Half-width of the 95% Student-t interval.
    pub ci_half_width: f64,
    /// Number of batch means behind the interval.
    pub batches: usize,
    pub steps_per_batch: u64,
}

impl PathEstimate {
    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.ci_half_width
    }
}

/// Batch-means summary with running means, so that equal inputs give
/// exactly that value and a zero-width interval.
pub(crate) fn summarize(batch_means: &[f64], steps_per_batch: u64) -> PathEstimate {
    let k = batch_means.len();
    let mut mean = 0.0;
    for (m, &b) in batch_means.iter().enumerate() {
        mean += (b - mean) / (m + 1) as f64;
    }
    let ss: f64 = batch_means.iter().map(|b| (b - mean).powi(2)).sum();
    let var = if k > 1 { ss / (k - 1) as f64 } else { 0.0 };
    let std_error = (var / k as f64).sqrt();
    let quantile = if k > 1 {
        StudentsT::new(0.0, 1.0, (k - 1) as f64).map(|t| t.inverse_cdf(0.975)).unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    let ci_half_width = if std_error == 0.0 { 0.0 } else { quantile * std_error };
    PathEstimate { mean, std_error, ci_half_width, batches: k, steps_per_batch }
}

/// Time average of `h` over `[burn_in, horizon]`, pooled over
/// replications. Replication `r` uses stream `r` of `base_seed` and batch
/// means are merged in replication order.
pub fn simulate_stationary_expectation<F: ScalarField + ?Sized>(
    h: &F,
    dynamics: &Dynamics,
    cfg: &SdeConfig,
) -> Result<PathEstimate, SimError> {
    cfg.validate()?;
    let burn = cfg.burn_in_steps();
    let per_batch = cfg.sampled_steps() / cfg.batch_count as u64;
    let mut batch_means = Vec::with_capacity(cfg.replications * cfg.batch_count);
    for r in 0..cfg.replications {
        let mut rng = stream_rng(cfg.base_seed, r as u64);
        let mut p = dynamics.start();
        let mut step = 0u64;
        let mut advance = |p: &mut ScaledPoint, rng: &mut ChaCha8Rng| {
            *p = em_step(*p, dynamics, cfg.dt, normal(rng));
            step += 1;
            if p.x.is_finite() && p.y.is_finite() {
                Ok(())
            } else {
                Err(SimError::NonFinite { replication: r, step, x: p.x, y: p.y })
            }
        };
        for _ in 0..burn {
            advance(&mut p, &mut rng)?;
        }
        for _ in 0..cfg.batch_count {
            let mut m = 0.0;
            for k in 0..per_batch {
                advance(&mut p, &mut rng)?;
                m += (h.value(p) - m) / (k + 1) as f64;
            }
            batch_means.push(m);
        }
    }
    Ok(summarize(&batch_means, per_batch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, TestFunction};

    fn ou() -> Dynamics {
        Dynamics::OrnsteinUhlenbeck { theta: 1.0, sigma: 1.0 }
    }

    #[test]
    fn deterministic_step() {
        let p = em_step(ScaledPoint::new(1.0, 0.0), &ou(), 0.01, 0.0);
        assert!((p.x - 0.99).abs() < 1e-15);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn antithetic_draws_cancel_without_drift() {
        let still = Dynamics::OrnsteinUhlenbeck { theta: 0.0, sigma: 2.0 };
        let start = ScaledPoint::new(0.3, -1.0);
        let p = em_step(em_step(start, &still, 0.04, 0.7), &still, 0.04, -0.7);
        assert!((p.x - start.x).abs() < 1e-15 && p.y == start.y);
    }

    #[test]
    fn model_step_uses_shared_drift() {
        let s = ScalingScheme::halfin_whitt(16, ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let origin = s.to_scaled(crate::model::LatticeState::new(0, 0));
        let d = Dynamics::Model(s);
        let next = em_step(origin, &d, 0.1, 0.0);
        let (ax, ay) = s.drift_coefficients(origin);
        assert_eq!(next.x, origin.x + ax * 0.1);
        assert_eq!(next.y, origin.y + ay * 0.1);
        assert_eq!(d.noise_scale(), 1.0);
    }

    #[test]
    fn constant_is_exact() {
        let cfg = SdeConfig { horizon: 60.0, burn_in: 10.0, replications: 2, ..Default::default() };
        let est = simulate_stationary_expectation(&TestFunction::constant(0.1), &ou(), &cfg).unwrap();
        assert_eq!(est.mean, 0.1);
        assert_eq!(est.ci_half_width, 0.0);
        assert_eq!(est.batches, 40);
    }

    #[test]
    fn repeatable() {
        let cfg = SdeConfig { horizon: 100.0, burn_in: 10.0, replications: 2, ..Default::default() };
        let h = TestFunction::monomial(2, 0);
        let a = simulate_stationary_expectation(&h, &ou(), &cfg).unwrap();
        let b = simulate_stationary_expectation(&h, &ou(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_stationary_expectation(&h, &ou(), &SdeConfig { base_seed: 7, ..cfg }).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn config_validation() {
        let ok = SdeConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SdeConfig { dt: 0.0, ..ok },
            SdeConfig { horizon: 10.0, burn_in: 10.0, ..ok },
            SdeConfig { replications: 0, ..ok },
            SdeConfig { batch_count: 9, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let unstable = Dynamics::OrnsteinUhlenbeck { theta: -2000.0, sigma: 1.0 };
        let cfg = SdeConfig { horizon: 100.0, burn_in: 10.0, replications: 1, ..Default::default() };
        let err = simulate_stationary_expectation(&TestFunction::monomial(1, 0), &unstable, &cfg).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { replication: 0, .. }), "{err}");
    }
}
