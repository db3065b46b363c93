//! The job/server chain, its centered and scaled version, and the
//! generators acting on test functions.
//!
//! A lattice state `(i, j)` counts jobs and servers. Jobs arrive at rate
//! `lambda` and are served at rate `mu` each while `i ∧ j` are in service.
//! Servers arrive at rate `gamma` and an idle server leaves at rate `nu`.
//!
//! The scaled chain is indexed by `n` with `lambda_n = n * mu` and
//! `gamma_n = kappa * n^alpha * nu`; points are measured from the
//! equilibrium `(n, n + kappa * n^alpha)` in units of `delta` (jobs) and
//! `eta` (servers).

mod function;
mod generator;

pub use function::{ParseFunctionError, Region, RegionSide, ScalarField, SmoothField, TestFunction};
pub use generator::{
    apply_g0, apply_gdiff, apply_gn, error_term_breakdown, transition_rates, ErrorTermBreakdown, LocalStencil,
};

use thiserror::Error;

/// Tolerance used when mapping a scaled point back onto the lattice.
pub const LATTICE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("rate `{name}` must be strictly positive and finite, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("scaling parameter `{name}` is invalid: {value}")]
    InvalidScaling { name: &'static str, value: f64 },
    #[error("point ({x}, {y}) is not the image of a lattice state (preimage ({i}, {j}))")]
    OffLattice { x: f64, y: f64, i: f64, j: f64 },
}

/// The four rate constants of the unscaled chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Job arrival rate.
    pub lambda: f64,
    /// Service rate per busy server.
    pub mu: f64,
    /// Server arrival rate.
    pub gamma: f64,
    /// Departure rate of an idle server.
    pub nu: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, mu: f64, gamma: f64, nu: f64) -> Result<Self, ModelError> {
        let params = ModelParams { lambda, mu, gamma, nu };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("lambda", self.lambda), ("mu", self.mu), ("gamma", self.gamma), ("nu", self.nu)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositiveRate { name, value });
            }
        }
        Ok(())
    }
}

/// Equilibrium of the flow-balance equations, `(lambda/mu, lambda/mu + gamma/nu)`.
pub fn equilibrium_point(params: &ModelParams) -> Result<(f64, f64), ModelError> {
    params.validate()?;
    let x = params.lambda / params.mu;
    Ok((x, x + params.gamma / params.nu))
}

/// A state of the chain: `i` jobs and `j` servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeState {
    pub i: usize,
    pub j: usize,
}

impl LatticeState {
    pub const fn new(i: usize, j: usize) -> Self {
        LatticeState { i, j }
    }
}

/// A point in centered, scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPoint {
    pub x: f64,
    pub y: f64,
}

impl ScaledPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        ScaledPoint { x, y }
    }
}

/// How the second-order coefficient of the limiting diffusion is formed.
///
/// `ArrivalOnly` keeps only the arrival half of the jump variance,
/// `delta^2 * lambda_n`. `ArrivalAndService` also counts the service
/// jumps at their equilibrium rate, giving `2 * delta^2 * lambda_n`,
/// which is the variance the scaled chain actually has near equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    #[default]
    ArrivalOnly,
    ArrivalAndService,
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::ArrivalOnly => "arrival",
            NoiseModel::ArrivalAndService => "arrival+service",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arrival" => Some(NoiseModel::ArrivalOnly),
            "arrival+service" => Some(NoiseModel::ArrivalAndService),
            _ => None,
        }
    }
}

/// One member of the sequence of scaled systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingScheme {
    n: u32,
    alpha: f64,
    kappa: f64,
    delta: f64,
    eta: f64,
    params: ModelParams,
    noise: NoiseModel,
}

impl ScalingScheme {
    /// Builds a scheme from explicit scale factors. Only `mu` and `nu` of
    /// `params` enter the scaled rates; `lambda` and `gamma` are kept for
    /// reporting.
    pub fn new(n: u32, alpha: f64, kappa: f64, delta: f64, eta: f64, params: ModelParams) -> Result<Self, ModelError> {
        params.validate()?;
        if n == 0 {
            return Err(ModelError::InvalidScaling { name: "n", value: 0.0 });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ModelError::InvalidScaling { name: "alpha", value: alpha });
        }
        for (name, value) in [("kappa", kappa), ("delta", delta), ("eta", eta)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidScaling { name, value });
            }
        }
        Ok(ScalingScheme { n, alpha, kappa, delta, eta, params, noise: NoiseModel::default() })
    }

    /// `delta = n^-delta_exp`, `eta = n^-eta_exp`.
    pub fn with_exponents(
        n: u32,
        alpha: f64,
        kappa: f64,
        delta_exp: f64,
        eta_exp: f64,
        params: ModelParams,
    ) -> Result<Self, ModelError> {
        let nf = f64::from(n);
        Self::new(n, alpha, kappa, nf.powf(-delta_exp), nf.powf(-eta_exp), params)
    }

    /// `alpha = 1/2`, `kappa = 1`, `delta = eta = n^{-1/2}`.
    pub fn halfin_whitt(n: u32, params: ModelParams) -> Result<Self, ModelError> {
        Self::with_exponents(n, 0.5, 1.0, 0.5, 0.5, params)
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn noise(&self) -> NoiseModel {
        self.noise
    }
    pub fn mu(&self) -> f64 {
        self.params.mu
    }
    pub fn nu(&self) -> f64 {
        self.params.nu
    }

    /// `n * mu`.
    pub fn lambda_n(&self) -> f64 {
        f64::from(self.n) * self.params.mu
    }

    /// `kappa * n^alpha * nu`.
    pub fn gamma_n(&self) -> f64 {
        self.server_offset() * self.params.nu
    }

    /// `kappa * n^alpha`, the equilibrium surplus of servers over jobs.
    pub fn server_offset(&self) -> f64 {
        self.kappa * f64::from(self.n).powf(self.alpha)
    }

    /// Rates of the unscaled chain that the scaled process is built on.
    pub fn chain_params(&self) -> ModelParams {
        ModelParams { lambda: self.lambda_n(), mu: self.params.mu, gamma: self.gamma_n(), nu: self.params.nu }
    }

    pub fn to_scaled(&self, state: LatticeState) -> ScaledPoint {
        let n = f64::from(self.n);
        ScaledPoint { x: self.delta * (state.i as f64 - n), y: self.eta * (state.j as f64 - n - self.server_offset()) }
    }

    /// Inverse of [`ScalingScheme::to_scaled`]. Rejects points whose
    /// preimage is off the lattice by more than [`LATTICE_TOLERANCE`].
    pub fn to_lattice(&self, p: ScaledPoint) -> Result<LatticeState, ModelError> {
        let (i, j) = self.preimage(p);
        let (ri, rj) = (i.round(), j.round());
        let tol_i = LATTICE_TOLERANCE * ri.abs().max(1.0);
        let tol_j = LATTICE_TOLERANCE * rj.abs().max(1.0);
        if (i - ri).abs() > tol_i || (j - rj).abs() > tol_j || ri < 0.0 || rj < 0.0 {
            return Err(ModelError::OffLattice { x: p.x, y: p.y, i, j });
        }
        Ok(LatticeState::new(ri as usize, rj as usize))
    }

    /// Real-valued preimage `(x/delta + n, y/eta + n + kappa n^alpha)`.
    pub fn preimage(&self, p: ScaledPoint) -> (f64, f64) {
        let n = f64::from(self.n);
        (p.x / self.delta + n, p.y / self.eta + n + self.server_offset())
    }

    /// `(b1, b2)`: busy servers and idle servers at a scaled point.
    pub fn drift_fields(&self, p: ScaledPoint) -> (f64, f64) {
        let (i, j) = self.preimage(p);
        (i.min(j), (p.y / self.eta - p.x / self.delta + self.server_offset()).max(0.0))
    }

    /// First-order coefficients `(a_x, a_y)` of the diffusion generator.
    ///
    /// `a_x = -[x ∧ (y delta/eta + delta kappa n^alpha)] mu` and
    /// `a_y = eta kappa n^alpha nu - (y - x eta/delta + eta kappa n^alpha)^+ nu`;
    /// they equal `delta (lambda_n - b1 mu)` and `eta (gamma_n - b2 nu)`.
    pub fn drift_coefficients(&self, p: ScaledPoint) -> (f64, f64) {
        let offset = self.server_offset();
        let (mu, nu) = (self.params.mu, self.params.nu);
        let ax = -(p.x.min(p.y * self.delta / self.eta + self.delta * offset)) * mu;
        let ay = self.eta * offset * nu - (p.y - p.x * self.eta / self.delta + self.eta * offset).max(0.0) * nu;
        (ax, ay)
    }

    /// Infinitesimal variance of the diffusion in the x direction.
    pub fn diffusion_variance(&self) -> f64 {
        let base = self.delta * self.delta * self.lambda_n();
        match self.noise {
            NoiseModel::ArrivalOnly => base,
            NoiseModel::ArrivalAndService => 2.0 * base,
        }
    }

    /// Coefficient of `u_xx` in the diffusion generator.
    pub fn second_order_coefficient(&self) -> f64 {
        0.5 * self.diffusion_variance()
    }

    /// Whether the lattice point lies in the closed region
    /// `{x/delta + n <= y/eta + n + kappa n^alpha}`, i.e. `i <= j`.
    pub fn in_server_region(&self, p: ScaledPoint) -> bool {
        self.region().contains(p)
    }

    /// The half-plane `{i <= j}` expressed in scaled coordinates.
    pub fn region(&self) -> Region {
        Region::new(self.delta, self.eta, self.server_offset())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn scheme_100() -> ScalingScheme {
        ScalingScheme::new(100, 0.5, 1.0, 0.1, 0.1, unit()).unwrap()
    }

    #[test]
    fn equilibrium_examples() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(equilibrium_point(&p).unwrap(), (2.0, 2.5));
        let p = ModelParams::new(3.0, 3.0, 0.7, 0.7).unwrap();
        assert_eq!(equilibrium_point(&p).unwrap(), (1.0, 2.0));
    }

    #[test]
    fn equilibrium_rejects_bad_rates() {
        let bad = ModelParams { lambda: 1.0, mu: 0.0, gamma: 1.0, nu: 1.0 };
        assert!(matches!(equilibrium_point(&bad), Err(ModelError::NonPositiveRate { name: "mu", .. })));
        assert!(ModelParams::new(1.0, 1.0, -2.0, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn server_gap_is_gamma_over_nu() {
        for (l, m, g, v) in [(2.0, 1.0, 1.0, 2.0), (0.3, 5.0, 7.0, 0.25), (10.0, 0.1, 1.0, 3.0)] {
            let (x, y) = equilibrium_point(&ModelParams::new(l, m, g, v).unwrap()).unwrap();
            assert!((y - x - g / v).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_rates() {
        let s = ScalingScheme::new(16, 0.5, 2.0, 0.25, 0.25, ModelParams::new(1.0, 3.0, 1.0, 0.5).unwrap()).unwrap();
        assert_eq!(s.lambda_n(), 48.0);
        assert_eq!(s.gamma_n(), 2.0 * 4.0 * 0.5);
        assert_eq!(s.chain_params().lambda, 48.0);
    }

    #[test]
    fn scheme_validation() {
        assert!(ScalingScheme::new(0, 0.5, 1.0, 0.1, 0.1, unit()).is_err());
        assert!(ScalingScheme::new(4, 1.5, 1.0, 0.1, 0.1, unit()).is_err());
        assert!(ScalingScheme::new(4, 0.5, 1.0, 0.0, 0.1, unit()).is_err());
        assert!(ScalingScheme::new(4, 1.0, 1.0, 0.1, 0.1, unit()).is_ok());
    }

    #[test]
    fn coordinate_map_origin() {
        let s = scheme_100();
        let p = s.to_scaled(LatticeState::new(0, 0));
        assert!((p.x + 10.0).abs() < 1e-12);
        assert!((p.y + 11.0).abs() < 1e-12);
        assert_eq!(s.to_lattice(p).unwrap(), LatticeState::new(0, 0));
    }

    #[test]
    fn coordinate_map_centering() {
        let s = ScalingScheme::halfin_whitt(10, unit()).unwrap();
        // n + kappa n^alpha = 10 + 3.162..., nearest lattice j = 13
        let p = s.to_scaled(LatticeState::new(10, 13));
        assert_eq!(p.x, 0.0);
        let offset = 13.0 - 10.0 - 10f64.sqrt();
        assert!((p.y.abs() - s.eta() * offset.abs()).abs() < 1e-12);
    }

    #[test]
    fn to_lattice_rejects_off_grid_and_negative() {
        let s = scheme_100();
        assert!(s.to_lattice(ScaledPoint::new(0.05, 0.0)).is_err());
        assert!(s.to_lattice(ScaledPoint::new(-10.1, -11.0)).is_err());
        let ok = s.to_scaled(LatticeState::new(3, 7));
        assert_eq!(s.to_lattice(ok).unwrap(), LatticeState::new(3, 7));
    }

    #[test]
    fn drift_field_examples() {
        let s = scheme_100();
        let (b1, b2) = s.drift_fields(ScaledPoint::new(0.0, 0.0));
        assert!((b1 - 100.0).abs() < 1e-9 && (b2 - 10.0).abs() < 1e-9);
        let (b1, b2) = s.drift_fields(ScaledPoint::new(1.0, -0.5));
        assert!((b1 - 105.0).abs() < 1e-9 && b2 == 0.0);
        let (b1, b2) = s.drift_fields(s.to_scaled(LatticeState::new(0, 0)));
        assert!(b1.abs() < 1e-9 && b2.abs() < 1e-9);
    }

    #[test]
    fn drift_coefficients_match_rate_form() {
        let s = scheme_100();
        for &(x, y) in &[(0.0, 0.0), (1.0, -0.5), (-3.0, 2.0), (0.4, 0.7), (2.5, -4.0)] {
            let p = ScaledPoint::new(x, y);
            let (b1, b2) = s.drift_fields(p);
            let (ax, ay) = s.drift_coefficients(p);
            assert!((ax - s.delta() * (s.lambda_n() - b1 * s.mu())).abs() < 1e-9);
            assert!((ay - s.eta() * (s.gamma_n() - b2 * s.nu())).abs() < 1e-9);
        }
        assert_eq!(s.drift_coefficients(ScaledPoint::new(0.0, 0.0)).0, 0.0);
    }

    #[test]
    fn noise_model_variance() {
        let s = scheme_100();
        assert!((s.diffusion_variance() - 1.0).abs() < 1e-12);
        let s2 = s.with_noise(NoiseModel::ArrivalAndService);
        assert!((s2.diffusion_variance() - 2.0).abs() < 1e-12);
        assert_eq!(NoiseModel::parse(NoiseModel::ArrivalAndService.name()), Some(NoiseModel::ArrivalAndService));
    }

    #[test]
    fn server_region_is_closed() {
        let s = scheme_100();
        for (i, j) in [(5, 5), (4, 5), (6, 5), (110, 110), (0, 0)] {
            let p = s.to_scaled(LatticeState::new(i, j));
            assert_eq!(s.in_server_region(p), i <= j, "({i},{j})");
        }
    }
}
