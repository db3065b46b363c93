use crate::diffusion::PoissonSolution;
use crate::model::{
    ErrorTermBreakdown, LocalStencil, ScalarField, ScaledPoint, ScalingScheme, SmoothField, TestFunction,
};
use crate::stationary::StationaryDistribution;

/// A stencil for the error-term split plus a noise bound on the sum of the
/// four remainders at that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTerms {
    pub stencil: LocalStencil,
    pub noise: f64,
}

/// Something that can play the role of `u` in the generator comparison.
pub trait ErrorTermSource {
    /// `None` where `u` or its derivatives are unavailable.
    fn local_terms(&self, p: ScaledPoint, scheme: &ScalingScheme) -> Option<LocalTerms>;
}

impl ErrorTermSource for TestFunction {
    fn local_terms(&self, p: ScaledPoint, scheme: &ScalingScheme) -> Option<LocalTerms> {
        let (d, e) = (scheme.delta(), scheme.eta());
        let stencil = LocalStencil {
            center: self.value(p),
            x_plus: self.value(ScaledPoint::new(p.x + d, p.y)),
            x_minus: self.value(ScaledPoint::new(p.x - d, p.y)),
            y_plus: self.value(ScaledPoint::new(p.x, p.y + e)),
            y_minus: self.value(ScaledPoint::new(p.x, p.y - e)),
            ux: self.dx(p),
            uy: self.dy(p),
            uxx: self.dxx(p),
        };
        Some(LocalTerms { stencil, noise: 0.0 })
    }
}

/// A grid solution enters through its local quadratic model: interpolated
/// central-difference derivatives, with the four neighbour values taken
/// from the second-order expansion. On a grid whose nodes are the lattice
/// images this reproduces the node values exactly, so `E1` vanishes.
impl ErrorTermSource for PoissonSolution {
    fn local_terms(&self, p: ScaledPoint, scheme: &ScalingScheme) -> Option<LocalTerms> {
        let m = self.local_partials(p)?;
        let (d, e) = (scheme.delta(), scheme.eta());
        let stencil = LocalStencil {
            center: m.u,
            x_plus: m.u + d * m.ux + 0.5 * d * d * m.uxx,
            x_minus: m.u - d * m.ux + 0.5 * d * d * m.uxx,
            y_plus: m.u + e * m.uy + 0.5 * e * e * m.uyy,
            y_minus: m.u - e * m.uy + 0.5 * e * e * m.uyy,
            ux: m.ux,
            uy: m.uy,
            uxx: m.uxx,
        };
        let (b1, b2) = scheme.drift_fields(p);
        let (ax, ay) = scheme.drift_coefficients(p);
        let (lam, gam) = (scheme.lambda_n(), scheme.gamma_n());
        let (mu, nu) = (scheme.mu(), scheme.nu());
        let chain_noise = (lam - b1 * mu).abs() * d * m.noise_ux
            + 0.5 * (lam + b1 * mu) * d * d * m.noise_uxx
            + (gam - b2 * nu).abs() * e * m.noise_uy
            + 0.5 * (gam + b2 * nu) * e * e * m.noise_uyy;
        let diffusion_noise =
            ax.abs() * m.noise_ux + ay.abs() * m.noise_uy + scheme.second_order_coefficient() * m.noise_uxx;
        Some(LocalTerms { stencil, noise: chain_noise + diffusion_noise })
    }
}

/// Stationary expectations of the four remainders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorExpectations {
    /// `E_pi[E1..E4]` over states where `u` is available.
    pub e: [f64; 4],
    /// `E_pi[G_n u]` over the same states.
    pub chain_generator: f64,
    /// `E_pi[G u]` over the same states.
    pub diffusion_generator: f64,
    /// `E_pi` of the pointwise noise bound on `E1 + .. + E4`.
    pub noise: f64,
    /// Stationary mass of states skipped because `u` was unavailable.
    pub excluded_mass: f64,
}

impl ErrorExpectations {
    pub fn total(&self) -> f64 {
        self.e.iter().sum()
    }
}

pub fn estimate_error_expectations<S: ErrorTermSource + ?Sized>(
    dist: &StationaryDistribution,
    u: &S,
    scheme: &ScalingScheme,
) -> ErrorExpectations {
    let mut out = ErrorExpectations {
        e: [0.0; 4],
        chain_generator: 0.0,
        diffusion_generator: 0.0,
        noise: 0.0,
        excluded_mass: 0.0,
    };
    for (s, prob) in dist.iter() {
        if prob == 0.0 {
            continue;
        }
        let p = scheme.to_scaled(s);
        match u.local_terms(p, scheme) {
            Some(t) => {
                let b = ErrorTermBreakdown::from_stencil(&t.stencil, p, scheme);
                for (acc, v) in out.e.iter_mut().zip([b.e1, b.e2, b.e3, b.e4]) {
                    *acc += prob * v;
                }
                out.chain_generator += prob * b.total();
                out.diffusion_generator += prob * b.diffusion_part();
                out.noise += prob * t.noise;
            }
            None => out.excluded_mass += prob,
        }
    }
    out
}

/// Both sides of the expectation-gap identity
/// `E_pi[h] - E[h(X_inf)] = E_pi[(G - G_n) u]` for `u` solving `G u = h - hbar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinIdentity {
    pub chain_mean: f64,
    pub diffusion_mean: f64,
    /// `E_pi[(G - G_n) u] = -E_pi[E1 + .. + E4]`.
    pub generator_gap: f64,
    pub residual: f64,
    /// Noise bound propagated from `u` (zero for exact test functions).
    pub noise_bound: f64,
    pub excluded_mass: f64,
}

pub fn stein_identity_check<H: ScalarField + ?Sized, S: ErrorTermSource + ?Sized>(
    dist: &StationaryDistribution,
    u: &S,
    h: &H,
    scheme: &ScalingScheme,
    diffusion_mean: f64,
) -> SteinIdentity {
    let chain_mean = crate::stationary::expect(dist, h, scheme);
    let terms = estimate_error_expectations(dist, u, scheme);
    let generator_gap = -terms.total();
    SteinIdentity {
        chain_mean,
        diffusion_mean,
        generator_gap,
        residual: ((chain_mean - diffusion_mean) - generator_gap).abs(),
        noise_bound: terms.noise,
        excluded_mass: terms.excluded_mass,
    }
}
