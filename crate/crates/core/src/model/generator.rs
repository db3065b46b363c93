use super::{LatticeState, ModelParams, ScalarField, ScaledPoint, ScalingScheme, SmoothField};

/// Outgoing transitions from `state` with strictly positive rate, in the
/// order job arrival, service completion, server arrival, idle departure.
pub fn transition_rates(state: LatticeState, params: &ModelParams) -> Vec<(LatticeState, f64)> {
    let LatticeState { i, j } = state;
    let mut out = Vec::with_capacity(4);
    out.push((LatticeState::new(i + 1, j), params.lambda));
    let busy = i.min(j);
    if busy > 0 {
        out.push((LatticeState::new(i - 1, j), busy as f64 * params.mu));
    }
    out.push((LatticeState::new(i, j + 1), params.gamma));
    let idle = j.saturating_sub(i);
    if idle > 0 {
        out.push((LatticeState::new(i, j - 1), idle as f64 * params.nu));
    }
    out
}

fn lattice_point(i: usize, j: usize) -> ScaledPoint {
    ScaledPoint::new(i as f64, j as f64)
}

/// Generator of the unscaled chain. `f` is evaluated at raw lattice
/// coordinates `(i, j)`.
pub fn apply_g0<F: ScalarField + ?Sized>(f: &F, state: LatticeState, params: &ModelParams) -> f64 {
    let LatticeState { i, j } = state;
    let f0 = f.value(lattice_point(i, j));
    let mut total = params.lambda * (f.value(lattice_point(i + 1, j)) - f0);
    let busy = i.min(j);
    if busy > 0 {
        total += busy as f64 * params.mu * (f.value(lattice_point(i - 1, j)) - f0);
    }
    total += params.gamma * (f.value(lattice_point(i, j + 1)) - f0);
    let idle = j.saturating_sub(i);
    if idle > 0 {
        total += idle as f64 * params.nu * (f.value(lattice_point(i, j - 1)) - f0);
    }
    total
}

/// Generator of the centered, scaled chain. Shifts are `delta` in `x` and
/// `eta` in `y`.
pub fn apply_gn<F: ScalarField + ?Sized>(u: &F, p: ScaledPoint, scheme: &ScalingScheme) -> f64 {
    let (b1, b2) = scheme.drift_fields(p);
    let (d, e) = (scheme.delta(), scheme.eta());
    let u0 = u.value(p);
    let mut total = scheme.lambda_n() * (u.value(ScaledPoint::new(p.x + d, p.y)) - u0)
        + scheme.gamma_n() * (u.value(ScaledPoint::new(p.x, p.y + e)) - u0);
    if b1 != 0.0 {
        total += b1 * scheme.mu() * (u.value(ScaledPoint::new(p.x - d, p.y)) - u0);
    }
    if b2 != 0.0 {
        total += b2 * scheme.nu() * (u.value(ScaledPoint::new(p.x, p.y - e)) - u0);
    }
    total
}

/// Generator of the limiting diffusion: `a_x u_x + a_y u_y + s u_xx`, with
/// `s` the scheme's second-order coefficient.
pub fn apply_gdiff<F: SmoothField + ?Sized>(u: &F, p: ScaledPoint, scheme: &ScalingScheme) -> f64 {
    let (ax, ay) = scheme.drift_coefficients(p);
    ax * u.dx(p) + ay * u.dy(p) + scheme.second_order_coefficient() * u.dxx(p)
}

/// Split of the scaled-chain generator into the diffusion generator and
/// four remainders, one per jump direction.
///
/// The remainders are exact: each is the finite difference minus its
/// Taylor part, so all seven fields sum to the scaled-chain generator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorTermBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub drift_x_term: f64,
    pub drift_y_term: f64,
    pub second_order_term: f64,
}

/// Function values and derivatives needed for a breakdown at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStencil {
    pub center: f64,
    pub x_plus: f64,
    pub x_minus: f64,
    pub y_plus: f64,
    pub y_minus: f64,
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
}

impl ErrorTermBreakdown {
    pub fn from_stencil(s: &LocalStencil, p: ScaledPoint, scheme: &ScalingScheme) -> Self {
        let (b1, b2) = scheme.drift_fields(p);
        let (ax, ay) = scheme.drift_coefficients(p);
        let (d, e) = (scheme.delta(), scheme.eta());
        let (lam, gam) = (scheme.lambda_n(), scheme.gamma_n());
        let (mu, nu) = (scheme.mu(), scheme.nu());
        let second = scheme.second_order_coefficient();
        let arrival_second = 0.5 * lam * d * d;

        let e1 = lam * (s.x_plus - s.center) - lam * d * s.ux - arrival_second * s.uxx;
        let e2 = b1 * mu * (s.x_minus - s.center) + b1 * mu * d * s.ux - (second - arrival_second) * s.uxx;
        let e3 = gam * (s.y_plus - s.center) - gam * e * s.uy;
        let e4 = b2 * nu * (s.y_minus - s.center) + b2 * nu * e * s.uy;
        ErrorTermBreakdown {
            e1,
            e2,
            e3,
            e4,
            drift_x_term: ax * s.ux,
            drift_y_term: ay * s.uy,
            second_order_term: second * s.uxx,
        }
    }

    pub fn remainder(&self) -> f64 {
        self.e1 + self.e2 + self.e3 + self.e4
    }

    pub fn diffusion_part(&self) -> f64 {
        self.drift_x_term + self.drift_y_term + self.second_order_term
    }

    pub fn total(&self) -> f64 {
        self.diffusion_part() + self.remainder()
    }
}

/// Exact remainders `E1..E4` of the scaled-chain generator against the
/// diffusion generator at `p`.
pub fn error_term_breakdown<F: SmoothField + ?Sized>(
    u: &F,
    p: ScaledPoint,
    scheme: &ScalingScheme,
) -> ErrorTermBreakdown {
    let (d, e) = (scheme.delta(), scheme.eta());
    let stencil = LocalStencil {
        center: u.value(p),
        x_plus: u.value(ScaledPoint::new(p.x + d, p.y)),
        x_minus: u.value(ScaledPoint::new(p.x - d, p.y)),
        y_plus: u.value(ScaledPoint::new(p.x, p.y + e)),
        y_minus: u.value(ScaledPoint::new(p.x, p.y - e)),
        ux: u.dx(p),
        uy: u.dy(p),
        uxx: u.dxx(p),
    };
    ErrorTermBreakdown::from_stencil(&stencil, p, scheme)
}
