use super::{StationaryDistribution, TruncatedChain};
use crate::model::{transition_rates, LatticeState, ScalarField, ScalingScheme};

/// Stationarity residuals of one test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCheck {
    /// `|E_pi[G_trunc f]|`, zero up to solver tolerance.
    pub truncated: f64,
    /// `|E_pi[G_n f]|` with the transitions across the box faces restored.
    pub untruncated: f64,
    /// `sum over face states of pi * (removed rate) * |f increment|`,
    /// which bounds `|truncated - untruncated|`.
    pub boundary_correction: f64,
}

/// Generator residuals of `f` (evaluated at scaled coordinates) under `dist`.
pub fn verify_stationarity<F: ScalarField + ?Sized>(
    dist: &StationaryDistribution,
    f: &F,
    chain: &TruncatedChain,
    scheme: &ScalingScheme,
) -> StationarityCheck {
    let value = |s: LatticeState| f.value(scheme.to_scaled(s));
    let mut truncated = 0.0;
    let mut untruncated = 0.0;
    let mut boundary_correction = 0.0;
    for (s, p) in dist.iter() {
        if p == 0.0 {
            continue;
        }
        let here = value(s);
        let kept: f64 = chain.transitions(s).iter().map(|&(t, r)| r * (value(t) - here)).sum();
        let full: f64 = transition_rates(s, chain.params()).iter().map(|&(t, r)| r * (value(t) - here)).sum();
        let removed: f64 = chain.zeroed_transitions(s).iter().map(|&(t, r)| r * (value(t) - here).abs()).sum();
        truncated += p * kept;
        untruncated += p * full;
        boundary_correction += p * removed;
    }
    StationarityCheck { truncated: truncated.abs(), untruncated: untruncated.abs(), boundary_correction }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `lhs = rhs`; `gap = lhs - rhs`.
    Equality,
    /// `lhs <= rhs`; `gap = rhs - lhs` is the slack.
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTolerance {
    pub equality: f64,
    pub inequality: f64,
}

impl Default for MomentTolerance {
    fn default() -> Self {
        MomentTolerance { equality: 1e-6, inequality: 1e-6 }
    }
}

/// One moment relation, evaluated in the form used by the checks and in
/// the form as originally displayed.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub name: &'static str,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub boundary_correction: f64,
    pub pass: bool,
    pub literal_lhs: f64,
    pub literal_rhs: f64,
    pub literal_pass: bool,
}

impl MomentRow {
    fn new(
        name: &'static str,
        relation: Relation,
        (lhs, rhs): (f64, f64),
        (literal_lhs, literal_rhs): (f64, f64),
        boundary_correction: f64,
        tol: &MomentTolerance,
    ) -> Self {
        let judge = |l: f64, r: f64| match relation {
            Relation::Equality => (l - r, (l - r).abs() <= boundary_correction + tol.equality),
            Relation::UpperBound => (r - l, r - l >= -tol.inequality),
        };
        let (gap, pass) = judge(lhs, rhs);
        let (_, literal_pass) = judge(literal_lhs, literal_rhs);
        MomentRow { name, relation, lhs, rhs, gap, boundary_correction, pass, literal_lhs, literal_rhs, literal_pass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, name: &str) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Default)]
struct Moments {
    i: f64,
    j: f64,
    x: f64,
    y: f64,
    y2: f64,
    b1: f64,
    b2: f64,
    b1_sq: f64,
    b2_sq: f64,
    i_in_region: f64,
    job_face: f64,
    server_face: f64,
}

fn moments(dist: &StationaryDistribution, scheme: &ScalingScheme) -> Moments {
    let bx = dist.truncation_box();
    let mut m = Moments::default();
    for (s, p) in dist.iter() {
        let (i, j) = (s.i as f64, s.j as f64);
        let q = scheme.to_scaled(s);
        let b1 = s.i.min(s.j) as f64;
        let b2 = s.j.saturating_sub(s.i) as f64;
        m.i += p * i;
        m.j += p * j;
        m.x += p * q.x;
        m.y += p * q.y;
        m.y2 += p * q.y * q.y;
        m.b1 += p * b1;
        m.b2 += p * b2;
        m.b1_sq += p * b1 * b1;
        m.b2_sq += p * b2 * b2;
        if s.i <= s.j {
            m.i_in_region += p * i;
        }
        if s.i == bx.i_max {
            m.job_face += p;
        }
        if s.j == bx.j_max {
            m.server_face += p;
        }
    }
    m
}

/// Evaluates the six first- and second-moment relations of the stationary
/// scaled chain.
///
/// `b1 = i ^ j` and `b2 = (j - i)^+` are lattice counts. The two mean
/// relations are equalities for the untruncated chain; on a truncated box
/// they hold up to the reported boundary correction. The second-moment
/// bounds are checked in the form that follows from the generator
/// identities for `i^2`, `i j` and `j^2`; the forms as originally displayed
/// are evaluated alongside in the `literal_*` fields.
pub fn verify_moment_identities(
    dist: &StationaryDistribution,
    scheme: &ScalingScheme,
    tol: &MomentTolerance,
) -> MomentReport {
    let m = moments(dist, scheme);
    let p = scheme.params();
    let (mu, nu) = (p.mu, p.nu);
    let (lam, gam) = (scheme.lambda_n(), scheme.gamma_n());
    let (delta, eta) = (scheme.delta(), scheme.eta());
    let n = f64::from(scheme.n());
    let offset = scheme.server_offset();

    let mut rows = Vec::with_capacity(6);

    let mean_b1 = (m.b1, lam / mu);
    rows.push(MomentRow::new("mean_b1", Relation::Equality, mean_b1, mean_b1, lam * m.job_face / mu, tol));

    rows.push(MomentRow::new(
        "mean_b2",
        Relation::Equality,
        (m.b2, gam / nu),
        (m.b2, p.gamma / nu),
        gam * m.server_face / nu,
        tol,
    ));

    rows.push(MomentRow::new(
        "mean_y",
        Relation::UpperBound,
        (m.y, (lam * delta / mu + gam * delta / nu) * eta),
        (m.y, (lam * delta / mu + p.gamma * delta / nu) * eta),
        0.0,
        tol,
    ));

    let region = (delta * m.i_in_region, delta * lam / mu);
    rows.push(MomentRow::new("mean_x_region", Relation::UpperBound, region, region, 0.0, tol));

    let scaled_b1 = delta * m.b1;
    rows.push(MomentRow::new(
        "second_moment_b1",
        Relation::UpperBound,
        (
            delta * delta * m.b1_sq,
            0.5 * lam * (2.0 * delta * m.x + delta * delta) / mu + 0.5 * (2.0 * n + 1.0) * delta * scaled_b1,
        ),
        (m.b1_sq, 0.5 * p.lambda * (2.0 * delta * m.x + delta * delta) + (2.0 * n + 1.0) * delta * scaled_b1),
        0.0,
        tol,
    ));

    let c = n + offset;
    let cauchy_schwarz = (m.b1_sq * m.y2).sqrt() * mu / (nu * eta);
    rows.push(MomentRow::new(
        "second_moment_b2",
        Relation::UpperBound,
        (
            m.b2_sq,
            0.5 * m.b2
                + (gam * (2.0 * m.j + 1.0) - 2.0 * lam * m.j - 2.0 * gam * m.i + 2.0 * mu * c * m.b1) / (2.0 * nu)
                + cauchy_schwarz,
        ),
        (
            m.b2_sq,
            (delta * p.gamma + lam * delta) * m.y - m.b1_sq * m.y2 - lam * delta * m.x
                + 0.5 * (delta * delta * p.gamma + (delta + delta * offset) * m.b2),
        ),
        0.0,
        tol,
    ));

    MomentReport { rows }
}
