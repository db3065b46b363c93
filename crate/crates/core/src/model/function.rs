use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::ScaledPoint;

/// Anything that can be evaluated at a point of the plane.
pub trait ScalarField {
    fn value(&self, p: ScaledPoint) -> f64;
}

impl<F: Fn(ScaledPoint) -> f64> ScalarField for F {
    fn value(&self, p: ScaledPoint) -> f64 {
        self(p)
    }
}

/// A field with exact first and second partial derivatives.
pub trait SmoothField: ScalarField {
    fn dx(&self, p: ScaledPoint) -> f64;
    fn dy(&self, p: ScaledPoint) -> f64;
    fn dxx(&self, p: ScaledPoint) -> f64;
}

/// The half-plane `{x/delta <= y/eta + offset}`, closed on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    delta: f64,
    eta: f64,
    offset: f64,
}

impl Region {
    pub fn new(delta: f64, eta: f64, offset: f64) -> Self {
        Region { delta, eta, offset }
    }

    pub fn contains(&self, p: ScaledPoint) -> bool {
        let lhs = p.x / self.delta;
        let rhs = p.y / self.eta + self.offset;
        // ties on lattice points survive the round trip through scaling
        lhs <= rhs + 1e-9 * (1.0 + rhs.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSide {
    Inside,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    px: u32,
    py: u32,
    coef: f64,
}

/// A polynomial in `(x, y)`, optionally multiplied by the indicator of a
/// [`Region`] or of its complement.
///
/// Derivatives are taken term by term. The indicator is treated as locally
/// constant, so derivatives of a restricted function are the polynomial's
/// derivatives times the indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    terms: Vec<Term>,
    region: Option<(Region, RegionSide)>,
}

fn falling(p: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, m| acc * f64::from(p - m))
}

impl TestFunction {
    /// Builds a polynomial from `((power_x, power_y), coefficient)` pairs.
    /// Repeated monomials are summed and zero coefficients dropped.
    pub fn polynomial<I: IntoIterator<Item = ((u32, u32), f64)>>(terms: I) -> Self {
        let mut collected: Vec<Term> = Vec::new();
        for ((px, py), coef) in terms {
            match collected.iter_mut().find(|t| t.px == px && t.py == py) {
                Some(t) => t.coef += coef,
                None => collected.push(Term { px, py, coef }),
            }
        }
        collected.retain(|t| t.coef != 0.0);
        collected.sort_by_key(|t| (t.px + t.py, t.px, t.py));
        TestFunction { terms: collected, region: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial([((0, 0), c)])
    }

    pub fn monomial(px: u32, py: u32) -> Self {
        Self::polynomial([((px, py), 1.0)])
    }

    /// Restricts the function to one side of `region`.
    pub fn restricted(mut self, region: Region, side: RegionSide) -> Self {
        self.region = Some((region, side));
        self
    }

    pub fn region(&self) -> Option<(Region, RegionSide)> {
        self.region
    }

    /// `((power_x, power_y), coefficient)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.terms.iter().map(|t| ((t.px, t.py), t.coef))
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.px + t.py).max().unwrap_or(0)
    }

    /// The constant value, if the function is an unrestricted constant.
    pub fn as_constant(&self) -> Option<f64> {
        if self.region.is_some() {
            return None;
        }
        match self.terms.as_slice() {
            [] => Some(0.0),
            [t] if t.px == 0 && t.py == 0 => Some(t.coef),
            _ => None,
        }
    }

    fn indicator(&self, p: ScaledPoint) -> bool {
        match self.region {
            None => true,
            Some((region, RegionSide::Inside)) => region.contains(p),
            Some((region, RegionSide::Outside)) => !region.contains(p),
        }
    }

    /// The mixed partial `d^{ox+oy} / dx^ox dy^oy` at `p`.
    pub fn partial(&self, p: ScaledPoint, ox: u32, oy: u32) -> f64 {
        if !self.indicator(p) {
            return 0.0;
        }
        self.terms
            .iter()
            .filter(|t| t.px >= ox && t.py >= oy)
            .map(|t| {
                t.coef
                    * falling(t.px, ox)
                    * falling(t.py, oy)
                    * p.x.powi((t.px - ox) as i32)
                    * p.y.powi((t.py - oy) as i32)
            })
            .sum()
    }

    pub fn dxxx(&self, p: ScaledPoint) -> f64 {
        self.partial(p, 3, 0)
    }

    pub fn dyy(&self, p: ScaledPoint) -> f64 {
        self.partial(p, 0, 2)
    }
}

impl ScalarField for TestFunction {
    fn value(&self, p: ScaledPoint) -> f64 {
        self.partial(p, 0, 0)
    }
}

impl SmoothField for TestFunction {
    fn dx(&self, p: ScaledPoint) -> f64 {
        self.partial(p, 1, 0)
    }
    fn dy(&self, p: ScaledPoint) -> f64 {
        self.partial(p, 0, 1)
    }
    fn dxx(&self, p: ScaledPoint) -> f64 {
        self.partial(p, 2, 0)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            let sign = if t.coef < 0.0 { "-" } else { "+" };
            if k == 0 {
                if t.coef < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mut factors = Vec::new();
            let c = t.coef.abs();
            if c != 1.0 || (t.px == 0 && t.py == 0) {
                factors.push(format!("{c}"));
            }
            for (name, power) in [("x", t.px), ("y", t.py)] {
                match power {
                    0 => {}
                    1 => factors.push(name.to_string()),
                    _ => factors.push(format!("{name}^{power}")),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse `{input}` as a polynomial: {reason}")]
pub struct ParseFunctionError {
    input: String,
    reason: String,
}

/// Parses sums of monomials such as `x^2 + 0.5*x*y - 3`.
impl FromStr for TestFunction {
    type Err = ParseFunctionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseFunctionError { input: s.to_string(), reason: reason.to_string() };
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(err("empty expression"));
        }

        // split into signed terms, keeping exponent signs like `1e-3` intact
        let chars: Vec<char> = compact.chars().collect();
        let mut pieces: Vec<(f64, String)> = Vec::new();
        let mut sign = 1.0;
        let mut current = String::new();
        for (k, &c) in chars.iter().enumerate() {
            let exponent_sign = k >= 2 && matches!(chars[k - 1], 'e' | 'E') && chars[k - 2].is_ascii_digit();
            if (c == '+' || c == '-') && !exponent_sign {
                if !current.is_empty() {
                    pieces.push((sign, std::mem::take(&mut current)));
                } else if k != 0 {
                    return Err(err("dangling operator"));
                }
                sign = if c == '-' { -1.0 } else { 1.0 };
            } else {
                current.push(c);
            }
        }
        if current.is_empty() {
            return Err(err("trailing operator"));
        }
        pieces.push((sign, current));

        let mut terms = Vec::new();
        for (sign, piece) in pieces {
            let mut coef = sign;
            let (mut px, mut py) = (0u32, 0u32);
            for factor in piece.split('*') {
                let (base, power) = match factor.split_once('^') {
                    Some((b, p)) => (b, p.parse::<u32>().map_err(|_| err("bad exponent"))?),
                    None => (factor, 1),
                };
                match base {
                    "x" => px += power,
                    "y" => py += power,
                    "" => return Err(err("empty factor")),
                    number => {
                        let v: f64 = number.parse().map_err(|_| err("unknown factor"))?;
                        coef *= v.powi(power as i32);
                    }
                }
            }
            terms.push(((px, py), coef));
        }
        Ok(TestFunction::polynomial(terms))
    }
}
