use thiserror::Error;

use crate::model::{apply_g0, equilibrium_point, LatticeState, ModelParams, TestFunction};

/// Candidate drift constants, largest last.
pub const C_GRID: [f64; 9] = [0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

/// A drift certificate for `f = x^4 + y^4`:
/// `G0 f(x, y) <= -c (x^3 + y^3)` for every scanned `(x, y) >= (x0, y0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub x0: usize,
    pub y0: usize,
    pub c: f64,
    pub scan_limit: usize,
    /// `4 (mu min(x0, y0) - lambda - gamma) - 2c`; nonnegative means the
    /// leading cubic terms keep the inequality beyond the scanned range.
    pub asymptotic_margin: f64,
    /// Grid points re-checked pointwise after the certificate was chosen.
    pub points_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no drift certificate: {reason} (worst point ({}, {}), ratio {worst_ratio:e})", .worst_point.0, .worst_point.1)]
pub struct LyapunovFailure {
    pub reason: String,
    pub worst_point: (usize, usize),
    /// `-G0 f / (x^3 + y^3)` at the worst point.
    pub worst_ratio: f64,
}

fn quartic() -> TestFunction {
    TestFunction::polynomial([((4, 0), 1.0), ((0, 4), 1.0)])
}

fn cubic_weight(x: usize, y: usize) -> f64 {
    (x as f64).powi(3) + (y as f64).powi(3)
}

/// Searches the integer grid `[0, scan_limit]^2` for the smallest corner
/// (by `x0 + y0`, then `x0`) that admits some `c` in [`C_GRID`], and
/// returns the largest such `c` at that corner.
pub fn foster_lyapunov_check(params: &ModelParams, scan_limit: usize) -> Result<LyapunovCertificate, LyapunovFailure> {
    let (ex, ey) = equilibrium_point(params).map_err(|e| LyapunovFailure {
        reason: e.to_string(),
        worst_point: (0, 0),
        worst_ratio: f64::NAN,
    })?;
    if (scan_limit as f64) < ex.max(ey) {
        return Err(LyapunovFailure {
            reason: format!("scan limit {scan_limit} is below the equilibrium ({ex}, {ey})"),
            worst_point: (0, 0),
            worst_ratio: f64::NAN,
        });
    }
    let f = quartic();
    let side = scan_limit + 1;
    let at = |x: usize, y: usize| x * side + y;

    let mut ratio = vec![0.0; side * side];
    let mut worst = ((0, 0), f64::INFINITY);
    for x in 0..side {
        for y in 0..side {
            let g = apply_g0(&f, LatticeState::new(x, y), params);
            let w = cubic_weight(x, y);
            let r = if w > 0.0 {
                -g / w
            } else if g <= 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            ratio[at(x, y)] = r;
            if r < worst.1 {
                worst = ((x, y), r);
            }
        }
    }

    // suffix[x][y] = min ratio over the quadrant [x, L] x [y, L]
    let mut suffix = ratio.clone();
    for x in (0..side).rev() {
        for y in (0..side).rev() {
            let mut m = suffix[at(x, y)];
            if x + 1 < side {
                m = m.min(suffix[at(x + 1, y)]);
            }
            if y + 1 < side {
                m = m.min(suffix[at(x, y + 1)]);
            }
            suffix[at(x, y)] = m;
        }
    }

    let leading = |corner: usize| 4.0 * (params.mu * corner as f64 - params.lambda - params.gamma);
    for total in 0..=2 * scan_limit {
        for x0 in total.saturating_sub(scan_limit)..=total.min(scan_limit) {
            let y0 = total - x0;
            let lead = leading(x0.min(y0));
            let best = C_GRID.iter().rev().find(|&&c| suffix[at(x0, y0)] >= c && lead >= 2.0 * c);
            if let Some(&c) = best {
                let mut points_checked = 0;
                for x in x0..side {
                    for y in y0..side {
                        let g = apply_g0(&f, LatticeState::new(x, y), params);
                        if g > -c * cubic_weight(x, y) {
                            return Err(LyapunovFailure {
                                reason: format!("re-check failed for corner ({x0}, {y0}) with c = {c}"),
                                worst_point: (x, y),
                                worst_ratio: ratio[at(x, y)],
                            });
                        }
                        points_checked += 1;
                    }
                }
                return Ok(LyapunovCertificate {
                    x0,
                    y0,
                    c,
                    scan_limit,
                    asymptotic_margin: lead - 2.0 * c,
                    points_checked,
                });
            }
        }
    }
    Err(LyapunovFailure {
        reason: format!("no corner within [0, {scan_limit}]^2 admits c >= {}", C_GRID[0]),
        worst_point: worst.0,
        worst_ratio: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point_value() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let g = apply_g0(&quartic(), LatticeState::new(10, 10), &p);
        assert_eq!(g, -20467.0);
        assert!(g <= -10.0 * cubic_weight(10, 10));
    }

    #[test]
    fn certificate_holds_on_its_quadrant() {
        let p = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let cert = foster_lyapunov_check(&p, 40).unwrap();
        assert!(cert.asymptotic_margin >= 0.0);
        assert!(C_GRID.contains(&cert.c));
        let f = quartic();
        for x in cert.x0..=40 {
            for y in cert.y0..=40 {
                assert!(apply_g0(&f, LatticeState::new(x, y), &p) <= -cert.c * cubic_weight(x, y));
            }
        }
        assert_eq!(cert.points_checked, (41 - cert.x0) * (41 - cert.y0));
    }

    #[test]
    fn scan_below_equilibrium_is_rejected() {
        let p = ModelParams::new(20.0, 1.0, 1.0, 1.0).unwrap();
        assert!(foster_lyapunov_check(&p, 10).is_err());
    }

    #[test]
    fn short_scan_reports_worst_point() {
        let p = ModelParams::new(3.0, 1.0, 1.0, 1.0).unwrap();
        let err = foster_lyapunov_check(&p, 4).unwrap_err();
        assert!(err.worst_ratio < 0.0);
    }
}
