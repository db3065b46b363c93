use super::{SolverError, StationaryDistribution, TruncatedChain, TruncationBox};
use crate::model::ScalingScheme;

/// State-count guard for the dense elimination oracle.
pub const DENSE_STATE_LIMIT: usize = 10_000;

/// Extra headroom on the uniformization rate used by the iteration, so
/// that every state keeps a self-loop and the iteration matrix is aperiodic.
const UNIFORMIZATION_HEADROOM: f64 = 1.05;

const MAX_GROWTH_ROUNDS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Power iteration on `P = I + Q / Lambda`.
    #[default]
    Power,
    /// In-place Gauss-Seidel sweeps on the balance equations.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the L1 change between successive iterates is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iter: 200_000, method: SolverMethod::Power }
    }
}

/// Starting vector: a discretised Gaussian around the equilibrium of the
/// truncated chain's rates.
fn initial_guess(chain: &TruncatedChain) -> Vec<f64> {
    let p = chain.params();
    let ci = p.lambda / p.mu;
    let cj = ci + p.gamma / p.nu;
    let si = 1.5 * (ci + 1.0).sqrt();
    let sj = 1.5 * (cj + 1.0).sqrt();
    let bx = chain.truncation_box();
    let mut v: Vec<f64> = bx
        .states()
        .map(|s| {
            let zi = (s.i as f64 - ci) / si;
            let zj = (s.j as f64 - cj) / sj;
            (-0.5 * (zi * zi + zj * zj)).exp()
        })
        .collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let uniform = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = uniform);
    }
    v
}

/// Iterative stationary solve of a truncated chain.
pub fn solve_stationary(chain: &TruncatedChain, opts: &SolverOptions) -> Result<StationaryDistribution, SolverError> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(SolverError::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if chain.len() == 1 {
        return Ok(StationaryDistribution::from_probs(chain, vec![1.0], 0));
    }
    chain.check_irreducible()?;
    let pi = initial_guess(chain);
    let (probs, iterations) = match opts.method {
        SolverMethod::Power => power_iteration(chain, pi, opts)?,
        SolverMethod::GaussSeidel => gauss_seidel(chain, pi, opts)?,
    };
    Ok(StationaryDistribution::from_probs(chain, probs, iterations))
}

fn power_iteration(
    chain: &TruncatedChain,
    mut pi: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize), SolverError> {
    let bx = chain.truncation_box();
    let stride = bx.j_max + 1;
    let rate = chain.uniformization() * UNIFORMIZATION_HEADROOM;
    let rates = chain.rates();
    let stay: Vec<f64> = rates.iter().map(|r| 1.0 - r.outflow() / rate).collect();
    let scaled: Vec<[f64; 4]> =
        rates.iter().map(|r| [r.up_i / rate, r.down_i / rate, r.up_j / rate, r.down_j / rate]).collect();
    let mut next = vec![0.0; pi.len()];
    let mut last_change = f64::INFINITY;

    for iteration in 1..=opts.max_iter {
        for i in 0..=bx.i_max {
            let row = i * stride;
            for j in 0..=bx.j_max {
                let k = row + j;
                let mut v = pi[k] * stay[k];
                if i > 0 {
                    v += pi[k - stride] * scaled[k - stride][0];
                }
                if i < bx.i_max {
                    v += pi[k + stride] * scaled[k + stride][1];
                }
                if j > 0 {
                    v += pi[k - 1] * scaled[k - 1][2];
                }
                if j < bx.j_max {
                    v += pi[k + 1] * scaled[k + 1][3];
                }
                next[k] = v;
            }
        }
        let total: f64 = next.iter().sum();
        let mut change = 0.0;
        for (n, p) in next.iter_mut().zip(pi.iter()) {
            *n /= total;
            change += (*n - p).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        last_change = change;
        if change <= opts.tol {
            return Ok((pi, iteration));
        }
    }
    Err(SolverError::NotConverged { iterations: opts.max_iter, last_change })
}

fn gauss_seidel(
    chain: &TruncatedChain,
    mut pi: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize), SolverError> {
    let bx = chain.truncation_box();
    let stride = bx.j_max + 1;
    let rates = chain.rates();
    let mut previous = pi.clone();
    let mut last_change = f64::INFINITY;

    for iteration in 1..=opts.max_iter {
        previous.copy_from_slice(&pi);
        for i in 0..=bx.i_max {
            let row = i * stride;
            for j in 0..=bx.j_max {
                let k = row + j;
                let mut inflow = 0.0;
                if i > 0 {
                    inflow += pi[k - stride] * rates[k - stride].up_i;
                }
                if i < bx.i_max {
                    inflow += pi[k + stride] * rates[k + stride].down_i;
                }
                if j > 0 {
                    inflow += pi[k - 1] * rates[k - 1].up_j;
                }
                if j < bx.j_max {
                    inflow += pi[k + 1] * rates[k + 1].down_j;
                }
                pi[k] = inflow / rates[k].outflow();
            }
        }
        let total: f64 = pi.iter().sum();
        let mut change = 0.0;
        for (p, q) in pi.iter_mut().zip(previous.iter()) {
            *p /= total;
            change += (*p - q).abs();
        }
        last_change = change;
        if change <= opts.tol {
            return Ok((pi, iteration));
        }
    }
    Err(SolverError::NotConverged { iterations: opts.max_iter, last_change })
}

/// Direct solve of `pi Q = 0` by subtraction-free (GTH) elimination.
///
/// States are eliminated from the last to the first in lexicographic
/// order. The generator is banded with half-width `j_max + 1` in that
/// order and elimination creates no fill outside the band, so storage is
/// `N x (2 j_max + 3)`.
pub fn solve_stationary_dense_oracle(chain: &TruncatedChain) -> Result<StationaryDistribution, SolverError> {
    let n = chain.len();
    if n > DENSE_STATE_LIMIT {
        return Err(SolverError::TooLarge { states: n, limit: DENSE_STATE_LIMIT });
    }
    if n == 1 {
        return Ok(StationaryDistribution::from_probs(chain, vec![1.0], 0));
    }
    let bx = chain.truncation_box();
    let bw = bx.j_max + 1;
    let width = 2 * bw + 1;
    let mut band = vec![0.0; n * width];
    let at = |r: usize, c: usize| r * width + (c + bw - r);

    for (k, r) in chain.rates().iter().enumerate() {
        if r.up_i > 0.0 {
            band[at(k, k + bw)] = r.up_i;
        }
        if r.down_i > 0.0 {
            band[at(k, k - bw)] = r.down_i;
        }
        if r.up_j > 0.0 {
            band[at(k, k + 1)] = r.up_j;
        }
        if r.down_j > 0.0 {
            band[at(k, k - 1)] = r.down_j;
        }
    }

    let mut pivots = vec![0.0; n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let s: f64 = (lo..k).map(|c| band[at(k, c)]).sum();
        if s <= 0.0 {
            return Err(SolverError::Reducible { state: bx.state(k) });
        }
        pivots[k] = s;
        for r in lo..k {
            let ark = band[at(r, k)];
            if ark == 0.0 {
                continue;
            }
            let f = ark / s;
            for c in lo..k {
                let akc = band[at(k, c)];
                if akc != 0.0 {
                    band[at(r, c)] += f * akc;
                }
            }
        }
    }

    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let lo = k.saturating_sub(bw);
        let inflow: f64 = (lo..k).map(|r| pi[r] * band[at(r, k)]).sum();
        pi[k] = inflow / pivots[k];
    }
    Ok(StationaryDistribution::from_probs(chain, pi, 0))
}

/// Grows a box from `(2n, 2(n + kappa n^alpha))` by a factor 1.5 per side
/// until the solved boundary mass falls below `tail_target`, returning the
/// box together with its chain and distribution.
pub fn solve_adaptive(
    scheme: &ScalingScheme,
    tail_target: f64,
    opts: &SolverOptions,
) -> Result<(TruncationBox, TruncatedChain, StationaryDistribution), SolverError> {
    if !(tail_target > 0.0 && tail_target < 1.0) {
        return Err(SolverError::InvalidArgument(format!("tail target must lie in (0, 1), got {tail_target}")));
    }
    let n = f64::from(scheme.n());
    let mut bx = TruncationBox::new((2.0 * n).ceil() as usize, (2.0 * (n + scheme.server_offset())).ceil() as usize);
    let mut round = 0;
    loop {
        let chain = TruncatedChain::for_scheme(scheme, bx)?;
        let dist = solve_stationary(&chain, opts)?;
        if dist.boundary_mass() < tail_target {
            return Ok((bx, chain, dist));
        }
        if round == MAX_GROWTH_ROUNDS {
            return Err(SolverError::TailTargetUnmet {
                target: tail_target,
                rounds: round,
                i_max: bx.i_max,
                j_max: bx.j_max,
                boundary_mass: dist.boundary_mass(),
            });
        }
        round += 1;
        bx = TruncationBox::new((1.5 * bx.i_max as f64).ceil() as usize, (1.5 * bx.j_max as f64).ceil() as usize);
    }
}

/// The box chosen by [`solve_adaptive`].
pub fn adaptive_box(
    scheme: &ScalingScheme,
    tail_target: f64,
    opts: &SolverOptions,
) -> Result<TruncationBox, SolverError> {
    solve_adaptive(scheme, tail_target, opts).map(|(bx, _, _)| bx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn params(l: f64, m: f64, g: f64, v: f64) -> ModelParams {
        ModelParams::new(l, m, g, v).unwrap()
    }

    #[test]
    fn one_state_box_is_point_mass() {
        let chain = TruncatedChain::new(params(1.0, 1.0, 1.0, 1.0), TruncationBox::new(0, 0)).unwrap();
        assert_eq!(solve_stationary(&chain, &SolverOptions::default()).unwrap().probabilities(), &[1.0]);
        assert_eq!(solve_stationary_dense_oracle(&chain).unwrap().probabilities(), &[1.0]);
    }

    #[test]
    fn two_state_balance() {
        let chain = TruncatedChain::new(params(3.0, 1.0, 1.0, 1.0), TruncationBox::new(0, 1)).unwrap();
        for method in [SolverMethod::Power, SolverMethod::GaussSeidel] {
            let opts = SolverOptions { method, ..Default::default() };
            let d = solve_stationary(&chain, &opts).unwrap();
            assert!((d.probabilities()[0] - 0.5).abs() < 1e-12);
            assert!((d.probabilities()[1] - 0.5).abs() < 1e-12);
        }
        let d = solve_stationary_dense_oracle(&chain).unwrap();
        assert!((d.probabilities()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn iterative_matches_oracle() {
        let chain = TruncatedChain::new(params(4.0, 1.0, 2.0, 1.5), TruncationBox::new(12, 15)).unwrap();
        let exact = solve_stationary_dense_oracle(&chain).unwrap();
        assert!(exact.residual() < 1e-13);
        for method in [SolverMethod::Power, SolverMethod::GaussSeidel] {
            let d = solve_stationary(&chain, &SolverOptions { method, ..Default::default() }).unwrap();
            let gap =
                d.probabilities().iter().zip(exact.probabilities()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-10, "{method:?}: {gap:e}");
        }
    }

    #[test]
    fn dense_guard() {
        let chain = TruncatedChain::new(params(1.0, 1.0, 1.0, 1.0), TruncationBox::new(100, 100)).unwrap();
        assert!(matches!(solve_stationary_dense_oracle(&chain), Err(SolverError::TooLarge { states: 10201, .. })));
    }

    #[test]
    fn non_convergence_reports_change() {
        let chain = TruncatedChain::new(params(4.0, 1.0, 2.0, 1.5), TruncationBox::new(12, 15)).unwrap();
        let opts = SolverOptions { max_iter: 3, ..Default::default() };
        match solve_stationary(&chain, &opts) {
            Err(SolverError::NotConverged { iterations: 3, last_change }) => assert!(last_change > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loose_tail_accepts_initial_box() {
        let s = ScalingScheme::halfin_whitt(10, params(1.0, 1.0, 1.0, 1.0)).unwrap();
        let bx = adaptive_box(&s, 0.5, &SolverOptions::default()).unwrap();
        assert_eq!(bx, TruncationBox::new(20, 27));
    }

    #[test]
    fn tail_target_is_met() {
        let s = ScalingScheme::halfin_whitt(10, params(1.0, 1.0, 1.0, 1.0)).unwrap();
        let (bx, _, d) = solve_adaptive(&s, 1e-8, &SolverOptions::default()).unwrap();
        assert!(d.boundary_mass() < 1e-8);
        let loose = adaptive_box(&s, 1e-4, &SolverOptions::default()).unwrap();
        assert!(bx.i_max >= loose.i_max && bx.j_max >= loose.j_max);
        assert!(adaptive_box(&s, 0.0, &SolverOptions::default()).is_err());
    }
}
