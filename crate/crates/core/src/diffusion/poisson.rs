use std::io::{self, Write};

use super::{em_step, normal, simulate_stationary_expectation, stream_rng, Dynamics, SdeConfig, SimError};
use crate::model::{ScalarField, ScaledPoint, ScalingScheme};

/// Keeps Poisson paths on streams disjoint from the stationary runs.
const POISSON_SEED_SALT: u64 = 0x706f_6973_736f_6e00;

/// Uniform rectangular grid of start points. A grid with `ny == 1` is a
/// line along `x` at height `y0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonGrid {
    pub x0: f64,
    pub hx: f64,
    pub nx: usize,
    pub y0: f64,
    pub hy: f64,
    pub ny: usize,
}

impl PoissonGrid {
    /// Nodes `x_min, x_min + spacing, ..., x_max` on the line `y = 0`.
    pub fn line(x_min: f64, x_max: f64, spacing: f64) -> Self {
        let nx = ((x_max - x_min) / spacing).round() as usize + 1;
        PoissonGrid { x0: x_min, hx: spacing, nx, y0: 0.0, hy: 1.0, ny: 1 }
    }

    /// Rectangle `[x_min, x_max] x [y_min, y_max]` with the given spacings.
    pub fn rect(x_min: f64, x_max: f64, hx: f64, y_min: f64, y_max: f64, hy: f64) -> Self {
        PoissonGrid {
            x0: x_min,
            hx,
            nx: ((x_max - x_min) / hx).round() as usize + 1,
            y0: y_min,
            hy,
            ny: ((y_max - y_min) / hy).round() as usize + 1,
        }
    }

    /// Lattice images within `half_width` scaled units of the origin, so
    /// that grid spacing equals the jump sizes `delta` and `eta`.
    pub fn lattice_window(scheme: &ScalingScheme, half_width: f64) -> Self {
        let n = f64::from(scheme.n());
        let c = n + scheme.server_offset();
        let (d, e) = (scheme.delta(), scheme.eta());
        let i_lo = (n - (half_width / d).floor()).max(0.0);
        let i_hi = n + (half_width / d).floor();
        let j_lo = (c - half_width / e).ceil().max(0.0);
        let j_hi = (c + half_width / e).floor();
        PoissonGrid {
            x0: d * (i_lo - n),
            hx: d,
            nx: (i_hi - i_lo) as usize + 1,
            y0: e * (j_lo - c),
            hy: e,
            ny: (j_hi - j_lo) as usize + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_line(&self) -> bool {
        self.ny == 1
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    pub fn node(&self, ix: usize, iy: usize) -> ScaledPoint {
        ScaledPoint::new(self.x0 + ix as f64 * self.hx, self.y0 + iy as f64 * self.hy)
    }

    /// Nodes in index order (`x` outer, `y` inner).
    pub fn nodes(&self) -> Vec<ScaledPoint> {
        (0..self.nx).flat_map(|ix| (0..self.ny).map(move |iy| self.node(ix, iy))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonOptions {
    /// Monte Carlo paths per node.
    pub paths: usize,
    pub t_max: f64,
    /// Length of the time chunks between tail checks.
    pub chunk: f64,
    /// Stop once the extrapolated tail is below this fraction of the
    /// accumulated integral (sup norm over nodes).
    pub tail_fraction: f64,
    pub min_chunks: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions { paths: 1000, t_max: 200.0, chunk: 1.0, tail_fraction: 0.01, min_chunks: 3 }
    }
}

/// Central-difference derivatives at a node with their noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodePartials {
    pub u: f64,
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
    pub uyy: f64,
    pub noise_u: f64,
    pub noise_ux: f64,
    pub noise_uy: f64,
    pub noise_uxx: f64,
    pub noise_uyy: f64,
}

impl NodePartials {
    fn add_scaled(&mut self, w: f64, o: &NodePartials) {
        self.u += w * o.u;
        self.ux += w * o.ux;
        self.uy += w * o.uy;
        self.uxx += w * o.uxx;
        self.uyy += w * o.uyy;
        self.noise_u += w * o.noise_u;
        self.noise_ux += w * o.noise_ux;
        self.noise_uy += w * o.noise_uy;
        self.noise_uxx += w * o.noise_uxx;
        self.noise_uyy += w * o.noise_uyy;
    }
}

/// Standard errors of the four difference quotients, per node.
type DifferenceNoise = [f64; 4];

/// Grid values of `u(x, y) = -int_0^T E_(x,y)[h(X_t, Y_t) - hbar] dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    grid: PoissonGrid,
    u: Vec<f64>,
    noise: Vec<f64>,
    centering: f64,
    horizon: f64,
    paths: usize,
    difference_noise: Option<Vec<DifferenceNoise>>,
}

impl PoissonSolution {
    /// Wraps precomputed node values.
    pub fn from_values(grid: PoissonGrid, u: Vec<f64>, noise: Vec<f64>, centering: f64) -> Self {
        assert_eq!(u.len(), grid.len());
        assert_eq!(noise.len(), grid.len());
        PoissonSolution { grid, u, noise, centering, horizon: 0.0, paths: 0, difference_noise: None }
    }

    pub fn grid(&self) -> &PoissonGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.u[self.grid.index(ix, iy)]
    }

    /// The stationary mean used as `hbar`.
    pub fn centering(&self) -> f64 {
        self.centering
    }

    /// Integration horizon reached by the tail criterion.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn max_noise(&self) -> f64 {
        self.noise.iter().copied().fold(0.0, f64::max)
    }

    /// Derivatives at an arbitrary point, bilinearly interpolated from the
    /// surrounding interior nodes. `None` outside the interior hull.
    pub fn local_partials(&self, p: ScaledPoint) -> Option<NodePartials> {
        let g = &self.grid;
        let (ix, tx) = interior_cell((p.x - g.x0) / g.hx, g.nx)?;
        let corners: Vec<(usize, usize, f64)> = if g.is_line() {
            vec![(ix, 0, 1.0 - tx), (ix + 1, 0, tx)]
        } else {
            let (iy, ty) = interior_cell((p.y - g.y0) / g.hy, g.ny)?;
            vec![
                (ix, iy, (1.0 - tx) * (1.0 - ty)),
                (ix + 1, iy, tx * (1.0 - ty)),
                (ix, iy + 1, (1.0 - tx) * ty),
                (ix + 1, iy + 1, tx * ty),
            ]
        };
        let mut out = NodePartials::default();
        for (cx, cy, w) in corners {
            if w != 0.0 {
                out.add_scaled(w, &numeric_partials(self, cx, cy).ok()?);
            }
        }
        Some(out)
    }

    /// `G u - (h - hbar)` at an interior node, with the propagated noise
    /// bound `|a_x| n(u_x) + |a_y| n(u_y) + s n(u_xx)`.
    pub fn generator_residual<F: ScalarField + ?Sized>(
        &self,
        ix: usize,
        iy: usize,
        h: &F,
        dynamics: &Dynamics,
    ) -> Result<(f64, f64), SimError> {
        let d = numeric_partials(self, ix, iy)?;
        let p = self.grid.node(ix, iy);
        let (ax, ay) = dynamics.drift(p);
        let s = dynamics.second_order_coefficient();
        let residual = ax * d.ux + ay * d.uy + s * d.uxx - (h.value(p) - self.centering);
        let bound = ax.abs() * d.noise_ux + ay.abs() * d.noise_uy + s * d.noise_uxx;
        Ok((residual, bound))
    }

    /// Writes `x,y,u,noise` rows in node order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,u,noise")?;
        for (k, p) in self.grid.nodes().iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", p.x, p.y, self.u[k], self.noise[k])?;
        }
        Ok(())
    }
}

/// Cell index and offset for coordinate `f` (in node units) such that both
/// cell corners are interior nodes; points on the last interior node map
/// to the cell below it with offset 1.
fn interior_cell(f: f64, n: usize) -> Option<(usize, f64)> {
    const SNAP: f64 = 1e-9;
    if n < 3 || f < 1.0 - SNAP || f > (n - 2) as f64 + SNAP {
        return None;
    }
    if n == 3 {
        return Some((1, 0.0));
    }
    let f = f.clamp(1.0, (n - 2) as f64);
    let i = (f.floor() as usize).min(n - 3);
    Some((i, f - i as f64))
}

/// Central differences at node `(ix, iy)`.
///
/// Noise levels come from the per-path spread of each difference quotient
/// when the solution carries it, otherwise from the node noise divided by
/// the spacing (or its square).
pub fn numeric_partials(sol: &PoissonSolution, ix: usize, iy: usize) -> Result<NodePartials, SimError> {
    let g = &sol.grid;
    let x_inner = ix >= 1 && ix + 1 < g.nx;
    let y_inner = g.is_line() || (iy >= 1 && iy + 1 < g.ny);
    if !x_inner || !y_inner || iy >= g.ny {
        return Err(SimError::BoundaryNode { ix, iy, nx: g.nx, ny: g.ny });
    }
    let at = |i: usize, j: usize| sol.u[g.index(i, j)];
    let nz = |i: usize, j: usize| sol.noise[g.index(i, j)];
    let k = g.index(ix, iy);
    let (c, xp, xm) = (at(ix, iy), at(ix + 1, iy), at(ix - 1, iy));
    let mut out = NodePartials {
        u: c,
        ux: (xp - xm) / (2.0 * g.hx),
        uxx: (xp - 2.0 * c + xm) / (g.hx * g.hx),
        noise_u: nz(ix, iy),
        ..Default::default()
    };
    if !g.is_line() {
        let (yp, ym) = (at(ix, iy + 1), at(ix, iy - 1));
        out.uy = (yp - ym) / (2.0 * g.hy);
        out.uyy = (yp - 2.0 * c + ym) / (g.hy * g.hy);
    }
    match &sol.difference_noise {
        Some(dn) => {
            let [a, b, cc, d] = dn[k];
            out.noise_ux = a;
            out.noise_uxx = b;
            out.noise_uy = cc;
            out.noise_uyy = d;
        }
        None => {
            out.noise_ux = (nz(ix + 1, iy) + nz(ix - 1, iy)) / (2.0 * g.hx);
            out.noise_uxx = (nz(ix + 1, iy) + 2.0 * nz(ix, iy) + nz(ix - 1, iy)) / (g.hx * g.hx);
            if !g.is_line() {
                out.noise_uy = (nz(ix, iy + 1) + nz(ix, iy - 1)) / (2.0 * g.hy);
                out.noise_uyy = (nz(ix, iy + 1) + 2.0 * nz(ix, iy) + nz(ix, iy - 1)) / (g.hy * g.hy);
            }
        }
    }
    Ok(out)
}

/// [`solve_poisson_mc_centered`] with `hbar` taken from a stationary run
/// under `cfg`.
pub fn solve_poisson_mc<F: ScalarField + ?Sized>(
    h: &F,
    dynamics: &Dynamics,
    grid: &PoissonGrid,
    cfg: &SdeConfig,
    opts: &PoissonOptions,
) -> Result<PoissonSolution, SimError> {
    let hbar = simulate_stationary_expectation(h, dynamics, cfg)?;
    solve_poisson_mc_centered(h, dynamics, grid, cfg, opts, hbar.mean)
}

/// Monte Carlo solution of `G u = h - hbar` on `grid`.
///
/// Every path runs one copy of the process from each node plus a reference
/// copy started from a burned-in stationary state, all driven by the same
/// Gaussian draws. The integrand is `h(X_t^node) - h(X_t^ref)`, whose mean
/// is `E_node h(X_t) - E h(X_inf)` without needing `hbar` itself; `hbar`
/// is stored as the centering constant. Paths advance in lockstep chunks
/// and integration stops once the geometric extrapolation of the remaining
/// integral falls below `tail_fraction` of the accumulated one.
pub fn solve_poisson_mc_centered<F: ScalarField + ?Sized>(
    h: &F,
    dynamics: &Dynamics,
    grid: &PoissonGrid,
    cfg: &SdeConfig,
    opts: &PoissonOptions,
    hbar: f64,
) -> Result<PoissonSolution, SimError> {
    cfg.validate()?;
    let positive = |v: f64| v > 0.0;
    if opts.paths == 0 || ![opts.t_max, opts.chunk, opts.tail_fraction].into_iter().all(positive) {
        return Err(SimError::InvalidConfig(format!("bad poisson options {opts:?}")));
    }
    if grid.is_empty() {
        return Err(SimError::InvalidConfig("empty grid".into()));
    }
    let dt = cfg.dt;
    let steps_per_chunk = ((opts.chunk / dt).round() as u64).max(1);
    let max_chunks = (opts.t_max / opts.chunk).ceil() as usize;
    let nodes = grid.nodes();
    let m = nodes.len();

    struct Path {
        rng: rand_chacha::ChaCha8Rng,
        reference: ScaledPoint,
        pos: Vec<ScaledPoint>,
        total: Vec<f64>,
    }
    let mut paths: Vec<Path> = (0..opts.paths)
        .map(|k| {
            let mut rng = stream_rng(cfg.base_seed ^ POISSON_SEED_SALT, k as u64);
            let mut reference = dynamics.start();
            for _ in 0..cfg.burn_in_steps() {
                reference = em_step(reference, dynamics, dt, normal(&mut rng));
            }
            Path { rng, reference, pos: nodes.clone(), total: vec![0.0; m] }
        })
        .collect();

    let mut accumulated = vec![0.0; m];
    let mut chunk_sum = vec![0.0; m];
    let mut chunk_int = vec![0.0; m];
    let mut previous_norm = f64::INFINITY;
    let mut last = (f64::INFINITY, f64::INFINITY, 0.0);
    let mut finished = None;

    for chunk in 0..max_chunks {
        chunk_sum.iter_mut().for_each(|v| *v = 0.0);
        for (k, path) in paths.iter_mut().enumerate() {
            chunk_int.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..steps_per_chunk {
                let href = h.value(path.reference);
                for (acc, p) in chunk_int.iter_mut().zip(path.pos.iter()) {
                    *acc += (h.value(*p) - href) * dt;
                }
                let g = normal(&mut path.rng);
                path.reference = em_step(path.reference, dynamics, dt, g);
                for p in path.pos.iter_mut() {
                    *p = em_step(*p, dynamics, dt, g);
                }
            }
            let bad =
                std::iter::once(&path.reference).chain(path.pos.iter()).find(|p| !(p.x.is_finite() && p.y.is_finite()));
            if let Some(p) = bad {
                return Err(SimError::NonFinite {
                    replication: k,
                    step: (chunk as u64 + 1) * steps_per_chunk,
                    x: p.x,
                    y: p.y,
                });
            }
            for ((s, t), c) in chunk_sum.iter_mut().zip(path.total.iter_mut()).zip(&chunk_int) {
                *s += c;
                *t += c;
            }
        }
        let npaths = opts.paths as f64;
        let mut norm = 0.0f64;
        let mut acc_norm = 0.0f64;
        for (a, s) in accumulated.iter_mut().zip(&chunk_sum) {
            let mean = s / npaths;
            *a += mean;
            norm = norm.max(mean.abs());
            acc_norm = acc_norm.max(a.abs());
        }
        let ratio = norm / previous_norm;
        let tail = if norm == 0.0 {
            0.0
        } else if ratio < 1.0 {
            norm * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        last = (tail, acc_norm, ratio);
        previous_norm = norm;
        if chunk + 1 >= opts.min_chunks && tail <= opts.tail_fraction * acc_norm {
            finished = Some((chunk + 1) as f64 * steps_per_chunk as f64 * dt);
            break;
        }
    }
    let Some(horizon) = finished else {
        return Err(SimError::TailUnmet {
            t_max: opts.t_max,
            fraction: opts.tail_fraction,
            tail: last.0,
            accumulated: last.1,
            ratio: last.2,
        });
    };

    let u: Vec<f64> = accumulated.iter().map(|a| 0.0 - a).collect();
    let spread = |f: &dyn Fn(&Path) -> f64| -> f64 {
        if opts.paths < 2 {
            return 0.0;
        }
        let mut mean = 0.0;
        for (k, p) in paths.iter().enumerate() {
            mean += (f(p) - mean) / (k + 1) as f64;
        }
        let ss: f64 = paths.iter().map(|p| (f(p) - mean).powi(2)).sum();
        (ss / (opts.paths - 1) as f64 / opts.paths as f64).sqrt()
    };
    let noise: Vec<f64> = (0..m).map(|k| spread(&|p: &Path| p.total[k])).collect();

    let mut difference_noise = vec![[0.0; 4]; m];
    for ix in 1..grid.nx.saturating_sub(1) {
        for iy in 0..grid.ny {
            let k = grid.index(ix, iy);
            let (kp, km) = (grid.index(ix + 1, iy), grid.index(ix - 1, iy));
            let hx = grid.hx;
            let mut entry = [
                spread(&|p: &Path| (p.total[kp] - p.total[km]) / (2.0 * hx)),
                spread(&|p: &Path| (p.total[kp] - 2.0 * p.total[k] + p.total[km]) / (hx * hx)),
                0.0,
                0.0,
            ];
            if !grid.is_line() {
                if iy == 0 || iy + 1 == grid.ny {
                    continue;
                }
                let (kp, km) = (grid.index(ix, iy + 1), grid.index(ix, iy - 1));
                let hy = grid.hy;
                entry[2] = spread(&|p: &Path| (p.total[kp] - p.total[km]) / (2.0 * hy));
                entry[3] = spread(&|p: &Path| (p.total[kp] - 2.0 * p.total[k] + p.total[km]) / (hy * hy));
            }
            difference_noise[k] = entry;
        }
    }

    Ok(PoissonSolution {
        grid: *grid,
        u,
        noise,
        centering: hbar,
        horizon,
        paths: opts.paths,
        difference_noise: Some(difference_noise),
    })
}
