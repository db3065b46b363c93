//! Stationary distributions of the chain on a truncated lattice box, and
//! the numerical checks built on them.
//!
//! Truncation removes every transition that would leave the box
//! `[0, i_max] x [0, j_max]`; what remains is still a valid generator.
//! The probability sitting on the two truncated faces (`i = i_max` or
//! `j = j_max`) bounds the bias this introduces and is reported as
//! `boundary_mass`.

mod lyapunov;
mod moments;
mod solver;

use std::io::{self, Write};

use thiserror::Error;

use crate::model::{equilibrium_point, LatticeState, ModelParams, ScalarField, ScalingScheme};

pub use lyapunov::{foster_lyapunov_check, LyapunovCertificate, LyapunovFailure, C_GRID};
pub use moments::{
    verify_moment_identities, verify_stationarity, MomentReport, MomentRow, MomentTolerance, Relation,
    StationarityCheck,
};
pub use solver::{
    adaptive_box, solve_adaptive, solve_stationary, solve_stationary_dense_oracle, SolverMethod, SolverOptions,
    DENSE_STATE_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("stationary iteration did not converge after {iterations} iterations (last L1 change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("truncated chain is reducible: state ({}, {}) is not mutually reachable with (0, 0)", .state.i, .state.j)]
    Reducible { state: LatticeState },
    #[error("dense solve limited to {limit} states, box has {states}")]
    TooLarge { states: usize, limit: usize },
    #[error("tail target {target:e} not met after {rounds} growth rounds (box {i_max}x{j_max}, boundary mass {boundary_mass:e})")]
    TailTargetUnmet { target: f64, rounds: usize, i_max: usize, j_max: usize, boundary_mass: f64 },
    #[error("invalid solver argument: {0}")]
    InvalidArgument(String),
}

/// The retained part of the lattice, `[0, i_max] x [0, j_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TruncationBox {
    pub i_max: usize,
    pub j_max: usize,
}

impl TruncationBox {
    pub const fn new(i_max: usize, j_max: usize) -> Self {
        TruncationBox { i_max, j_max }
    }

    /// Smallest box holding the equilibrium of `params` with a margin of one.
    pub fn around_equilibrium(params: &ModelParams) -> Self {
        let (x, y) = equilibrium_point(params).unwrap_or((0.0, 0.0));
        TruncationBox::new(x.ceil() as usize + 1, y.ceil() as usize + 1)
    }

    pub fn contains_equilibrium(&self, params: &ModelParams) -> bool {
        let need = TruncationBox::around_equilibrium(params);
        self.i_max >= need.i_max && self.j_max >= need.j_max
    }

    pub fn len(&self) -> usize {
        (self.i_max + 1) * (self.j_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lexicographic index of `(i, j)`.
    pub fn index(&self, state: LatticeState) -> usize {
        state.i * (self.j_max + 1) + state.j
    }

    pub fn state(&self, index: usize) -> LatticeState {
        LatticeState::new(index / (self.j_max + 1), index % (self.j_max + 1))
    }

    pub fn contains(&self, state: LatticeState) -> bool {
        state.i <= self.i_max && state.j <= self.j_max
    }

    pub fn on_face(&self, state: LatticeState) -> bool {
        state.i == self.i_max || state.j == self.j_max
    }

    /// States in lexicographic `(i, j)` order.
    pub fn states(&self) -> impl Iterator<Item = LatticeState> + '_ {
        (0..=self.i_max).flat_map(move |i| (0..=self.j_max).map(move |j| LatticeState::new(i, j)))
    }
}

/// Per-state rates in the order: job arrival, service, server arrival,
/// idle departure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct StateRates {
    pub up_i: f64,
    pub down_i: f64,
    pub up_j: f64,
    pub down_j: f64,
}

impl StateRates {
    pub fn outflow(&self) -> f64 {
        self.up_i + self.down_i + self.up_j + self.down_j
    }
}

/// The chain restricted to a box, with outgoing transitions across the
/// box faces removed.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedChain {
    bx: TruncationBox,
    params: ModelParams,
    rates: Vec<StateRates>,
    uniformization: f64,
}

impl TruncatedChain {
    /// Truncation of the unscaled chain with rates `params`.
    pub fn new(params: ModelParams, bx: TruncationBox) -> Result<Self, SolverError> {
        params.validate().map_err(|e| SolverError::InvalidArgument(e.to_string()))?;
        let rates: Vec<StateRates> = bx
            .states()
            .map(|s| StateRates {
                up_i: if s.i < bx.i_max { params.lambda } else { 0.0 },
                down_i: s.i.min(s.j) as f64 * params.mu,
                up_j: if s.j < bx.j_max { params.gamma } else { 0.0 },
                down_j: s.j.saturating_sub(s.i) as f64 * params.nu,
            })
            .collect();
        let uniformization = rates.iter().map(StateRates::outflow).fold(0.0, f64::max);
        Ok(TruncatedChain { bx, params, rates, uniformization })
    }

    /// Truncation of the chain underlying a scaled system.
    pub fn for_scheme(scheme: &ScalingScheme, bx: TruncationBox) -> Result<Self, SolverError> {
        Self::new(scheme.chain_params(), bx)
    }

    pub fn truncation_box(&self) -> TruncationBox {
        self.bx
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Largest total outflow over retained states.
    pub fn uniformization(&self) -> f64 {
        self.uniformization
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub(crate) fn rates(&self) -> &[StateRates] {
        &self.rates
    }

    /// Retained transitions out of `state`.
    pub fn transitions(&self, state: LatticeState) -> Vec<(LatticeState, f64)> {
        let r = self.rates[self.bx.index(state)];
        let LatticeState { i, j } = state;
        let mut out = Vec::with_capacity(4);
        if r.up_i > 0.0 {
            out.push((LatticeState::new(i + 1, j), r.up_i));
        }
        if r.down_i > 0.0 {
            out.push((LatticeState::new(i - 1, j), r.down_i));
        }
        if r.up_j > 0.0 {
            out.push((LatticeState::new(i, j + 1), r.up_j));
        }
        if r.down_j > 0.0 {
            out.push((LatticeState::new(i, j - 1), r.down_j));
        }
        out
    }

    /// Transitions removed by truncation at `state`.
    pub fn zeroed_transitions(&self, state: LatticeState) -> Vec<(LatticeState, f64)> {
        let mut out = Vec::new();
        if state.i == self.bx.i_max {
            out.push((LatticeState::new(state.i + 1, state.j), self.params.lambda));
        }
        if state.j == self.bx.j_max {
            out.push((LatticeState::new(state.i, state.j + 1), self.params.gamma));
        }
        out
    }

    /// `||pi Q||_1` over the box.
    pub fn residual(&self, probs: &[f64]) -> f64 {
        let mut flow = vec![0.0; probs.len()];
        let stride = self.bx.j_max + 1;
        for (k, (r, &p)) in self.rates.iter().zip(probs).enumerate() {
            flow[k] -= p * r.outflow();
            if r.up_i > 0.0 {
                flow[k + stride] += p * r.up_i;
            }
            if r.down_i > 0.0 {
                flow[k - stride] += p * r.down_i;
            }
            if r.up_j > 0.0 {
                flow[k + 1] += p * r.up_j;
            }
            if r.down_j > 0.0 {
                flow[k - 1] += p * r.down_j;
            }
        }
        flow.iter().map(|v| v.abs()).sum()
    }

    /// Checks that every state reaches `(0, 0)` and is reached from it.
    pub fn check_irreducible(&self) -> Result<(), SolverError> {
        let n = self.len();
        let stride = self.bx.j_max + 1;
        let neighbours = |k: usize, r: &StateRates| {
            let mut v = [None; 4];
            if r.up_i > 0.0 {
                v[0] = Some(k + stride);
            }
            if r.down_i > 0.0 {
                v[1] = Some(k - stride);
            }
            if r.up_j > 0.0 {
                v[2] = Some(k + 1);
            }
            if r.down_j > 0.0 {
                v[3] = Some(k - 1);
            }
            v
        };
        let mut forward: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut backward: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, r) in self.rates.iter().enumerate() {
            for t in neighbours(k, r).into_iter().flatten() {
                forward[k].push(t);
                backward[t].push(k);
            }
        }
        for graph in [&forward, &backward] {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(k) = stack.pop() {
                for &t in &graph[k] {
                    if !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            if let Some(k) = seen.iter().position(|s| !s) {
                return Err(SolverError::Reducible { state: self.bx.state(k) });
            }
        }
        Ok(())
    }
}

/// Probabilities over a truncation box plus solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    bx: TruncationBox,
    probs: Vec<f64>,
    residual: f64,
    boundary_mass: f64,
    iterations: usize,
}

impl StationaryDistribution {
    pub(crate) fn from_probs(chain: &TruncatedChain, mut probs: Vec<f64>, iterations: usize) -> Self {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let bx = chain.truncation_box();
        let boundary_mass = bx.states().zip(&probs).filter(|(s, _)| bx.on_face(*s)).map(|(_, p)| p).sum();
        let residual = chain.residual(&probs);
        StationaryDistribution { bx, probs, residual, boundary_mass, iterations }
    }

    pub fn truncation_box(&self) -> TruncationBox {
        self.bx
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: LatticeState) -> f64 {
        if self.bx.contains(state) {
            self.probs[self.bx.index(state)]
        } else {
            0.0
        }
    }

    /// `||pi Q||_1` of the truncated generator.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Probability on states with `i = i_max` or `j = j_max`.
    pub fn boundary_mass(&self) -> f64 {
        self.boundary_mass
    }

    /// Probability on the face `i = i_max`.
    pub fn job_face_mass(&self) -> f64 {
        self.iter().filter(|(s, _)| s.i == self.bx.i_max).map(|(_, p)| p).sum()
    }

    /// Probability on the face `j = j_max`.
    pub fn server_face_mass(&self) -> f64 {
        self.iter().filter(|(s, _)| s.j == self.bx.j_max).map(|(_, p)| p).sum()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticeState, f64)> + '_ {
        self.bx.states().zip(self.probs.iter().copied())
    }

    /// `sum_s pi(s) g(s)` over lattice states.
    pub fn expect_lattice<G: Fn(LatticeState) -> f64>(&self, g: G) -> f64 {
        self.iter().filter(|(_, p)| *p != 0.0).map(|(s, p)| p * g(s)).sum()
    }

    /// Writes `i,j,prob` rows in lexicographic order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "i,j,prob")?;
        for (s, p) in self.iter() {
            writeln!(w, "{},{},{:.16e}", s.i, s.j, p)?;
        }
        Ok(())
    }
}

/// `E_pi[f]` with `f` evaluated at the scaled image of each state.
pub fn expect<F: ScalarField + ?Sized>(dist: &StationaryDistribution, f: &F, scheme: &ScalingScheme) -> f64 {
    dist.expect_lattice(|s| f.value(scheme.to_scaled(s)))
}
