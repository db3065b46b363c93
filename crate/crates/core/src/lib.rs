//! Numerical verification toolkit for a two-dimensional job/server Markov
//! chain, its diffusion approximation, and the Stein-method comparison
//! between the two.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the chain, its centered and scaled version, the three
//!   generators and the exact split of the scaled generator into a
//!   diffusion part plus four remainders.
//! - [`stationary`]: truncated-lattice stationary solves, expectations,
//!   moment identities and a Foster-Lyapunov drift certificate.
//! - [`diffusion`]: Euler-Maruyama simulation of the limiting diffusion,
//!   stationary expectations and Monte Carlo Poisson-equation solutions.
//! - [`stein`]: the chain-versus-diffusion error study and rate fitting.
//! - [`cli`]: config parsing and the batch commands behind the `steinmc`
//!   binary.
//!
//! See the `examples/` directory of this crate for one runnable program
//! per capability.

pub mod cli;
pub mod diffusion;
pub mod model;
pub mod stationary;
pub mod stein;
