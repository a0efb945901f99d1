//! Exact evaluation of self-averaging sequences `p(n) = E[p(Y(n))]` and
//! Chebyshev-envelope certificates that such a sequence does not converge.
//!
//! * [`kernels`]: one-round laws `Y(n)` (group Russian roulette, coin-flip
//!   loser selection, the parity example, user closures).
//! * [`engine`]: adaptive-precision table builds, pushforward laws of the
//!   iterated process and the martingale identity.
//! * [`envelope`]: contraction constants, the envelope `l(x) <= p(N_i) <=
//!   u(x)` along `N_i = [x / alpha^i]`, and period scans that bracket
//!   `liminf` and `limsup`.
//! * [`simulator`]: a mechanistic Monte Carlo of the elimination process,
//!   independent of the pmf and recursion code.

pub mod engine;
pub mod envelope;
pub mod error;
pub mod kernels;
pub mod precision;
pub mod simulator;

pub use error::{Error, Result};
pub use precision::PrecisionConfig;
