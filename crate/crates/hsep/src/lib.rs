//! Simulator and exact-identity verifier for a four-parameter family of
//! higher-spin exclusion processes, together with the microscopic Hopf-Cole
//! transform that maps them onto a discrete stochastic heat equation (SHE)
//! and, under weak scaling, onto the KPZ equation.
//!
//! The process lives on strictly decreasing particle configurations
//! `y_m > y_{m+1} > ...` on the integers. At each discrete time `s` every
//! particle either holds or jumps one site to the right. The jump law is
//! controlled by four parameters `(q, nu, alpha, J)`:
//!
//! ```text
//! P(jump | left neighbour held)  = alpha(s) (1 - q^gap) / (1 + alpha(s))
//! P(jump | left neighbour moved) = (alpha(s) + nu q^gap) / (1 + alpha(s))
//! alpha(s) = alpha * q^(s mod J)
//! ```
//!
//! where `gap` is the number of empty sites between the particle and its
//! left neighbour. Neighbour and ordering language is in *index* order
//! throughout the crate: the left neighbour of particle `n` is `n - 1`,
//! decided first in each sweep. Positions decrease with the index, so
//! particle `n - 1` sits spatially ahead of particle `n`, and the jump
//! rate vanishing at `gap = 0` is exactly the exclusion rule (no
//! overtaking). With `q = exp(-eps)` and
//! density `rho` fixed, the centred and tilted observable
//!
//! ```text
//! Z(t, xi) = lambda_hat(t) * rho^n * q^(y_n + n),      n = xi + mu_hat(t)
//! ```
//!
//! satisfies a *discrete* stochastic heat equation exactly at every `eps`:
//! one step of the particle dynamics equals one step of a random-walk
//! semigroup plus a conditionally centred multiplicative noise increment.
//! Everything in this crate hangs off that identity:
//!
//! * [`model`] — parameter validation, per-phase jump probabilities, and the
//!   derived drift/normalisation/variance constants `(mu, lambda, sigma)`.
//! * [`env`] — a counter-based Bernoulli environment: every random decision
//!   is a pure function of `(seed, replica, step, site, kind)`, so sequential
//!   and parallel sweep orders consume identical randomness.
//! * [`dynamics`] — sequential and one-pass parallel updates (provably the
//!   same trajectory), conditional move probabilities, and trajectory runs.
//! * [`kernels`] — the base jump-count walk, its exponential tilt, and the
//!   time-inhomogeneous heat kernel with certified tail trimming.
//! * [`transform`] — the Hopf-Cole field `Z`, its noise increments, initial
//!   conditions (step and near-equilibrium), and KPZ-scaled field readings.
//! * [`verify`] — exact-identity checks (one-step decomposition, duality
//!   evolution, conditional covariance), quadratic-variation asymptotics,
//!   and martingale-problem statistics for the scaled field.
//! * [`she`] — a reference solver for the continuum multiplicative-noise
//!   stochastic heat equation, used as the convergence target.
//! * [`stats`] — streaming moments with an associative merge, least-squares
//!   exponent fits, and confidence bands.
//! * [`harness`] — experiment configuration, deterministic replica
//!   scheduling, and CSV/JSON report writers.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release --example constants          derived constants for a parameter point
//! cargo run --release --example coupling           sequential == parallel trajectory coupling
//! cargo run --release --example exact_identities   decomposition / duality / covariance residuals
//! cargo run --release --example kernel_tables      heat-kernel construction and scaling probes
//! cargo run --release --example noise_variance     quadratic-variation closed form vs epsilon
//! cargo run --release --example martingale_bands   martingale-problem statistics with error bands
//! cargo run --release --example scaled_field       KPZ-scaled height profiles from a trajectory
//! cargo run --release --example she_reference      reference SHE solve and one-point statistics
//! cargo run --release --example convergence        chain-vs-SHE one-point comparison across eps
//! ```
//!
//! The `hsep` binary wraps the same machinery in a small CLI with
//! subcommands `simulate`, `verify`, `she`, `compare`, and `probe-kernels`.

pub mod dynamics;
pub mod env;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod she;
pub mod stats;
pub mod transform;
pub mod verify;

pub use model::{DerivedConstants, ModelParams};
