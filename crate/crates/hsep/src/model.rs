//! Model parameters, per-phase jump probabilities, and derived constants.
//!
//! A parameter point is `(q, nu, alpha, J)` together with a reference density
//! `rho` in `(0, 1)`. The step-`s` attachment rate is `alpha(s) = alpha *
//! q^(s mod J)`, so the dynamics are time-periodic with period `J`. All
//! derived quantities below are per-phase arrays of length `J` (or `J + 1`
//! for the attachment weights `a_j`, which need one look-ahead phase).
//!
//! The derived constants are determined by requiring that the Hopf-Cole
//! observable `lambda_hat(t) rho^n q^(y_n + n)` evolves by a *centred*
//! random-walk semigroup: `mu(t)` is the per-step lattice drift that centres
//! the walk, `lambda(t)` is the per-step normalisation that makes the walk
//! weights sum to one after tilting by `rho`, and `r_star^2 sigma(t)` is the
//! per-step variance of the centred tilted walk. `tau_star_eps` converts
//! micro-steps to macroscopic time so that one unit of scaled time costs
//! `eps^-3 tau_star_eps J` micro-steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gap between a particle and its left neighbour (number of empty sites).
/// The leftmost real particle sees an infinite gap, for which `q^gap = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gap {
    Finite(u64),
    Infinite,
}

impl Gap {
    /// `q^gap`, with the convention `q^infinity = 0`.
    #[inline]
    pub fn q_pow(self, q: f64) -> f64 {
        match self {
            Gap::Finite(g) => q_powi(q, g),
            Gap::Infinite => 0.0,
        }
    }
}

/// `q^g` for a non-negative integer exponent, by repeated squaring.
#[inline]
pub fn q_powi(q: f64, g: u64) -> f64 {
    if g <= i32::MAX as u64 {
        q.powi(g as i32)
    } else {
        0.0 // q < 1 and the exponent is astronomically large
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("q must lie strictly between 0 and 1, got {0}")]
    QRange(f64),
    #[error("nu must lie in [0, 1), got {0}")]
    NuRange(f64),
    #[error("alpha must be positive and finite, got {0}")]
    AlphaRange(f64),
    #[error("period J must be at least 1")]
    PeriodZero,
    #[error("rho must lie strictly between 0 and 1, got {0}")]
    RhoRange(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    EpsRange(f64),
}

/// The four model parameters plus the reference density `rho`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelParams {
    pub q: f64,
    pub nu: f64,
    pub alpha: f64,
    /// Period of the attachment-rate modulation (`J >= 1`).
    pub j_phases: u32,
    /// Reference density used for the tilt `rho^n` of the transform.
    pub rho: f64,
}

impl ModelParams {
    pub fn new(q: f64, nu: f64, alpha: f64, j_phases: u32, rho: f64) -> Result<Self, ParamError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(ParamError::QRange(q));
        }
        if !(nu >= 0.0 && nu < 1.0) {
            return Err(ParamError::NuRange(nu));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ParamError::AlphaRange(alpha));
        }
        if j_phases == 0 {
            return Err(ParamError::PeriodZero);
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(ParamError::RhoRange(rho));
        }
        Ok(Self { q, nu, alpha, j_phases, rho })
    }

    /// Construct with `q = exp(-eps)` for the weak-scaling regime.
    pub fn from_eps(eps: f64, nu: f64, alpha: f64, j_phases: u32, rho: f64) -> Result<Self, ParamError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ParamError::EpsRange(eps));
        }
        Self::new((-eps).exp(), nu, alpha, j_phases, rho)
    }

    /// `eps = -ln q`.
    #[inline]
    pub fn eps(&self) -> f64 {
        -self.q.ln()
    }

    /// Phase of micro-step `s`, i.e. `s mod J`.
    #[inline]
    pub fn phase(&self, s: u64) -> u32 {
        (s % self.j_phases as u64) as u32
    }

    /// Step-`s` attachment rate `alpha * q^(s mod J)`.
    #[inline]
    pub fn alpha_at(&self, s: u64) -> f64 {
        self.alpha * q_powi(self.q, self.phase(s) as u64)
    }
}

/// Probability that a particle with gap `g` jumps at step `s`, conditioned on
/// its left neighbour's move in the same step. Returns `(held, moved)`:
///
/// ```text
/// held:  alpha(s) (1 - q^g) / (1 + alpha(s))
/// moved: (alpha(s) + nu q^g) / (1 + alpha(s))
/// ```
///
/// An infinite gap (leftmost particle) gives `alpha(s) / (1 + alpha(s))` in
/// both branches, so the leftmost particle jumps at that rate unconditionally.
#[inline]
pub fn jump_probs(params: &ModelParams, s: u64, g: Gap) -> (f64, f64) {
    let a = params.alpha_at(s);
    let qg = g.q_pow(params.q);
    let denom = 1.0 + a;
    ((a * (1.0 - qg)) / denom, (a + params.nu * qg) / denom)
}

/// Constants derived from `(q, nu, alpha, J, rho)` that define the
/// Hopf-Cole normalisation and the centred tilted walk. See the module
/// docs for their roles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub gamma: f64,
    /// Attachment weights `a_j = alpha q^j gamma / (1 + alpha q^j gamma)`
    /// for `j = 0..=J`.
    pub a: Vec<f64>,
    pub b: f64,
    pub b_prime: f64,
    /// `r_star = 1 / (b - b_prime)`: the spatial scale unit.
    pub r_star: f64,
    /// Per-phase lattice drift of the centred walk.
    pub mu: Vec<f64>,
    /// Per-phase normalisation of the tilted walk.
    pub lambda: Vec<f64>,
    /// Per-phase variance factor: the centred tilted walk at phase `d`
    /// has variance `r_star^2 * sigma[d]`.
    pub sigma: Vec<f64>,
    /// Time-scale constant: one unit of scaled time is
    /// `eps^-3 * tau_star_eps * J` micro-steps, `tau_star_eps = eps / sum_d sigma[d]`.
    pub tau_star_eps: f64,
    mu_sum: f64,
    log_lambda_sum: f64,
    log_lambda: Vec<f64>,
}

pub fn derive_constants(params: &ModelParams) -> DerivedConstants {
    let (q, nu, alpha, rho) = (params.q, params.nu, params.alpha, params.rho);
    let j = params.j_phases as usize;
    let gamma = (1.0 - rho) / (1.0 - nu * rho);
    let a: Vec<f64> = (0..=j)
        .map(|d| {
            let ad = alpha * q_powi(q, d as u64) * gamma;
            ad / (1.0 + ad)
        })
        .collect();
    let b = gamma / (1.0 - gamma);
    let b_prime = nu * gamma / (1.0 - nu * gamma);
    let r_star = 1.0 / (b - b_prime);
    let mut mu = Vec::with_capacity(j);
    let mut lambda = Vec::with_capacity(j);
    let mut sigma = Vec::with_capacity(j);
    for d in 0..j {
        mu.push((a[d] - a[d + 1]) * r_star);
        let ag = alpha * q_powi(q, d as u64) * gamma;
        lambda.push((1.0 + ag) / (1.0 + q * ag));
        sigma.push(a[d] * a[d] - a[d + 1] * a[d + 1] + (a[d] - a[d + 1]) * (b + b_prime));
    }
    let sigma_sum: f64 = sigma.iter().sum();
    let tau_star_eps = params.eps() / sigma_sum;
    let mu_sum: f64 = mu.iter().sum();
    let log_lambda: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    let log_lambda_sum: f64 = log_lambda.iter().sum();
    DerivedConstants {
        gamma,
        a,
        b,
        b_prime,
        r_star,
        mu,
        lambda,
        sigma,
        tau_star_eps,
        mu_sum,
        log_lambda_sum,
        log_lambda,
    }
}

impl DerivedConstants {
    #[inline]
    pub fn mu_at(&self, s: u64) -> f64 {
        self.mu[(s as usize) % self.mu.len()]
    }

    #[inline]
    pub fn lambda_at(&self, s: u64) -> f64 {
        self.lambda[(s as usize) % self.lambda.len()]
    }

    #[inline]
    pub fn sigma_at(&self, s: u64) -> f64 {
        self.sigma[(s as usize) % self.sigma.len()]
    }

    /// Accumulated drift `mu_hat(t) = sum_{s < t} mu(s)`, computed by whole
    /// periods plus a partial phase sum so the rounding error stays at a few
    /// ulps no matter how large `t` is.
    pub fn mu_hat(&self, t: u64) -> f64 {
        let j = self.mu.len() as u64;
        let (full, part) = (t / j, (t % j) as usize);
        let partial: f64 = self.mu[..part].iter().sum();
        (full as f64) * self.mu_sum + partial
    }

    /// `log lambda_hat(t) = sum_{s < t} log lambda(s)`, by period decomposition.
    pub fn log_lambda_hat(&self, t: u64) -> f64 {
        let j = self.log_lambda.len() as u64;
        let (full, part) = (t / j, (t % j) as usize);
        let partial: f64 = self.log_lambda[..part].iter().sum();
        (full as f64) * self.log_lambda_sum + partial
    }

    /// Per-period variance sum `sum_{d < J} sigma[d]`.
    pub fn sigma_period_sum(&self) -> f64 {
        self.sigma.iter().sum()
    }

    /// Micro-step count corresponding to scaled time `tau`:
    /// `t = eps^-3 * tau_star_eps * J * tau` (not rounded).
    pub fn steps_of_tau(&self, params: &ModelParams, tau: f64) -> f64 {
        let eps = params.eps();
        eps.powi(-3) * self.tau_star_eps * params.j_phases as f64 * tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-14;

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()))
    }

    /// Reference point A: q = 1/2, nu = 1/4, alpha = 1, rho = 1/2, J = 1.
    /// The expected values below were computed independently in exact
    /// rational arithmetic.
    #[test]
    fn derived_constants_reference_point_a() {
        let p = ModelParams::new(0.5, 0.25, 1.0, 1, 0.5).unwrap();
        let c = derive_constants(&p);
        assert!(close(c.gamma, 4.0 / 7.0, TOL), "gamma = {}", c.gamma);
        assert!(close(c.a[0], 4.0 / 11.0, TOL), "a0 = {}", c.a[0]);
        assert!(close(c.a[1], 2.0 / 9.0, TOL), "a1 = {}", c.a[1]);
        assert!(close(c.b, 4.0 / 3.0, TOL), "b = {}", c.b);
        assert!(close(c.b_prime, 1.0 / 6.0, TOL), "b' = {}", c.b_prime);
        assert!(close(c.r_star, 6.0 / 7.0, TOL), "r* = {}", c.r_star);
        assert!(close(c.mu[0], 0.121_212_121_212_121_22, TOL), "mu = {}", c.mu[0]);
        assert!(close(c.lambda[0], 11.0 / 9.0, TOL), "lambda = {}", c.lambda[0]);
        assert!(close(c.sigma[0], 0.294_969_901_030_507_08, TOL), "sigma = {}", c.sigma[0]);
        let eps = p.eps();
        assert!(close(c.tau_star_eps, eps / c.sigma[0], TOL));
    }

    /// Reference point B: q = 4/5, nu = 1/2, alpha = 2, rho = 7/10, J = 3.
    #[test]
    fn derived_constants_reference_point_b() {
        let p = ModelParams::new(0.8, 0.5, 2.0, 3, 0.7).unwrap();
        let c = derive_constants(&p);
        assert!(close(c.gamma, 6.0 / 13.0, TOL));
        let a_expect = [
            0.48,
            0.424_778_761_061_946_9,
            0.371_373_307_543_520_33,
            0.320_936_063_518_595_88,
        ];
        for (ad, &ex) in c.a.iter().zip(a_expect.iter()) {
            assert!(close(*ad, ex, TOL), "a = {ad}, expected {ex}");
        }
        assert!(close(c.b, 6.0 / 7.0, TOL));
        assert!(close(c.b_prime, 3.0 / 10.0, TOL));
        assert!(close(c.r_star, 70.0 / 39.0, TOL));
        let mu_expect = [
            0.099_115_044_247_787_61,
            0.095_855_942_212_560_55,
            0.090_528_386_711_402_77,
        ];
        let lambda_expect = [
            1.106_194_690_265_486_7,
            1.092_843_326_885_880_2,
            1.080_234_015_879_649_1,
        ];
        let sigma_expect = [
            0.113_861_866_350_424_58,
            0.104_316_601_364_830_66,
            0.093_281_273_346_414_42,
        ];
        for d in 0..3 {
            assert!(close(c.mu[d], mu_expect[d], TOL), "mu[{d}] = {}", c.mu[d]);
            assert!(close(c.lambda[d], lambda_expect[d], TOL), "lambda[{d}] = {}", c.lambda[d]);
            assert!(close(c.sigma[d], sigma_expect[d], TOL), "sigma[{d}] = {}", c.sigma[d]);
        }
        let eps = p.eps();
        let sig_sum: f64 = sigma_expect.iter().sum();
        assert!(close(c.tau_star_eps, eps / sig_sum, TOL));
    }

    /// Degenerate-nu point: nu = 0 gives b' = 0 and r* = 1/b.
    #[test]
    fn derived_constants_nu_zero() {
        let p = ModelParams::new(0.5, 0.0, 1.0, 1, 0.5).unwrap();
        let c = derive_constants(&p);
        assert!(close(c.gamma, 0.5, TOL));
        assert_eq!(c.b_prime, 0.0);
        assert!(close(c.b, 1.0, TOL));
        assert!(close(c.r_star, 1.0, TOL));
    }

    #[test]
    fn jump_probs_reference_values() {
        let p = ModelParams::new(0.5, 0.25, 1.0, 1, 0.5).unwrap();
        let (held, moved) = jump_probs(&p, 0, Gap::Finite(1));
        assert!(close(held, 0.25, TOL), "held = {held}");
        assert!(close(moved, 0.5625, TOL), "moved = {moved}");
        // Infinite gap: both branches collapse to alpha / (1 + alpha).
        let (h_inf, m_inf) = jump_probs(&p, 0, Gap::Infinite);
        assert!(close(h_inf, 0.5, TOL));
        assert!(close(m_inf, 0.5, TOL));
        // Zero gap: blocked when the left neighbour held.
        let (h0, m0) = jump_probs(&p, 0, Gap::Finite(0));
        assert_eq!(h0, 0.0);
        assert!(close(m0, 0.625, TOL));
    }

    #[test]
    fn alpha_modulation_cycles_with_period() {
        let p = ModelParams::new(0.8, 0.5, 2.0, 3, 0.7).unwrap();
        assert!(close(p.alpha_at(0), 2.0, TOL));
        assert!(close(p.alpha_at(1), 1.6, TOL));
        assert!(close(p.alpha_at(2), 1.28, TOL));
        assert!(close(p.alpha_at(3), 2.0, TOL));
        assert!(close(p.alpha_at(7), 1.6, TOL));
    }

    #[test]
    fn accumulated_drift_matches_naive_sum() {
        let p = ModelParams::new(0.8, 0.5, 2.0, 3, 0.7).unwrap();
        let c = derive_constants(&p);
        for t in [0_u64, 1, 2, 3, 4, 7, 30, 1001] {
            let naive_mu: f64 = (0..t).map(|s| c.mu_at(s)).sum();
            let naive_ll: f64 = (0..t).map(|s| c.lambda_at(s).ln()).sum();
            assert!(close(c.mu_hat(t), naive_mu, 1e-12), "t = {t}");
            assert!(close(c.log_lambda_hat(t), naive_ll, 1e-12), "t = {t}");
        }
    }

    #[test]
    fn from_eps_sets_q() {
        let p = ModelParams::from_eps(0.2, 0.25, 1.0, 1, 0.8).unwrap();
        assert!(close(p.q, (-0.2_f64).exp(), TOL));
        assert!(close(p.eps(), 0.2, TOL));
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(ModelParams::new(0.0, 0.2, 1.0, 1, 0.5).is_err());
        assert!(ModelParams::new(1.0, 0.2, 1.0, 1, 0.5).is_err());
        assert!(ModelParams::new(0.5, 1.0, 1.0, 1, 0.5).is_err());
        assert!(ModelParams::new(0.5, -0.1, 1.0, 1, 0.5).is_err());
        assert!(ModelParams::new(0.5, 0.2, 0.0, 1, 0.5).is_err());
        assert!(ModelParams::new(0.5, 0.2, 1.0, 0, 0.5).is_err());
        assert!(ModelParams::new(0.5, 0.2, 1.0, 1, 1.0).is_err());
        assert!(ModelParams::from_eps(0.0, 0.2, 1.0, 1, 0.5).is_err());
    }
}
