//! The microscopic Hopf-Cole transform and its scaled readings.
//!
//! For a configuration `y` at time `t`, the transform attaches to each
//! particle index `n` the weight
//!
//! ```text
//! Z(t, n) = lambda_hat(t) * rho^n * q^(y_n + n)
//! ```
//!
//! viewed as a field on the drifting lattice `xi = n - mu_hat(t)`. Left of
//! the leftmost particle the field is exactly zero (`q^infinity = 0`). One
//! time step multiplies each weight by `lambda(t) q^(K_n)` where `K_n` is
//! the jump indicator, which is precisely "one heat-kernel step plus noise":
//!
//! ```text
//! Z(t+1, n) = [p(t+1, t) * Z(t)](n) + Z(t, n) W(t, n),
//! W(t, n)   = lambda(t) (q - 1) (K_n - E[K_n | gaps])
//! ```
//!
//! The noise increment `W` is conditionally centred and bounded by
//! `lambda(t)(1 - q)`. Heights are taken in the log domain,
//! `H = log lambda_hat(t) + n log rho - eps (y_n + n)`, which never
//! overflows regardless of how far the window sits from the origin.
//!
//! Weak (KPZ) scaling reads the field at `Z_eps(tau, r) = Z(t, xi)` with
//! `t = eps^-3 tau_star J tau` and `xi = eps^-1 r_star r`, interpolating
//! linearly first in `xi` along each of the two neighbouring integer times
//! and then in `t`. The normalised field `Ztilde = eps^-1 (1 - rho) r_star Z`
//! turns the step initial condition into a discrete delta: its lattice
//! integral `eps r_star^-1 sum_xi Ztilde(0, xi)` equals 1 exactly.
//!
//! Two initial-condition families are provided: the **step** profile
//! `y_n = -n, n >= 0` (delta for `Ztilde`), and **near-equilibrium**
//! profiles with i.i.d. geometric gaps whose mean `log(1/rho)/eps` makes
//! the log-field increments exactly centred, so `H(0, .)` is a mean-zero
//! random walk; the particle density is then `eps/(eps + log(1/rho))`,
//! approaching the natural density `eps/log(1/rho)` in the scaling limit.

use crate::dynamics::{conditional_move_probs, ParticleConfig, StepRecord};
use crate::model::{DerivedConstants, ModelParams};
use rand::Rng;

/// `q^(y_n + n)` — the per-particle duality weight; zero left of the
/// leftmost particle, non-decreasing in `n`.
pub fn duality_weight(cfg: &ParticleConfig, q: f64, n: i64) -> f64 {
    if n < cfg.min_index() {
        return 0.0;
    }
    let e = cfg.pos(n) + n;
    pow_i(q, e)
}

/// `x^e` for a signed integer exponent.
#[inline]
fn pow_i(x: f64, e: i64) -> f64 {
    if e >= 0 {
        x.powi(e.min(i32::MAX as i64) as i32)
    } else {
        x.powi(e.max(i32::MIN as i64 + 1) as i32)
    }
}

/// A window of Hopf-Cole values at one time, indexed by particle number.
#[derive(Debug, Clone)]
pub struct ZField {
    pub t: u64,
    pub n_min: i64,
    pub vals: Vec<f64>,
}

impl ZField {
    /// Value at particle index `n`; zero left of the window (exact when the
    /// window starts at or left of the leftmost particle).
    #[inline]
    pub fn get(&self, n: i64) -> f64 {
        let rel = n - self.n_min;
        if rel < 0 {
            0.0
        } else {
            self.vals[rel as usize]
        }
    }

    #[inline]
    pub fn n_max(&self) -> i64 {
        self.n_min + self.vals.len() as i64 - 1
    }
}

/// Build `Z(t, n)` for `n` in `n_lo ..= n_hi`. Indices left of the leftmost
/// particle give exact zeros; `n_hi` must not exceed the rightmost particle.
pub fn build_z(
    cfg: &ParticleConfig,
    params: &ModelParams,
    dc: &DerivedConstants,
    t: u64,
    n_lo: i64,
    n_hi: i64,
) -> ZField {
    assert!(n_hi <= cfg.max_index(), "window extends past the rightmost particle");
    let lam_hat = dc.log_lambda_hat(t).exp();
    let vals = (n_lo..=n_hi)
        .map(|n| {
            if n < cfg.min_index() {
                0.0
            } else {
                lam_hat * pow_i(params.rho, n) * duality_weight(cfg, params.q, n)
            }
        })
        .collect();
    ZField { t, n_min: n_lo, vals }
}

/// Log-domain height `H(t, n) = log Z(t, n)`, safe arbitrarily far from the
/// origin. Requires `n` at or right of the leftmost particle.
pub fn height(
    cfg: &ParticleConfig,
    params: &ModelParams,
    dc: &DerivedConstants,
    t: u64,
    n: i64,
) -> f64 {
    let eps = params.eps();
    dc.log_lambda_hat(t) + n as f64 * params.rho.ln() - eps * (cfg.pos(n) + n) as f64
}

/// Upper bound `lambda(t)(1 - q)` on `|W(t, n)|`.
pub fn noise_bound(params: &ModelParams, dc: &DerivedConstants, t: u64) -> f64 {
    dc.lambda_at(t) * (1.0 - params.q)
}

/// Noise increments `W(t, n) = lambda(t)(q - 1)(K_n - E[K_n | gaps])` for
/// every particle in the configuration, given the step's decisions.
pub fn noise_row(
    cfg: &ParticleConfig,
    params: &ModelParams,
    dc: &DerivedConstants,
    t: u64,
    rec: &StepRecord,
) -> Vec<f64> {
    let probs = conditional_move_probs(cfg, params, t);
    let coeff = dc.lambda_at(t) * (params.q - 1.0);
    probs
        .iter()
        .zip(rec.moved.iter())
        .map(|(&e, &k)| coeff * (f64::from(u8::from(k)) - e))
        .collect()
}

/// Noise increment for a single particle.
pub fn noise_increment(
    cfg: &ParticleConfig,
    params: &ModelParams,
    dc: &DerivedConstants,
    t: u64,
    rec: &StepRecord,
    n: i64,
) -> f64 {
    let e = crate::dynamics::conditional_move_prob(cfg, params, t, n);
    dc.lambda_at(t) * (params.q - 1.0) * (f64::from(u8::from(rec.moved(n))) - e)
}

/// Step initial condition: particles at `y_n = -n` for `n = 0 .. count`,
/// i.e. every non-positive site filled. `Z(0, n) = rho^n` for `n >= 0`.
pub fn make_step_ic(count: usize) -> ParticleConfig {
    ParticleConfig::new(0, (0..count as i64).map(|n| -n).collect())
}

/// Mean gap of the near-equilibrium family: `log(1/rho)/eps`, chosen so the
/// per-site log-field increment `log rho + eps g` has mean exactly zero.
pub fn near_eq_gap_mean(params: &ModelParams) -> f64 {
    (1.0 / params.rho).ln() / params.eps()
}

/// Near-equilibrium initial condition on particle indices `n_lo ..= n_hi`
/// (must straddle 0), anchored by `y_0 = 0`.
///
/// Gaps are i.i.d. `base + geometric`: a deterministic base plus a geometric
/// spread sized so the per-site log-field increment `log rho + eps g` has
/// mean exactly zero and variance `eps / r_star`. In scaled position units
/// (one unit = `r_star / eps` sites) the log field is then a random walk
/// with unit diffusivity — exactly the stationary roughness of the
/// unit-coefficient limit equation, so the ensemble starts at dynamical
/// equilibrium instead of roughening toward it. (A bare geometric with the
/// same mean would fluctuate at order one per site and spoil the
/// small-`eps` collapse of the quadratic variation; when the mean is too
/// small to split, the bare geometric is already at or below the target
/// scale and is used as is.)
pub fn make_near_equilibrium_ic<R: Rng>(
    params: &ModelParams,
    n_lo: i64,
    n_hi: i64,
    rng: &mut R,
) -> ParticleConfig {
    assert!(n_lo <= 0 && 0 <= n_hi, "the window must contain index 0");
    let mean = near_eq_gap_mean(params);
    let eps = params.eps();
    let r_star = crate::model::derive_constants(params).r_star;
    // Geometric mean m with eps^2 m (1 + m) = eps / r_star.
    let m_target = 0.5 * ((1.0 + 4.0 / (eps * r_star)).sqrt() - 1.0);
    let base = (mean - m_target).floor().max(0.0);
    let spread = mean - base;
    let beta = spread / (1.0 + spread);
    let ln_beta = beta.ln();
    let draw_gap = move |rng: &mut R| -> i64 {
        let u: f64 = rng.gen();
        if beta <= 0.0 {
            return base as i64;
        }
        base as i64 + (((1.0 - u).ln() / ln_beta) as i64).min(1 << 30)
    };
    let len = (n_hi - n_lo + 1) as usize;
    let mut y = vec![0_i64; len];
    let zero_at = (-n_lo) as usize;
    // Rightwards from the anchor: y_n = y_{n-1} - 1 - gap.
    for k in zero_at + 1..len {
        y[k] = y[k - 1] - 1 - draw_gap(rng);
    }
    // Leftwards from the anchor: y_{n-1} = y_n + 1 + gap.
    for k in (0..zero_at).rev() {
        y[k] = y[k + 1] + 1 + draw_gap(rng);
    }
    ParticleConfig::new(n_lo, y)
}

/// Normalisation turning `Z` into the delta-calibrated field:
/// `Ztilde = eps^-1 (1 - rho) r_star Z`.
pub fn z_tilde_factor(params: &ModelParams, dc: &DerivedConstants) -> f64 {
    (1.0 - params.rho) * dc.r_star / params.eps()
}

/// Scaled coordinates: micro-time (real-valued) for scaled time `tau`, and
/// the lattice coordinate `xi = eps^-1 r_star r` for scaled position `r`.
pub fn scaled_coords(
    params: &ModelParams,
    dc: &DerivedConstants,
    tau: f64,
    r: f64,
) -> (f64, f64) {
    (dc.steps_of_tau(params, tau), dc.r_star * r / params.eps())
}

/// One scaled-field reading.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScaledReading {
    pub tau: f64,
    pub r: f64,
    /// `Z_eps(tau, r)` (bilinear interpolation, first in `xi`, then in `t`).
    pub z: f64,
    /// `log Z_eps(tau, r)`.
    pub h: f64,
}

/// Collects Hopf-Cole windows at the integer times needed to interpolate a
/// grid of `(tau, r)` readings. Drive it from a trajectory observer: call
/// [`ScaledSampler::record`] with the configuration at every time it
/// [`ScaledSampler::wants`].
pub struct ScaledSampler {
    params: ModelParams,
    dc: DerivedConstants,
    taus: Vec<f64>,
    rs: Vec<f64>,
    /// For each tau: micro-time and interpolation weight between floor/ceil.
    t_pairs: Vec<(u64, u64, f64)>,
    rows: std::collections::BTreeMap<u64, ZField>,
}

impl ScaledSampler {
    pub fn new(params: &ModelParams, dc: &DerivedConstants, taus: &[f64], rs: &[f64]) -> Self {
        let t_pairs = taus
            .iter()
            .map(|&tau| {
                let (t_real, _) = scaled_coords(params, dc, tau, 0.0);
                let lo = t_real.floor().max(0.0) as u64;
                let hi = lo + 1;
                (lo, hi, t_real - lo as f64)
            })
            .collect();
        Self {
            params: *params,
            dc: dc.clone(),
            taus: taus.to_vec(),
            rs: rs.to_vec(),
            t_pairs,
            rows: std::collections::BTreeMap::new(),
        }
    }

    /// Largest micro-time the sampler needs (run trajectories to this time
    /// inclusive, i.e. `t_end = last_time() + 1` steps of recording).
    pub fn last_time(&self) -> u64 {
        self.t_pairs.iter().map(|&(_, hi, _)| hi).max().unwrap_or(0)
    }

    pub fn wants(&self, t: u64) -> bool {
        self.t_pairs.iter().any(|&(lo, hi, _)| t == lo || t == hi)
    }

    /// Particle-index window needed at time `t` to cover every reading.
    pub fn window(&self, t: u64) -> (i64, i64) {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for &r in &self.rs {
            let (_, xi) = scaled_coords(&self.params, &self.dc, 0.0, r);
            let n_real = xi + self.dc.mu_hat(t);
            lo = lo.min(n_real.floor() as i64 - 1);
            hi = hi.max(n_real.ceil() as i64 + 1);
        }
        (lo, hi)
    }

    pub fn record(&mut self, t: u64, cfg: &ParticleConfig) {
        if !self.wants(t) || self.rows.contains_key(&t) {
            return;
        }
        let (lo, hi) = self.window(t);
        let field = build_z(cfg, &self.params, &self.dc, t, lo, hi.min(cfg.max_index()));
        self.rows.insert(t, field);
    }

    /// Interpolated readings for the full `(tau, r)` grid, row-major in
    /// `tau` then `r`.
    pub fn finish(&self) -> Vec<ScaledReading> {
        let mut out = Vec::with_capacity(self.taus.len() * self.rs.len());
        for (ti, &tau) in self.taus.iter().enumerate() {
            let (t_lo, t_hi, wt) = self.t_pairs[ti];
            for &r in &self.rs {
                let (_, xi) = scaled_coords(&self.params, &self.dc, 0.0, r);
                let z_lo = self.interp_xi(t_lo, xi);
                let z_hi = self.interp_xi(t_hi, xi);
                let z = (1.0 - wt) * z_lo + wt * z_hi;
                out.push(ScaledReading { tau, r, z, h: z.ln() });
            }
        }
        out
    }

    fn interp_xi(&self, t: u64, xi: f64) -> f64 {
        let row = self
            .rows
            .get(&t)
            .unwrap_or_else(|| panic!("no field recorded at micro-time {t}"));
        let n_real = xi + self.dc.mu_hat(t);
        let n0 = n_real.floor() as i64;
        let frac = n_real - n0 as f64;
        (1.0 - frac) * row.get(n0) + frac * row.get(n0 + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{parallel_decisions, apply_step, run_trajectory};
    use crate::env::BernoulliEnv;
    use crate::model::derive_constants;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_a() -> (ModelParams, DerivedConstants) {
        let p = ModelParams::new(0.5, 0.25, 1.0, 1, 0.5).unwrap();
        let c = derive_constants(&p);
        (p, c)
    }

    #[test]
    fn duality_weight_monotone_and_shifts_by_gap() {
        let cfg = ParticleConfig::new(0, vec![5, 3, 0, -2]);
        let q = 0.5;
        assert_eq!(duality_weight(&cfg, q, -1), 0.0);
        let mut prev = 0.0;
        for n in 0..4 {
            let w = duality_weight(&cfg, q, n);
            assert!(w >= prev, "duality weight must be non-decreasing");
            prev = w;
        }
        // Q_{n-1} = Q_n q^(gap_n) exactly.
        for n in 1..4_i64 {
            let lhs = duality_weight(&cfg, q, n - 1);
            let g = match cfg.gap(n) {
                crate::model::Gap::Finite(g) => g,
                crate::model::Gap::Infinite => unreachable!(),
            };
            let rhs = duality_weight(&cfg, q, n) * q.powi(g as i32);
            assert!((lhs - rhs).abs() <= 1e-16 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn step_ic_field_is_geometric() {
        let (p, c) = point_a();
        let cfg = make_step_ic(30);
        let f = build_z(&cfg, &p, &c, 0, -5, 20);
        for n in -5..=20_i64 {
            let want = if n < 0 { 0.0 } else { p.rho.powi(n as i32) };
            assert!((f.get(n) - want).abs() < 1e-15, "Z(0,{n}) = {}", f.get(n));
        }
    }

    /// One dynamics step multiplies each weight by exactly
    /// `lambda(t) q^(K_n)`.
    #[test]
    fn one_step_multiplies_by_lambda_q_to_k() {
        let (p, c) = point_a();
        let mut cfg = ParticleConfig::new(-2, vec![9, 7, 4, 3, 1, -2, -4]);
        let env = BernoulliEnv::new(77, 0);
        for t in 0..5_u64 {
            let before = build_z(&cfg, &p, &c, t, -2, cfg.max_index());
            let rec = parallel_decisions(&cfg, &p, &env, t);
            apply_step(&mut cfg, &rec);
            let after = build_z(&cfg, &p, &c, t + 1, -2, cfg.max_index());
            for n in -2..=cfg.max_index() {
                let factor = c.lambda_at(t) * if rec.moved(n) { p.q } else { 1.0 };
                let want = before.get(n) * factor;
                assert!(
                    (after.get(n) - want).abs() <= 1e-13 * (1.0 + want.abs()),
                    "t = {t}, n = {n}: {} vs {}",
                    after.get(n),
                    want
                );
            }
        }
    }

    #[test]
    fn height_is_log_of_field() {
        let (p, c) = point_a();
        let cfg = ParticleConfig::new(-1, vec![6, 2, -1, -3]);
        for t in [0_u64, 3] {
            for n in -1..=2_i64 {
                let z = build_z(&cfg, &p, &c, t, n, n).get(n);
                let h = height(&cfg, &p, &c, t, n);
                assert!((h - z.ln()).abs() < 1e-12, "t={t}, n={n}");
            }
        }
    }

    #[test]
    fn noise_rows_are_bounded_and_empirically_centred() {
        let (p, c) = point_a();
        let cfg = ParticleConfig::new(0, vec![5, 3, 0, -2]);
        let bound = noise_bound(&p, &c, 0);
        let n_rep = 50_000_u64;
        let mut sums = vec![0.0; cfg.len()];
        for rep in 0..n_rep {
            let env = BernoulliEnv::new(123, rep);
            let rec = parallel_decisions(&cfg, &p, &env, 0);
            let w = noise_row(&cfg, &p, &c, 0, &rec);
            for (acc, &wi) in sums.iter_mut().zip(w.iter()) {
                assert!(wi.abs() <= bound + 1e-15, "|W| = {} > bound {}", wi.abs(), bound);
                *acc += wi;
            }
        }
        // 4-sigma band: Var(W) <= bound^2, so sd of the mean <= bound/sqrt(R).
        let band = 4.0 * bound / (n_rep as f64).sqrt();
        for (k, acc) in sums.iter().enumerate() {
            let mean = acc / n_rep as f64;
            assert!(mean.abs() < band, "particle {k}: mean W = {mean}");
        }
    }

    /// Near-equilibrium gaps: empirical mean matches `log(1/rho)/eps` and the
    /// log-field increments are centred (zero-drift design), both within
    /// 4-sigma bands.
    #[test]
    fn near_equilibrium_ic_statistics() {
        let p = ModelParams::from_eps(0.2, 0.25, 1.0, 1, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = make_near_equilibrium_ic(&p, -4000, 4000, &mut rng);
        let want_mean = near_eq_gap_mean(&p);
        let mut gaps = Vec::new();
        for n in cfg.min_index() + 1..=cfg.max_index() {
            match cfg.gap(n) {
                crate::model::Gap::Finite(g) => gaps.push(g as f64),
                crate::model::Gap::Infinite => {}
            }
        }
        let count = gaps.len() as f64;
        let mean: f64 = gaps.iter().sum::<f64>() / count;
        // Geometric variance = mean (1 + mean).
        let sd_mean = (want_mean * (1.0 + want_mean) / count).sqrt();
        assert!(
            (mean - want_mean).abs() < 4.0 * sd_mean,
            "gap mean {mean} vs {want_mean}"
        );
        // Log-field increment: log rho + eps * gap, mean zero by design.
        let eps = p.eps();
        let inc_mean: f64 =
            gaps.iter().map(|&g| p.rho.ln() + eps * g).sum::<f64>() / count;
        let inc_sd = eps * (want_mean * (1.0 + want_mean) / count).sqrt();
        assert!(inc_mean.abs() < 4.0 * inc_sd, "log-increment mean {inc_mean}");
        // Valid for an aggressive eps too (density stays below one).
        let p2 = ModelParams::from_eps(0.4, 0.25, 1.0, 1, 0.8).unwrap();
        let cfg2 = make_near_equilibrium_ic(&p2, -200, 200, &mut rng);
        assert!(cfg2.positions().windows(2).all(|w| w[0] > w[1]));
    }

    /// The lattice integral of the normalised step-IC field equals 1 for any
    /// eps: `eps r_star^-1 sum_xi Ztilde(0, xi) = (1 - rho) sum rho^n = 1`.
    #[test]
    fn step_ic_mass_identity() {
        for eps in [0.4, 0.2, 0.1] {
            let p = ModelParams::from_eps(eps, 0.25, 1.0, 1, 0.5).unwrap();
            let c = derive_constants(&p);
            let n_terms = 200; // rho^200 ~ 6e-61, far below f64 resolution
            let cfg = make_step_ic(n_terms);
            let f = build_z(&cfg, &p, &c, 0, 0, n_terms as i64 - 1);
            let total: f64 = f.vals.iter().sum();
            let mass = p.eps() / c.r_star * z_tilde_factor(&p, &c) * total;
            assert!((mass - 1.0).abs() < 1e-13, "eps = {eps}: mass = {mass}");
        }
    }

    #[test]
    fn scaled_sampler_reproduces_grid_values() {
        let (p, c) = point_a();
        let mut cfg = make_step_ic(60);
        let env = BernoulliEnv::new(4, 0);
        // Pick tau so the micro-time lands between integers; read at r = 0.
        let taus = [0.02, 0.05];
        let mut sampler = ScaledSampler::new(&p, &c, &taus, &[0.0, 0.3]);
        let t_end = sampler.last_time() + 1;
        run_trajectory(&mut cfg, &p, &env, 0, t_end, |t, pre, _| {
            sampler.record(t, pre);
        });
        sampler.record(t_end, &cfg);
        let readings = sampler.finish();
        assert_eq!(readings.len(), 4);
        for rd in &readings {
            assert!(rd.z.is_finite() && rd.z > 0.0);
            assert!((rd.h - rd.z.ln()).abs() < 1e-12);
        }
    }

    /// Adjacent weights obey `Z(n+1) = rho q^(-gap) Z(n)`, so the field can
    /// never lose more than one factor of `rho` per site moving right: gaps
    /// only push it back up. At zero gaps (step data) the ratio is exactly
    /// `rho`.
    #[test]
    fn field_ratio_tracks_gaps() {
        let (p, c) = point_a();
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let cfg = make_near_equilibrium_ic(&p, -40, 40, &mut rng);
        let f = build_z(&cfg, &p, &c, 0, -40, 40);
        for n in -40..40_i64 {
            let (z0, z1) = (f.get(n), f.get(n + 1));
            assert!(z1 >= p.rho * z0 * (1.0 - 1e-12), "ratio at {n}: {}", z1 / z0);
            let g = match cfg.gap(n + 1) {
                crate::model::Gap::Finite(g) => g,
                crate::model::Gap::Infinite => unreachable!(),
            };
            let want = p.rho * p.q.powi(-(g as i32)) * z0;
            assert!((z1 - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    /// A reading must not depend on which other grid points share the
    /// sampler (the per-time window always covers every requested point),
    /// and the step-IC reading at the origin of scaled coordinates is 1.
    #[test]
    fn readings_are_window_independent() {
        let (p, c) = point_a();
        let taus = [0.0, 0.03];
        let run = |rs: &[f64]| {
            let mut cfg = make_step_ic(60);
            let env = BernoulliEnv::new(12, 0);
            let mut sampler = ScaledSampler::new(&p, &c, &taus, rs);
            let t_end = sampler.last_time();
            run_trajectory(&mut cfg, &p, &env, 0, t_end, |t, pre, _| {
                sampler.record(t, pre);
            });
            sampler.record(t_end, &cfg);
            sampler.finish()
        };
        let wide = run(&[-0.4, 0.0, 0.55]);
        let narrow = run(&[0.0]);
        for ti in 0..taus.len() {
            let a = &wide[ti * 3 + 1];
            let b = &narrow[ti];
            assert_eq!(a.z.to_bits(), b.z.to_bits(), "tau = {}", a.tau);
        }
        assert_eq!(wide[1].z, 1.0, "step-IC origin reading");
    }
}
