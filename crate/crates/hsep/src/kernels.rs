//! Jump-count random walks and the discrete heat kernel.
//!
//! One step of the dynamics moves the Hopf-Cole field by a random-walk
//! semigroup. The walk for step `s` is built in three layers:
//!
//! 1. **Base walk** on the non-negative integers with masses
//!    `m_0 = 1 - A`, `m_n = A r'^(n-1) (1 - nu)/(1 + alpha_s)` for `n >= 1`,
//!    where `A = alpha_s (1 - q)/(1 + alpha_s)` and
//!    `r' = (nu + alpha_s)/(1 + alpha_s)`. Its generating function is the
//!    rational `f_s(x) = ((1 + q alpha_s) - (nu + q alpha_s) x) /
//!    ((1 + alpha_s) - (nu + alpha_s) x)`.
//! 2. **Tilt and centring**: `P(X_s = -mu(s) + j) = lambda(s) rho^j m_j`.
//!    The normalisation `lambda(s)` makes this a probability vector
//!    (`lambda(s) f_s(rho) = 1`), the drift `mu(s)` centres it exactly, and
//!    its variance is `r_star^2 sigma(s)`.
//! 3. **Heat kernel** `p(t2, t1, .)`: the law of the sum of the tilted walks
//!    for steps `t1 .. t2-1`, supported on `c + j`, `j >= 0`, with real left
//!    edge `c = mu_hat(t1) - mu_hat(t2)`.
//!
//! Because every tilt is by the same `rho`, a kernel factorises as
//! `p_j = exp(log_amp) * rho^j * M_j` where `M` is the *plain* convolution
//! of the untilted base masses and `log_amp` sums the `log lambda(s)`.
//! Kernels are therefore built by convolving untilted mass vectors, which
//! keeps every entry non-negative (no cancellation) and makes composition
//! exact: convolving two kernels multiplies amplitudes and convolves `M`s.
//!
//! **Tail control.** Base masses are truncated at relative mass `1e-17` and
//! each convolution trims leading/trailing untilted mass up to `1e-16`
//! (recorded in `trimmed_mass`). Trimming untilted mass `delta` perturbs any
//! field convolution `[p * Z](n)` by at most
//! `exp(log_amp) * delta * sup_k |rho^(n-k) Z(k)|`, i.e. the trim budget is
//! measured against the *tilt-compensated* field — exactly the magnitude the
//! transform keeps bounded — so the discarded mass stays far below every
//! verification tolerance.

use crate::model::{DerivedConstants, ModelParams};

/// Relative tail mass at which a base walk's geometric tail is cut.
const BASE_TAIL: f64 = 1e-17;

/// Untilted mass trimmed from each end of a kernel per convolution.
const CONV_TRIM: f64 = 1e-16;

/// Base-walk masses for step `s`, truncated once the remaining geometric
/// tail is below `BASE_TAIL`.
pub fn base_masses(params: &ModelParams, s: u64) -> Vec<f64> {
    let alpha_s = params.alpha_at(s);
    let a = alpha_s * (1.0 - params.q) / (1.0 + alpha_s);
    let r = (params.nu + alpha_s) / (1.0 + alpha_s);
    let lead = a * (1.0 - params.nu) / (1.0 + alpha_s);
    let mut masses = vec![1.0 - a];
    // Tail beyond n terms is a * r^n; stop when it is negligible.
    let mut geom = lead;
    let mut tail = a;
    while tail > BASE_TAIL {
        masses.push(geom);
        tail *= r;
        geom *= r;
    }
    masses
}

/// Generating function `E[x^(base walk)]` in closed form. Finite for
/// `|x| < (1 + alpha_s)/(nu + alpha_s)`.
pub fn base_mgf(params: &ModelParams, s: u64, x: f64) -> f64 {
    let alpha_s = params.alpha_at(s);
    let num = (1.0 + params.q * alpha_s) - (params.nu + params.q * alpha_s) * x;
    let den = (1.0 + alpha_s) - (params.nu + alpha_s) * x;
    num / den
}

/// Generating function of the centred tilted walk for step `s`:
/// `phi(x) = x^(-mu(s)) lambda(s) f_s(rho x)`. Satisfies `phi(1) = 1`,
/// `phi'(1) = 0`, `phi''(1) = r_star^2 sigma(s)`.
pub fn phi(params: &ModelParams, dc: &DerivedConstants, s: u64, x: f64) -> f64 {
    x.powf(-dc.mu_at(s)) * dc.lambda_at(s) * base_mgf(params, s, params.rho * x)
}

/// A (possibly multi-step) centred tilted walk kernel in factorised form:
/// the probability attached to lattice displacement `left_edge + j` is
/// `exp(log_amp) * rho^j * untilted[j - j_offset]`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    /// First micro-step covered (kernel transports fields from this time).
    pub t_from: u64,
    /// One past the last micro-step covered.
    pub t_to: u64,
    /// Real left edge `c = mu_hat(t_from) - mu_hat(t_to)` of the support.
    pub left_edge: f64,
    /// First untilted index with stored mass (leading trim offset).
    pub j_offset: usize,
    /// Sum of `log lambda(s)` over covered steps.
    pub log_amp: f64,
    /// Plain convolution of base masses, indices `j_offset ..`.
    pub untilted: Vec<f64>,
    /// Probabilities `p_j`, same indexing as `untilted`.
    pub weights: Vec<f64>,
    /// Total tilted probability discarded by truncation and trimming.
    pub trimmed_mass: f64,
    rho: f64,
}

impl KernelTable {
    /// Probabilities with their untilted indices `j` (displacement is
    /// `left_edge + j`).
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, &w)| (self.j_offset + i, w))
    }

    /// Total probability mass (1 minus tilted trim losses).
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mean lattice displacement (0 for an exactly centred kernel).
    pub fn mean(&self) -> f64 {
        self.iter().map(|(j, w)| w * (self.left_edge + j as f64)).sum()
    }

    /// Variance of the lattice displacement.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.iter()
            .map(|(j, w)| {
                let d = self.left_edge + j as f64 - mean;
                w * d * d
            })
            .sum()
    }

    /// Largest single-site probability.
    pub fn sup(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// `sum_j p_j |c + j|^v exp(u eps |c + j|)`: the weighted-tail sums used
    /// by the kernel scaling probes (`v = 0` gives the plain exponential sum).
    pub fn weighted_tail_sum(&self, u: f64, eps: f64, v: f64) -> f64 {
        self.iter()
            .map(|(j, w)| {
                let z = (self.left_edge + j as f64).abs();
                let pow = if v == 0.0 { 1.0 } else { z.powf(v) };
                w * pow * (u * eps * z).exp()
            })
            .sum()
    }

    /// Apply the kernel to a field given on particle indices
    /// `z_n_min ..= z_n_min + z.len() - 1`, producing values on
    /// `out_n_min ..= out_n_min + out_len - 1`:
    ///
    /// ```text
    /// out[n] = sum_j p_j z[n - j]
    /// ```
    ///
    /// Field values left of `z_n_min` count as zero — exact when `z_n_min`
    /// is at or left of the leftmost particle, where the field vanishes.
    /// The caller must supply `z` far enough right (`out` never reads right
    /// of `out_n_min + out_len - 1`).
    pub fn apply(&self, z: &[f64], z_n_min: i64, out_n_min: i64, out_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; out_len];
        for (idx, o) in out.iter_mut().enumerate() {
            let n = out_n_min + idx as i64;
            let mut acc = 0.0;
            for (j, w) in self.iter() {
                let k = n - j as i64;
                let rel = k - z_n_min;
                if rel < 0 {
                    break; // all later j reach even further left
                }
                if (rel as usize) < z.len() {
                    acc += w * z[rel as usize];
                }
            }
            *o = acc;
        }
        out
    }
}

/// Tilted probability of one site, evaluated with a single combined
/// exponent: `log_amp` alone can exceed the overflow threshold at large
/// time separations even though the probability itself is at most 1.
fn tilted_site(log_amp: f64, ln_rho: f64, j: usize, m: f64) -> f64 {
    if m <= 0.0 {
        0.0
    } else {
        (log_amp + j as f64 * ln_rho + m.ln()).exp()
    }
}

fn finish_table(
    params: &ModelParams,
    dc: &DerivedConstants,
    t_from: u64,
    t_to: u64,
    j_offset: usize,
    log_amp: f64,
    untilted: Vec<f64>,
    trimmed_mass: f64,
) -> KernelTable {
    let rho = params.rho;
    let ln_rho = rho.ln();
    let weights: Vec<f64> = untilted
        .iter()
        .enumerate()
        .map(|(i, &m)| tilted_site(log_amp, ln_rho, j_offset + i, m))
        .collect();
    KernelTable {
        t_from,
        t_to,
        left_edge: dc.mu_hat(t_from) - dc.mu_hat(t_to),
        j_offset,
        log_amp,
        untilted,
        weights,
        trimmed_mass,
        rho,
    }
}

/// Trim sites whose cumulative *tilted* probability is below `CONV_TRIM`
/// from each end. Trimming must be measured in tilted mass: the tilt
/// rescales sites by `exp(log_amp + j log rho)`, which grows without bound
/// with the covered horizon, so an untilted-mass criterion would eventually
/// discard sites carrying order-one probability.
fn trim(j_offset: &mut usize, m: &mut Vec<f64>, trimmed: &mut f64, log_amp: f64, ln_rho: f64) {
    let mut lead = 0.0;
    let mut cut_front = 0;
    while cut_front < m.len() {
        let w = tilted_site(log_amp, ln_rho, *j_offset + cut_front, m[cut_front]);
        if lead + w > CONV_TRIM {
            break;
        }
        lead += w;
        cut_front += 1;
    }
    if cut_front > 0 {
        m.drain(..cut_front);
        *j_offset += cut_front;
        *trimmed += lead;
    }
    let mut tail = 0.0;
    let mut keep = m.len();
    while keep > 1 {
        let w = tilted_site(log_amp, ln_rho, *j_offset + keep - 1, m[keep - 1]);
        if tail + w > CONV_TRIM {
            break;
        }
        tail += w;
        keep -= 1;
    }
    if keep < m.len() {
        m.truncate(keep);
        *trimmed += tail;
    }
}

/// Single-step centred tilted kernel for step `s`.
pub fn tilted_kernel(params: &ModelParams, dc: &DerivedConstants, s: u64) -> KernelTable {
    heat_kernel(params, dc, s, s + 1)
}

/// Multi-step heat kernel `p(t2, t1, .)` transporting fields from time `t1`
/// to time `t2 >= t1`. `t1 == t2` gives the identity (a point mass at 0).
pub fn heat_kernel(
    params: &ModelParams,
    dc: &DerivedConstants,
    t1: u64,
    t2: u64,
) -> KernelTable {
    assert!(t2 >= t1, "kernel runs forward in time");
    let mut j_offset = 0_usize;
    let mut m = vec![1.0];
    let mut log_amp = 0.0;
    let mut trimmed = 0.0;
    for s in t1..t2 {
        let base = base_masses(params, s);
        let mut next = vec![0.0; m.len() + base.len() - 1];
        for (i, &mi) in m.iter().enumerate() {
            if mi == 0.0 {
                continue;
            }
            for (k, &bk) in base.iter().enumerate() {
                next[i + k] += mi * bk;
            }
        }
        m = next;
        log_amp += dc.lambda_at(s).ln();
        trim(&mut j_offset, &mut m, &mut trimmed, log_amp, params.rho.ln());
    }
    finish_table(params, dc, t1, t2, j_offset, log_amp, m, trimmed)
}

/// Compose two kernels: `second` must start where `first` ends. The result
/// equals `heat_kernel(first.t_from, second.t_to)` up to trim-level mass.
pub fn convolve(first: &KernelTable, second: &KernelTable) -> KernelTable {
    assert_eq!(
        first.t_to, second.t_from,
        "kernels must cover adjacent time intervals"
    );
    assert_eq!(first.rho, second.rho);
    let mut m = vec![0.0; first.untilted.len() + second.untilted.len() - 1];
    for (i, &a) in first.untilted.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (k, &b) in second.untilted.iter().enumerate() {
            m[i + k] += a * b;
        }
    }
    let mut j_offset = first.j_offset + second.j_offset;
    let mut trimmed = first.trimmed_mass + second.trimmed_mass;
    let log_amp = first.log_amp + second.log_amp;
    let rho = first.rho;
    let ln_rho = rho.ln();
    trim(&mut j_offset, &mut m, &mut trimmed, log_amp, ln_rho);
    let weights: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(i, &mm)| tilted_site(log_amp, ln_rho, j_offset + i, mm))
        .collect();
    KernelTable {
        t_from: first.t_from,
        t_to: second.t_to,
        left_edge: first.left_edge + second.left_edge,
        j_offset,
        log_amp,
        untilted: m,
        weights,
        trimmed_mass: trimmed,
        rho,
    }
}

/// One row of a kernel scaling probe: summary statistics of `p(t1 + delta, t1)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KernelProbeRow {
    pub delta: u64,
    /// Largest single-site probability.
    pub sup: f64,
    /// `sum_j p_j exp(u eps |c + j|)`.
    pub exp_sum: f64,
    /// `sum_j p_j |c + j|^v exp(u eps |c + j|)`.
    pub moment_sum: f64,
    /// Kernel variance minus the per-step closed form `sum r_star^2 sigma(s)`.
    pub variance_residual: f64,
    pub mass: f64,
}

/// Probe heat-kernel scaling along a doubling ladder of time separations.
/// Requires `J = 1` (so the kernel depends only on the separation and
/// doubling composes exactly); returns one row per requested separation.
pub fn kernel_scaling_probe(
    params: &ModelParams,
    dc: &DerivedConstants,
    deltas: &[u64],
    u: f64,
    v: f64,
) -> Vec<KernelProbeRow> {
    assert_eq!(params.j_phases, 1, "the doubling ladder needs a time-homogeneous kernel");
    let eps = params.eps();
    let step_var = dc.r_star * dc.r_star * dc.sigma[0];
    let mut rows = Vec::with_capacity(deltas.len());
    let mut cache: Option<(u64, KernelTable)> = None;
    for &delta in deltas {
        let table = build_pow(params, dc, delta, &mut cache);
        rows.push(KernelProbeRow {
            delta,
            sup: table.sup(),
            exp_sum: table.weighted_tail_sum(u, eps, 0.0),
            moment_sum: table.weighted_tail_sum(u, eps, v),
            variance_residual: table.variance() - delta as f64 * step_var,
            mass: table.mass(),
        });
        cache = Some((delta, table));
    }
    rows
}

/// Build `p(delta, 0)` reusing a previously built kernel when `delta` is an
/// exact multiple reachable by composition (time-homogeneous case).
fn build_pow(
    params: &ModelParams,
    dc: &DerivedConstants,
    delta: u64,
    cache: &mut Option<(u64, KernelTable)>,
) -> KernelTable {
    if delta == 0 {
        return heat_kernel(params, dc, 0, 0);
    }
    if let Some((d0, t0)) = cache.take() {
        if d0 > 0 && delta % d0 == 0 {
            let mut acc = t0.clone();
            while acc.t_to - acc.t_from < delta {
                let need = delta - (acc.t_to - acc.t_from);
                if need >= d0 {
                    // Shift the cached block to start where acc ends; J = 1
                    // makes the kernel translation invariant in time.
                    let mut block = t0.clone();
                    block.t_from = acc.t_to;
                    block.t_to = acc.t_to + d0;
                    acc = convolve(&acc, &block);
                } else {
                    let tail = heat_kernel(params, dc, acc.t_to, acc.t_to + need);
                    acc = convolve(&acc, &tail);
                }
            }
            return acc;
        }
        *cache = Some((d0, t0));
    }
    heat_kernel(params, dc, 0, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_constants, ModelParams};

    fn point_a() -> (ModelParams, DerivedConstants) {
        let p = ModelParams::new(0.5, 0.25, 1.0, 1, 0.5).unwrap();
        let c = derive_constants(&p);
        (p, c)
    }

    fn point_b() -> (ModelParams, DerivedConstants) {
        let p = ModelParams::new(0.8, 0.5, 2.0, 3, 0.7).unwrap();
        let c = derive_constants(&p);
        (p, c)
    }

    #[test]
    fn base_masses_normalise_and_match_mgf() {
        for (p, _) in [point_a(), point_b()] {
            for s in 0..3 {
                let m = base_masses(&p, s);
                let total: f64 = m.iter().sum();
                assert!((total - 1.0).abs() < 1e-14, "mass = {total}");
                for x in [0.3_f64, 0.7, 0.95] {
                    let series: f64 =
                        m.iter().enumerate().map(|(n, &mn)| mn * x.powi(n as i32)).sum();
                    let closed = base_mgf(&p, s, x);
                    assert!(
                        (series - closed).abs() < 1e-13,
                        "mgf mismatch at x = {x}: {series} vs {closed}"
                    );
                }
            }
        }
    }

    /// The tilt normalisation identity `lambda(s) f_s(rho) = 1`.
    #[test]
    fn lambda_normalises_tilt() {
        for (p, c) in [point_a(), point_b()] {
            for s in 0..p.j_phases as u64 {
                let v = c.lambda_at(s) * base_mgf(&p, s, p.rho);
                assert!((v - 1.0).abs() < 1e-14, "phase {s}: {v}");
            }
        }
    }

    /// Single-step tilted kernel: unit mass, zero mean, variance
    /// `r_star^2 sigma(s)`.
    #[test]
    fn tilted_kernel_centred_and_normalised() {
        for (p, c) in [point_a(), point_b()] {
            for s in 0..p.j_phases as u64 {
                let k = tilted_kernel(&p, &c, s);
                assert!((k.mass() - 1.0).abs() < 1e-13, "mass = {}", k.mass());
                assert!(k.mean().abs() < 1e-11, "mean = {}", k.mean());
                let want = c.r_star * c.r_star * c.sigma_at(s);
                assert!(
                    (k.variance() - want).abs() < 1e-11,
                    "variance {} vs {}",
                    k.variance(),
                    want
                );
            }
        }
    }

    #[test]
    fn phi_reference_values() {
        let (p, c) = point_a();
        assert!((phi(&p, &c, 0, 1.0) - 1.0).abs() < 1e-14);
        // Independently computed in exact rational arithmetic (then rounded).
        let v = phi(&p, &c, 0, 1.05);
        assert!((v - 1.000_268_476_648_459_1).abs() < 1e-14, "phi(1.05) = {v}");
        // Numeric second derivative at 1 matches the per-step variance.
        let h = 1e-3;
        let d2 = (phi(&p, &c, 0, 1.0 + h) - 2.0 + phi(&p, &c, 0, 1.0 - h)) / (h * h);
        let want = c.r_star * c.r_star * c.sigma_at(0);
        assert!((d2 - want).abs() < 1e-4, "phi''(1) = {d2}, want {want}");
        // First derivative vanishes (centred walk).
        let d1 = (phi(&p, &c, 0, 1.0 + h) - phi(&p, &c, 0, 1.0 - h)) / (2.0 * h);
        assert!(d1.abs() < 1e-6, "phi'(1) = {d1}");
    }

    #[test]
    fn identity_kernel_at_zero_steps() {
        let (p, c) = point_a();
        let k = heat_kernel(&p, &c, 4, 4);
        assert_eq!(k.untilted, vec![1.0]);
        assert_eq!(k.j_offset, 0);
        assert_eq!(k.left_edge, 0.0);
        assert_eq!(k.weights, vec![1.0]);
    }

    /// Composition equals the directly built kernel (semigroup property),
    /// exercised across phase boundaries of a `J = 3` point.
    #[test]
    fn composition_matches_direct_build() {
        let (p, c) = point_b();
        let direct = heat_kernel(&p, &c, 0, 5);
        let a = heat_kernel(&p, &c, 0, 2);
        let b = heat_kernel(&p, &c, 2, 5);
        let composed = convolve(&a, &b);
        assert_eq!(composed.t_from, 0);
        assert_eq!(composed.t_to, 5);
        assert!((composed.left_edge - direct.left_edge).abs() < 1e-13);
        // Compare probabilities on the union of supports.
        let lo = direct.j_offset.min(composed.j_offset);
        let hi = (direct.j_offset + direct.untilted.len())
            .max(composed.j_offset + composed.untilted.len());
        for j in lo..hi {
            let d = direct
                .weights
                .get(j.wrapping_sub(direct.j_offset))
                .copied()
                .unwrap_or(0.0);
            let cmp = composed
                .weights
                .get(j.wrapping_sub(composed.j_offset))
                .copied()
                .unwrap_or(0.0);
            assert!((d - cmp).abs() < 1e-14, "j = {j}: {d} vs {cmp}");
        }
    }

    /// Multi-step kernel: mass, centring, and the variance identity
    /// `Var = sum_s r_star^2 sigma(s)`.
    #[test]
    fn heat_kernel_moment_identities() {
        let (p, c) = point_b();
        let t2 = 32;
        let k = heat_kernel(&p, &c, 0, t2);
        assert!((k.mass() - 1.0).abs() < 1e-12, "mass = {}", k.mass());
        assert!(k.mean().abs() < 1e-10, "mean = {}", k.mean());
        let want: f64 = (0..t2).map(|s| c.r_star * c.r_star * c.sigma_at(s)).sum();
        assert!(
            (k.variance() - want).abs() < 1e-10,
            "variance {} vs {}",
            k.variance(),
            want
        );
        assert!(k.trimmed_mass < 1e-12);
    }

    /// Field application agrees with a direct double loop, including the
    /// zero-padding convention left of the field window.
    #[test]
    fn apply_matches_direct_convolution() {
        let (p, c) = point_a();
        let k = heat_kernel(&p, &c, 0, 3);
        let z_n_min = -4_i64;
        let z: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64) * 0.3 + 0.1).collect();
        let out = k.apply(&z, z_n_min, 2, 8);
        for (idx, &val) in out.iter().enumerate() {
            let n = 2 + idx as i64;
            let mut want = 0.0;
            for (j, w) in k.iter() {
                let rel = n - j as i64 - z_n_min;
                if rel >= 0 && (rel as usize) < z.len() {
                    want += w * z[rel as usize];
                }
            }
            assert!((val - want).abs() < 1e-14 * (1.0 + want.abs()));
        }
    }

    /// The doubling ladder reproduces directly built kernels.
    #[test]
    fn probe_ladder_matches_direct() {
        let p = ModelParams::from_eps(0.3, 0.25, 1.0, 1, 0.6).unwrap();
        let c = derive_constants(&p);
        let rows = kernel_scaling_probe(&p, &c, &[4, 8, 16], 1.0, 2.0);
        let direct = heat_kernel(&p, &c, 0, 16);
        let last = &rows[2];
        assert!((last.sup - direct.sup()).abs() < 1e-13);
        assert!((last.mass - direct.mass()).abs() < 1e-12);
        assert!(last.variance_residual.abs() < 1e-10);
    }
}
