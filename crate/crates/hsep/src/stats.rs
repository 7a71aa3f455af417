//! Streaming statistics, exponent fits, and confidence bands.
//!
//! Replica experiments fold their observations into [`StreamingMoments`]
//! accumulators, which support an associative merge so per-replica partial
//! results can be combined in any grouping with the same answer up to
//! floating-point roundoff. Exponent estimates come from ordinary least
//! squares on log-log pairs, reported with `R^2` so a poor power-law fit is
//! visible rather than silent.

use serde::Serialize;

/// Count, mean, and central moment sums `M2..M4` of a stream of values.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StreamingMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    /// Welford-style single-value update.
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0)
            + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    /// Merge another accumulator into this one. Associative and commutative
    /// up to floating-point roundoff.
    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let delta2 = delta * delta;
        let delta3 = delta2 * delta;
        let delta4 = delta2 * delta2;
        let m2 = self.m2 + other.m2 + delta2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + delta4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * delta2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.count += other.count;
    }

    /// Population variance (`M2 / n`).
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    /// Unbiased sample variance (`M2 / (n - 1)`).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }

    /// Skewness `m3 / m2^{3/2}` (central moments).
    pub fn skewness(&self) -> f64 {
        if self.count < 2 || self.m2 == 0.0 {
            0.0
        } else {
            let n = self.count as f64;
            (self.m3 / n) / (self.m2 / n).powf(1.5)
        }
    }

    /// Excess kurtosis (0 for a normal distribution).
    pub fn excess_kurtosis(&self) -> f64 {
        if self.count < 2 || self.m2 == 0.0 {
            0.0
        } else {
            self.count as f64 * self.m4 / (self.m2 * self.m2) - 3.0
        }
    }

    /// Standard error of the *sample variance*, via the fourth moment:
    /// `Var(s^2) ~ (m4 - m2^2 (n-3)/(n-1)) / n` with central moments
    /// `m_k = M_k / n`.
    pub fn variance_sem(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 4 {
            return f64::INFINITY;
        }
        let mu2 = self.m2 / n;
        let mu4 = self.m4 / n;
        ((mu4 - mu2 * mu2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope (homoscedastic residual estimate).
    pub slope_se: f64,
}

/// Fit `y = slope * x + intercept` by least squares. Panics on fewer than
/// three points (a two-point "fit" has no residual information).
pub fn ols(xs: &[f64], ys: &[f64]) -> OlsFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 3, "need at least three points for a meaningful fit");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let dof = (xs.len() - 2).max(1) as f64;
    let slope_se = (ss_res / dof / sxx).sqrt();
    OlsFit { slope, intercept, r2, slope_se }
}

/// Fit an exponent on log-log axes: `y ~ C x^p` gives `p` as the slope.
/// Non-positive pairs are skipped (they carry no power-law information).
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> OlsFit {
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(ys.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if x > 0.0 && y > 0.0 {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    ols(&lx, &ly)
}
