//! Truncated power law `p(x) ∝ (x + x0)^(-beta) * exp(-x / kappa)`:
//! maximum-likelihood fitting and tabulated sampling.
//!
//! The family is exponential in the natural parameters `(beta, 1/kappa)`
//! with sufficient statistics `(-ln(x + x0), -x)`, so the log-likelihood is
//! concave there and a damped Newton iteration finds the unique maximum.
//! The normalizer is integrated numerically over `[min sample, 10 * max
//! sample]` after the substitution `t = ln(x + x0)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of positive samples accepted by the fitter.
pub const MIN_FIT_SAMPLES: usize = 100;
const QUAD_INTERVALS: usize = 2048;
const BETA_MIN: f64 = 1e-6;
const BETA_MAX: f64 = 20.0;
const TABLE_POINTS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPowerLawFit {
    pub beta: f64,
    pub kappa: f64,
    pub x0: f64,
    pub loglik: f64,
    /// Positive samples used by the fit.
    pub n: usize,
    /// Zero samples dropped before fitting.
    pub dropped_zeros: usize,
}

/// Simpson nodes on `t = ln(x + x0)` over `[lo, hi]`.
struct Quadrature {
    t: Vec<f64>,
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Quadrature {
    fn new(lo: f64, hi: f64, x0: f64) -> Self {
        let (a, b) = ((lo + x0).ln(), (hi + x0).ln());
        let h = (b - a) / QUAD_INTERVALS as f64;
        let mut q = Quadrature {
            t: Vec::with_capacity(QUAD_INTERVALS + 1),
            x: Vec::with_capacity(QUAD_INTERVALS + 1),
            w: Vec::with_capacity(QUAD_INTERVALS + 1),
        };
        for i in 0..=QUAD_INTERVALS {
            let t = a + h * i as f64;
            let coef = if i == 0 || i == QUAD_INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            q.t.push(t);
            q.x.push(t.exp() - x0);
            q.w.push(coef * h / 3.0);
        }
        q
    }

    /// ln Z and the model moments of (ln(x+x0), x) and their covariance.
    fn moments(&self, beta: f64, lambda: f64) -> Moments {
        // integrand in t: exp((1-beta) t - lambda x)
        let logs: Vec<f64> = self
            .t
            .iter()
            .zip(&self.x)
            .map(|(t, x)| (1.0 - beta) * t - lambda * x)
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let (mut e1, mut e2, mut e11, mut e12, mut e22) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..logs.len() {
            let p = self.w[i] * (logs[i] - m).exp();
            let (u, v) = (self.t[i], self.x[i]);
            z += p;
            e1 += p * u;
            e2 += p * v;
            e11 += p * u * u;
            e12 += p * u * v;
            e22 += p * v * v;
        }
        let (e1, e2) = (e1 / z, e2 / z);
        Moments {
            log_z: m + z.ln(),
            mean_log: e1,
            mean_x: e2,
            var_log: e11 / z - e1 * e1,
            cov: e12 / z - e1 * e2,
            var_x: e22 / z - e2 * e2,
        }
    }
}

struct Moments {
    log_z: f64,
    mean_log: f64,
    mean_x: f64,
    var_log: f64,
    cov: f64,
    var_x: f64,
}

/// Maximum-likelihood fit of `beta` and `kappa` for a fixed offset `x0`.
///
/// Zero samples are dropped (and counted). Fewer than
/// [`MIN_FIT_SAMPLES`] positive samples is an insufficient-data error; a
/// sample with no spread is a fit failure.
pub fn fit_truncated_powerlaw(samples: &[f64], x0: f64) -> Result<TruncatedPowerLawFit> {
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(Error::FitFailure(format!("offset must be non-negative, got {x0}")));
    }
    let positive: Vec<f64> = samples.iter().cloned().filter(|v| *v > 0.0).collect();
    let dropped_zeros = samples.len() - positive.len();
    if positive.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("non-finite sample".into()));
    }
    let n = positive.len();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{n} positive samples, need at least {MIN_FIT_SAMPLES}"
        )));
    }
    let lo = positive.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = positive.iter().cloned().fold(0.0, f64::max);
    if max <= lo * (1.0 + 1e-12) {
        return Err(Error::FitFailure("all samples are equal".into()));
    }
    let hi = max * 10.0;
    let nf = n as f64;
    let s_log = positive.iter().map(|v| (v + x0).ln()).sum::<f64>() / nf;
    let s_lin = positive.iter().sum::<f64>() / nf;
    let quad = Quadrature::new(lo, hi, x0);
    // lambda = 1/kappa; keep kappa below 1e4 times the support width
    let lambda_min = 1.0 / (1e4 * hi);

    // per-sample mean log-likelihood
    let ll = |beta: f64, lambda: f64| -> (f64, Moments) {
        let m = quad.moments(beta, lambda);
        (-beta * s_log - lambda * s_lin - m.log_z, m)
    };
    let clamp = |b: f64, l: f64| (b.clamp(BETA_MIN, BETA_MAX), l.max(lambda_min));

    let (mut beta, mut lambda) = clamp(1.0, 1.0 / s_lin);
    let (mut cur, mut m) = ll(beta, lambda);
    for _ in 0..200 {
        // gradient and negative Hessian of the mean log-likelihood
        let g = [m.mean_log - s_log, m.mean_x - s_lin];
        let h = [[m.var_log, m.cov], [m.cov, m.var_x]];
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let mut dir = if det > 0.0 && det.is_finite() {
            [
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ]
        } else {
            [g[0], g[1] * lambda * lambda]
        };
        // drop components pushing into an active bound
        if beta <= BETA_MIN && dir[0] < 0.0 {
            dir[0] = 0.0;
            dir[1] = if h[1][1] > 0.0 { g[1] / h[1][1] } else { g[1] };
        }
        if lambda <= lambda_min && dir[1] < 0.0 {
            dir[1] = 0.0;
            dir[0] = if h[0][0] > 0.0 { g[0] / h[0][0] } else { g[0] };
        }
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let (b, l) = clamp(beta + step * dir[0], lambda + step * dir[1]);
            let (val, mm) = ll(b, l);
            if val > cur {
                let moved = ((b - beta) / beta.max(1e-3)).abs() + ((l - lambda) / lambda).abs();
                beta = b;
                lambda = l;
                cur = val;
                m = mm;
                improved = moved > 1e-12;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(beta.is_finite() && lambda.is_finite() && cur.is_finite()) {
        return Err(Error::FitFailure("likelihood maximization diverged".into()));
    }
    Ok(TruncatedPowerLawFit {
        beta,
        kappa: 1.0 / lambda,
        x0,
        loglik: cur * nf,
        n,
        dropped_zeros,
    })
}

/// A truncated power law on `[lo, hi]` with an inverse-CDF sampler over a
/// 4096-point log-spaced table.
#[derive(Clone, Debug)]
pub struct TruncatedPowerLaw {
    pub beta: f64,
    pub kappa: f64,
    pub x0: f64,
    pub lo: f64,
    pub hi: f64,
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl TruncatedPowerLaw {
    pub fn new(beta: f64, kappa: f64, x0: f64, lo: f64, hi: f64) -> Result<Self> {
        let ok = beta.is_finite()
            && kappa > 0.0
            && x0 >= 0.0
            && lo > 0.0
            && hi > lo
            && hi.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!(
                "truncated power law needs finite beta, kappa > 0, 0 < lo < hi (got beta={beta}, kappa={kappa}, lo={lo}, hi={hi})"
            )));
        }
        let step = (hi / lo).ln() / (TABLE_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..TABLE_POINTS)
            .map(|i| if i == TABLE_POINTS - 1 { hi } else { lo * (step * i as f64).exp() })
            .collect();
        let logd = |x: f64| -beta * (x + x0).ln() - x / kappa;
        let m = logd(lo).max(logd(hi));
        let dens: Vec<f64> = xs.iter().map(|&x| (logd(x) - m).exp()).collect();
        let mut cdf = vec![0.0; TABLE_POINTS];
        for i in 1..TABLE_POINTS {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[TABLE_POINTS - 1];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParams("degenerate truncated power law".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(TruncatedPowerLaw { beta, kappa, x0, lo, hi, xs, cdf })
    }

    /// Inverse CDF, linear between table nodes.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let j = self.cdf.partition_point(|c| *c < u).clamp(1, TABLE_POINTS - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.xs[j - 1] + frac * (self.xs[j] - self.xs[j - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }

    /// Mean of the tabulated distribution.
    pub fn mean(&self) -> f64 {
        (1..TABLE_POINTS)
            .map(|i| (self.cdf[i] - self.cdf[i - 1]) * 0.5 * (self.xs[i] + self.xs[i - 1]))
            .sum()
    }
}
