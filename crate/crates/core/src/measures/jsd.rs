//! Jensen-Shannon divergence (base 2) over shared histogram binnings.

use std::collections::BTreeMap;

/// JSD of two non-negative weight vectors of equal length, each normalized
/// to sum 1. Returns `None` if either has no mass.
pub fn jsd(p: &[f64], q: &[f64]) -> Option<f64> {
    assert_eq!(p.len(), q.len(), "histograms must share a binning");
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if !(sp > 0.0 && sq > 0.0) {
        return None;
    }
    let kl_half = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        total += 0.5 * kl_half(a, m) + 0.5 * kl_half(b, m);
    }
    Some(total.clamp(0.0, 1.0))
}

fn range(a: &[f64], b: &[f64], positive_only: bool) -> Option<(f64, f64)> {
    let vals = a.iter().chain(b).filter(|v| !positive_only || **v > 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Histogram with `bins` log-spaced bins over the shared positive range,
/// plus one leading bin for exact zeros.
fn log_histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins + 1];
    let span = (hi / lo).ln();
    for &x in xs {
        let idx = if x <= 0.0 {
            0
        } else if span <= 0.0 {
            1
        } else {
            let f = (x / lo).ln() / span;
            1 + ((f * bins as f64).floor() as usize).min(bins - 1)
        };
        h[idx] += 1.0;
    }
    h
}

fn linear_histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let span = hi - lo;
    for &x in xs {
        let idx = if span <= 0.0 {
            0
        } else {
            (((x - lo) / span * bins as f64).floor() as usize).min(bins - 1)
        };
        h[idx] += 1.0;
    }
    h
}

/// Bin edges of the log binning used by [`jsd_log_binned`].
pub fn log_bin_edges(a: &[f64], b: &[f64], bins: usize) -> Vec<f64> {
    match range(a, b, true) {
        Some((lo, hi)) if hi > lo => (0..=bins)
            .map(|i| lo * ((hi / lo).ln() * i as f64 / bins as f64).exp())
            .collect(),
        Some((lo, hi)) => vec![lo, hi],
        None => vec![],
    }
}

/// JSD of two samples of non-negative magnitudes on shared log bins.
pub fn jsd_log_binned(a: &[f64], b: &[f64], bins: usize) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let (lo, hi) = range(a, b, true).unwrap_or((1.0, 1.0));
    jsd(&log_histogram(a, lo, hi, bins), &log_histogram(b, lo, hi, bins))
}

/// JSD of two real-valued samples on shared linear bins.
pub fn jsd_linear_binned(a: &[f64], b: &[f64], bins: usize) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let (lo, hi) = range(a, b, false)?;
    jsd(&linear_histogram(a, lo, hi, bins), &linear_histogram(b, lo, hi, bins))
}

/// Normalized histogram of `xs` on the same bins [`jsd_log_binned`] uses.
pub fn log_binned_probs(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let h = log_histogram(xs, lo, hi, bins);
    let s: f64 = h.iter().sum();
    h.into_iter().map(|c| if s > 0.0 { c / s } else { 0.0 }).collect()
}

pub fn linear_binned_probs(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let h = linear_histogram(xs, lo, hi, bins);
    let s: f64 = h.iter().sum();
    h.into_iter().map(|c| if s > 0.0 { c / s } else { 0.0 }).collect()
}

/// JSD of two keyed distributions over the union of their keys.
pub fn jsd_keyed<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> Option<f64> {
    let keys: std::collections::BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    let p: Vec<f64> = keys.iter().map(|k| a.get(*k).copied().unwrap_or(0.0)).collect();
    let q: Vec<f64> = keys.iter().map(|k| b.get(*k).copied().unwrap_or(0.0)).collect();
    jsd(&p, &q)
}
