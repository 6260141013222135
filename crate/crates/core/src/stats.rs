//! Supporting statistics: least-squares slopes, Kolmogorov-Smirnov
//! statistics and critical values, binomial standard errors, and adaptive
//! quadrature.

use thiserror::Error;

/// Ordinary least-squares slope of y against x.
///
/// Returns `None` when fewer than two points are given or x is degenerate.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        sxx += dx * dx;
        sxy += dx * (ys[i] - my);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Slopes over all trailing windows of length >= `min_window`.
///
/// `full` is the slope over the whole range, `min`/`max` the extremes over
/// the windows; used as finite-scale proxies for liminf/limsup exponents.
#[derive(Clone, Copy, Debug)]
pub struct SuffixSlopes {
    pub full: f64,
    pub min: f64,
    pub max: f64,
}

pub fn suffix_slopes(xs: &[f64], ys: &[f64], min_window: usize) -> Option<SuffixSlopes> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < min_window || min_window < 2 {
        return None;
    }
    let full = ols_slope(xs, ys)?;
    let mut lo = full;
    let mut hi = full;
    for start in 1..=(n - min_window) {
        if let Some(s) = ols_slope(&xs[start..], &ys[start..]) {
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    Some(SuffixSlopes {
        full,
        min: lo,
        max: hi,
    })
}

/// Binomial standard error sqrt(p(1-p)/n) of an empirical fraction.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic against the uniform law on [0, 1).
pub fn ks_statistic_uniform(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "KS statistic needs at least one sample");
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov statistic (merge walk over both samples).
pub fn ks_statistic_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let t = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic one-sample KS critical value at significance `alpha`:
/// sqrt(ln(2/alpha) / (2n)).
pub fn ks_critical_one_sample(alpha: f64, n: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0 && n > 0);
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
pub fn ks_critical_two_sample(alpha: f64, n: usize, m: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0 && n > 0 && m > 0);
    let c = ((2.0 / alpha).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature failed to reach relative tolerance {rel_tol} (depth limit)")]
    DepthExceeded { rel_tol: f64 },
    #[error("quadrature integrand not finite at {at}")]
    NonFinite { at: f64 },
}

/// Adaptive Simpson integration of `f` over [a, b] to relative tolerance
/// `rel_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, QuadratureError> {
    assert!(b > a && rel_tol > 0.0);
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    for (x, v) in [(a, fa), (m, fm), (b, fb)] {
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite { at: x });
        }
    }
    let whole = simpson(a, b, fa, fm, fb);
    let scale = whole.abs().max(1e-300);
    recurse(&f, a, b, fa, fm, fb, whole, rel_tol * scale, 60)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() {
        return Err(QuadratureError::NonFinite { at: lm });
    }
    if !frm.is_finite() {
        return Err(QuadratureError::NonFinite { at: rm });
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureError::DepthExceeded { rel_tol: tol });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slope_of_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((ols_slope(&xs, &ys).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn suffix_slopes_bracket_full_slope() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let s = suffix_slopes(&xs, &ys, 3).unwrap();
        assert!(s.min <= s.full && s.full <= s.max);
        assert!(s.max > s.min);
    }

    #[test]
    fn ks_uniform_on_uniform_sample_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic_uniform(&xs);
        assert!(d < ks_critical_one_sample(1e-3, xs.len()), "d = {d}");
    }

    #[test]
    fn ks_uniform_detects_shifted_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..10_000).map(|_| 0.5 * rng.random::<f64>()).collect();
        assert!(ks_statistic_uniform(&xs) > 0.4);
    }

    #[test]
    fn two_sample_ks_same_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic_two_sample(&a, &b);
        assert!(d < ks_critical_two_sample(1e-3, a.len(), b.len()), "d = {d}");
    }

    #[test]
    fn simpson_integrates_reciprocal() {
        let v = adaptive_simpson(|x| 1.0 / x, 2.0, 3.0, 1e-8).unwrap();
        assert!((v - 1.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn simpson_rejects_singular_integrand() {
        let e = adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-8).unwrap_err();
        assert!(matches!(e, QuadratureError::NonFinite { .. }));
    }
}
