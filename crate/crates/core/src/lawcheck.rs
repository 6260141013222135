//! Survival curves of rescaled hitting times, their Kolmogorov–Smirnov
//! distance to the exponential law, the geometric-law bound, the
//! conditional-vs-unconditional mixing gap (delta), and decay-of-correlation
//! estimation with named observables.

use rayon::prelude::*;
use thiserror::Error;

use crate::measure::MeasureEstimate;
use crate::recurrence::{hitting_batch, HittingSample, StartMode};
use crate::seed::sample_rng;
use crate::stats;
use crate::systems::System;
use crate::torus::Ball;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("samples carry different rescale factors")]
    MixedRescale,
    #[error("conditional acceptance rate {acceptance:e} below 1e-6")]
    RejectionStall { acceptance: f64 },
}

/// Survival-curve evaluation grid: t = 0 plus `count` geometric points
/// from `lo` to `hi` inclusive.
pub fn geometric_t_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2, "need 0 < lo < hi, count >= 2");
    let mut grid = Vec::with_capacity(count + 1);
    grid.push(0.0);
    let ratio = (hi / lo).powf(1.0 / (count as f64 - 1.0));
    let mut t = lo;
    for _ in 0..count {
        grid.push(t);
        t *= ratio;
    }
    // close the grid exactly at the intended endpoint
    let last = grid.last_mut().unwrap();
    *last = hi;
    grid
}

/// The default grid: 60 geometric points from 0.05 to 6, covering exp(-t)
/// from 1 down to about 0.0025.
pub fn default_t_grid() -> Vec<f64> {
    geometric_t_grid(0.05, 6.0, 60)
}

/// Empirical survival function of a batch of rescaled hitting times.
/// Censored samples count as surviving up to (but not at) bound * rescale
/// and are excluded beyond.
#[derive(Clone, Debug)]
pub struct SurvivalCurve {
    pub t_grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub n: usize,
    pub censor_count: usize,
    pub rescale: f64,
    rescaled_hits: Vec<f64>,
    censor_times: Vec<f64>,
    hit_steps: Vec<u64>,
    censor_bounds: Vec<u64>,
}

fn count_gt(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|v| *v <= t)
}

fn count_ge(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|v| *v < t)
}

/// Builds the curve from a batch sharing one rescale factor and evaluates
/// it on `t_grid` (increasing, nonnegative).
pub fn survival_curve(
    samples: &[HittingSample],
    t_grid: &[f64],
) -> Result<SurvivalCurve, LawError> {
    assert!(!samples.is_empty(), "survival curve needs samples");
    assert!(
        t_grid.windows(2).all(|w| w[0] < w[1]) && t_grid.iter().all(|t| *t >= 0.0),
        "t_grid must be strictly increasing and nonnegative"
    );
    let rescale = samples[0].rescale;
    assert!(rescale > 0.0, "rescale must be positive");
    if samples.iter().any(|s| s.rescale != rescale) {
        return Err(LawError::MixedRescale);
    }
    let mut hit_steps: Vec<u64> = Vec::new();
    let mut censor_bounds: Vec<u64> = Vec::new();
    for s in samples {
        match s.tau.hit_value() {
            Some(k) => hit_steps.push(k),
            None => censor_bounds.push(s.tau.bound()),
        }
    }
    hit_steps.sort_unstable();
    censor_bounds.sort_unstable();
    let rescaled_hits: Vec<f64> = hit_steps.iter().map(|k| *k as f64 * rescale).collect();
    let censor_times: Vec<f64> = censor_bounds.iter().map(|k| *k as f64 * rescale).collect();
    let mut curve = SurvivalCurve {
        t_grid: t_grid.to_vec(),
        survival: Vec::new(),
        n: samples.len(),
        censor_count: censor_bounds.len(),
        rescale,
        rescaled_hits,
        censor_times,
        hit_steps,
        censor_bounds,
    };
    curve.survival = t_grid.iter().map(|t| curve.survival_at(*t)).collect();
    Ok(curve)
}

impl SurvivalCurve {
    /// Fraction of the batch whose rescaled time exceeds t.
    pub fn survival_at(&self, t: f64) -> f64 {
        (count_gt(&self.rescaled_hits, t) + count_gt(&self.censor_times, t)) as f64
            / self.n as f64
    }

    /// Left limit of the survival function at t.
    fn left_survival_at(&self, t: f64) -> f64 {
        (count_ge(&self.rescaled_hits, t) + count_ge(&self.censor_times, t)) as f64
            / self.n as f64
    }

    /// Raw (unrescaled) survival at integer step k: fraction with tau > k.
    /// Valid only while every censoring bound is at least k.
    pub fn step_survival(&self, k: u64) -> f64 {
        if let Some(&first) = self.censor_bounds.first() {
            assert!(
                k <= first,
                "step survival at {k} undefined past censoring bound {first}"
            );
        }
        let hits = self.hit_steps.len() - self.hit_steps.partition_point(|v| *v <= k);
        (hits + self.censor_count) as f64 / self.n as f64
    }

    /// Supremum over all t >= 0 of |survival(t) - exp(-t)|, computed exactly
    /// by evaluating both one-sided limits at the grid points and every jump
    /// of the empirical curve. Refining the grid further cannot change the
    /// value.
    pub fn ks_exponential(&self) -> f64 {
        let mut best = 0.0f64;
        let points = self
            .t_grid
            .iter()
            .chain(self.rescaled_hits.iter())
            .chain(self.censor_times.iter());
        for &t in points {
            let e = (-t).exp();
            best = best
                .max((self.survival_at(t) - e).abs())
                .max((self.left_survival_at(t) - e).abs());
        }
        best
    }
}

/// One row of the geometric-law comparison at step n.
#[derive(Clone, Copy, Debug)]
pub struct GeometricGapEntry {
    pub n: u64,
    pub survival: f64,
    pub geometric: f64,
    pub gap: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug)]
pub struct GeometricGapReport {
    pub entries: Vec<GeometricGapEntry>,
    pub max_gap: f64,
}

/// Compares raw step survival against the geometric reference
/// (1 - ball_mass)^n on the grid; the max gap is meant to be read against
/// a delta estimate plus statistical margin.
pub fn geometric_law_gap(
    curve: &SurvivalCurve,
    ball_mass: f64,
    n_grid: &[u64],
) -> GeometricGapReport {
    assert!(
        ball_mass > 0.0 && ball_mass < 1.0,
        "ball mass must be in (0,1)"
    );
    let mut entries = Vec::with_capacity(n_grid.len());
    let mut max_gap = 0.0f64;
    for &n in n_grid {
        let survival = curve.step_survival(n);
        let geometric = (1.0 - ball_mass).powf(n as f64);
        let gap = (survival - geometric).abs();
        max_gap = max_gap.max(gap);
        entries.push(GeometricGapEntry {
            n,
            survival,
            geometric,
            gap,
            stderr: stats::binomial_se(survival, curve.n),
        });
    }
    GeometricGapReport { entries, max_gap }
}

/// Largest absolute difference between two equal-length arrays, with the
/// index attaining it.
pub fn sup_abs_gap(a: &[f64], b: &[f64]) -> (f64, usize) {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let mut best = (0.0f64, 0usize);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let gap = (x - y).abs();
        if gap > best.0 {
            best = (gap, i);
        }
    }
    best
}

/// Unconditional vs conditional survival of the hitting time, truncated at
/// k_max, and their sup gap.
#[derive(Clone, Debug)]
pub struct DeltaEstimate {
    pub k_grid: Vec<u64>,
    pub surv_uncond: Vec<f64>,
    pub surv_cond: Vec<f64>,
    pub se_uncond: Vec<f64>,
    pub se_cond: Vec<f64>,
    pub delta_hat: f64,
    pub argmax_k: u64,
    /// Combined standard error of the two survival values at the argmax.
    pub delta_se: f64,
    pub ball_mass: f64,
    pub n: usize,
}

fn step_survival_array(samples: &[HittingSample], k_max: u64) -> Vec<f64> {
    let mut hits_at = vec![0u64; k_max as usize + 1];
    for s in samples {
        if let Some(k) = s.tau.hit_value() {
            hits_at[k as usize] += 1;
        }
    }
    let n = samples.len() as f64;
    let mut alive = samples.len() as u64;
    let mut surv = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max as usize {
        alive -= hits_at[k];
        surv.push(alive as f64 / n);
    }
    surv
}

/// Estimates sup over k = 1..k_max of the gap between the hitting-time
/// survival from stationary starts and from starts conditioned inside the
/// target ball. Conditioning is exact arc sampling when the stationary law
/// is Lebesgue and a resample of the empirical points inside the ball
/// otherwise; an acceptance fraction below 1e-6 aborts.
pub fn delta_estimator(
    system: System,
    target: Ball,
    measure: &MeasureEstimate,
    k_max: u64,
    samples: usize,
    burn_in: u64,
    seed: u64,
) -> Result<DeltaEstimate, LawError> {
    assert!(k_max >= 1, "k_max must be at least 1");
    assert!(samples >= 1, "need at least one sample");
    let ball_mass = measure.ball_mass(&target).value;
    let support: Vec<f64> = measure.samples_in_ball(&target);
    let cond_mode = if measure.is_empirical() {
        let acceptance = support.len() as f64 / measure.len() as f64;
        if acceptance < 1e-6 {
            return Err(LawError::RejectionStall { acceptance });
        }
        StartMode::FromSamples(&support)
    } else {
        StartMode::InArc
    };
    let uncond = hitting_batch(
        system,
        target,
        ball_mass,
        samples,
        k_max,
        seed,
        "delta-uncond",
        StartMode::Stationary { burn_in },
    );
    let cond = hitting_batch(
        system,
        target,
        ball_mass,
        samples,
        k_max,
        seed,
        "delta-cond",
        cond_mode,
    );
    let surv_uncond = step_survival_array(&uncond, k_max);
    let surv_cond = step_survival_array(&cond, k_max);
    let (delta_hat, argmax) = sup_abs_gap(&surv_uncond, &surv_cond);
    let se_uncond: Vec<f64> = surv_uncond
        .iter()
        .map(|s| stats::binomial_se(*s, samples))
        .collect();
    let se_cond: Vec<f64> = surv_cond
        .iter()
        .map(|s| stats::binomial_se(*s, samples))
        .collect();
    let delta_se = (se_uncond[argmax].powi(2) + se_cond[argmax].powi(2)).sqrt();
    Ok(DeltaEstimate {
        k_grid: (1..=k_max).collect(),
        surv_uncond,
        surv_cond,
        se_uncond,
        se_cond,
        delta_hat,
        argmax_k: argmax as u64 + 1,
        delta_se,
        ball_mass,
        n: samples,
    })
}

/// The built-in observable catalog. Norm accessors report the descriptors
/// used in correlation bounds; the arc indicator is bounded but not
/// Lipschitz, and the sawtooth is Lipschitz as a map of [0,1) though it
/// jumps across the 0/1 seam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    Cos2Pi,
    /// Half-open arc [lo, lo+len) taken mod 1.
    ArcIndicator { lo: f64, len: f64 },
    /// Centered ramp x - 1/2.
    Sawtooth,
    Constant(f64),
}

impl Observable {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Cos2Pi => (std::f64::consts::TAU * x).cos(),
            Observable::ArcIndicator { lo, len } => {
                if (x - lo).rem_euclid(1.0) < len {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Sawtooth => x - 0.5,
            Observable::Constant(c) => c,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Observable::Cos2Pi => "cos2pi".to_string(),
            Observable::ArcIndicator { lo, len } => format!("arc({lo},{len})"),
            Observable::Sawtooth => "sawtooth".to_string(),
            Observable::Constant(c) => format!("const({c})"),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            Observable::Cos2Pi => 1.0,
            Observable::ArcIndicator { .. } => 1.0,
            Observable::Sawtooth => 0.5,
            Observable::Constant(c) => c.abs(),
        }
    }

    /// None for observables with no finite Lipschitz constant.
    pub fn lipschitz_norm(&self) -> Option<f64> {
        match *self {
            Observable::Cos2Pi => Some(std::f64::consts::TAU),
            Observable::ArcIndicator { .. } => None,
            Observable::Sawtooth => Some(1.0),
            Observable::Constant(_) => Some(0.0),
        }
    }
}

/// Covariance estimates of psi at time zero against phi at each lag in
/// n_grid, with standard errors.
#[derive(Clone, Debug)]
pub struct CorrelationSeries {
    pub n_grid: Vec<u64>,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub psi: Observable,
    pub phi: Observable,
    pub n_samples: usize,
}

struct ChunkSums {
    a: f64,
    b: Vec<f64>,
    ab: Vec<f64>,
    ab2: Vec<f64>,
}

/// Processing granularity for parallel sums: accumulation happens in fixed
/// index-order chunks merged in chunk order, so totals are bit-identical
/// for every worker count.
const SUM_BATCH: usize = 4096;

/// Monte Carlo covariance of psi(x_0) with phi(x_n) for each lag n on one
/// shared orbit per sample; the product term is estimated from the same
/// sample. Sample i draws from the stream (seed, "correlations", i).
pub fn correlation_estimator(
    system: System,
    psi: Observable,
    phi: Observable,
    n_grid: &[u64],
    samples: usize,
    burn_in: u64,
    seed: u64,
) -> CorrelationSeries {
    assert!(samples >= 1, "need at least one sample");
    assert!(
        !n_grid.is_empty() && n_grid.windows(2).all(|w| w[0] < w[1]),
        "lag grid must be nonempty and strictly increasing"
    );
    let g = n_grid.len();
    let chunk_count = samples.div_ceil(SUM_BATCH);
    let partials: Vec<ChunkSums> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_BATCH;
            let hi = ((c + 1) * SUM_BATCH).min(samples);
            let mut sums = ChunkSums {
                a: 0.0,
                b: vec![0.0; g],
                ab: vec![0.0; g],
                ab2: vec![0.0; g],
            };
            for i in lo..hi {
                let rng = sample_rng(seed, "correlations", i as u64);
                let mut orbit = system.spawn(rng);
                orbit.advance(burn_in);
                let a = psi.eval(orbit.position().value());
                sums.a += a;
                let mut reached = 0u64;
                for (j, &n) in n_grid.iter().enumerate() {
                    orbit.advance(n - reached);
                    reached = n;
                    let b = phi.eval(orbit.position().value());
                    let p = a * b;
                    sums.b[j] += b;
                    sums.ab[j] += p;
                    sums.ab2[j] += p * p;
                }
            }
            sums
        })
        .collect();
    let mut total = ChunkSums {
        a: 0.0,
        b: vec![0.0; g],
        ab: vec![0.0; g],
        ab2: vec![0.0; g],
    };
    for part in partials {
        total.a += part.a;
        for j in 0..g {
            total.b[j] += part.b[j];
            total.ab[j] += part.ab[j];
            total.ab2[j] += part.ab2[j];
        }
    }
    let n = samples as f64;
    let mean_a = total.a / n;
    let mut estimates = Vec::with_capacity(g);
    let mut stderrs = Vec::with_capacity(g);
    for j in 0..g {
        let mean_ab = total.ab[j] / n;
        estimates.push(mean_ab - mean_a * (total.b[j] / n));
        let var = (total.ab2[j] / n - mean_ab * mean_ab).max(0.0);
        stderrs.push((var / n).sqrt());
    }
    CorrelationSeries {
        n_grid: n_grid.to_vec(),
        estimates,
        stderrs,
        psi,
        phi,
        n_samples: samples,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuperpolyVerdict {
    pub p: f64,
    pub pass: bool,
}

/// Diagnostic for faster-than-polynomial decay: for each exponent p, checks
/// that |estimate(n)| * n^p is nonincreasing over the tail (second half) of
/// the positive lags, allowing a two-standard-error rise between
/// neighbours.
pub fn superpoly_fit(series: &CorrelationSeries, p_list: &[f64]) -> Vec<SuperpolyVerdict> {
    let positive: Vec<(f64, f64, f64)> = series
        .n_grid
        .iter()
        .zip(series.estimates.iter().zip(&series.stderrs))
        .filter(|(n, _)| **n >= 1)
        .map(|(n, (est, se))| (*n as f64, est.abs(), *se))
        .collect();
    p_list
        .iter()
        .map(|&p| {
            let tail = &positive[positive.len() / 2..];
            let pass = tail.windows(2).all(|w| {
                let (n0, v0, s0) = w[0];
                let (n1, v1, s1) = w[1];
                let scaled0 = v0 * n0.powf(p);
                let scaled1 = v1 * n1.powf(p);
                let noise = 2.0 * ((s0 * n0.powf(p)).powi(2) + (s1 * n1.powf(p)).powi(2)).sqrt();
                scaled1 <= scaled0 + noise
            });
            SuperpolyVerdict { p, pass }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{MeasureEstimate, Provenance};
    use crate::recurrence::Tau;
    use crate::torus::CirclePoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic_batch(taus: &[Tau], rescale: f64) -> Vec<HittingSample> {
        let target = Ball::new(CirclePoint::new(0.5), 0.1);
        taus.iter()
            .enumerate()
            .map(|(i, tau)| HittingSample {
                tau: *tau,
                rescale,
                target,
                sample_id: i as u64,
                master_seed: 0,
                stream_index: i as u64,
            })
            .collect()
    }

    #[test]
    fn survival_counts_rescaled_exceedances() {
        let batch = synthetic_batch(
            &[Tau::Hit(1), Tau::Hit(2), Tau::Hit(3), Tau::Hit(4)],
            0.5,
        );
        let curve = survival_curve(&batch, &[0.0, 0.75, 2.5]).unwrap();
        assert_eq!(curve.survival, vec![1.0, 0.75, 0.0]);
        assert_eq!(curve.censor_count, 0);
    }

    #[test]
    fn fully_censored_curve_survives_the_whole_grid() {
        let batch = synthetic_batch(&[Tau::Censored(100); 8], 0.1);
        // cutoff * rescale = 10 exceeds every grid point
        let curve = survival_curve(&batch, &[0.0, 1.0, 5.0, 9.0]).unwrap();
        assert!(curve.survival.iter().all(|s| *s == 1.0));
        assert_eq!(curve.censor_count, 8);
    }

    #[test]
    fn mixed_rescale_is_rejected() {
        let mut batch = synthetic_batch(&[Tau::Hit(1), Tau::Hit(2)], 0.5);
        batch[1].rescale = 0.25;
        assert_eq!(
            survival_curve(&batch, &[0.0, 1.0]).unwrap_err(),
            LawError::MixedRescale
        );
    }

    #[test]
    fn ks_of_single_sample_is_left_limit_at_the_jump() {
        let batch = synthetic_batch(&[Tau::Hit(7)], 0.1);
        let curve = survival_curve(&batch, &default_t_grid()).unwrap();
        let expected = 1.0 - (-0.7f64).exp();
        assert!(
            (curve.ks_exponential() - expected).abs() < 1e-15,
            "ks {}",
            curve.ks_exponential()
        );
    }

    #[test]
    fn ks_of_degenerate_flat_curve_approaches_one() {
        let batch = synthetic_batch(&[Tau::Censored(50); 16], 0.1);
        let curve = survival_curve(&batch, &default_t_grid()).unwrap();
        let expected = 1.0 - (-5.0f64).exp();
        assert!((curve.ks_exponential() - expected).abs() < 1e-15);
    }

    #[test]
    fn ks_is_invariant_under_grid_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        for _ in 0..200 {
            let n = rng.random_range(1..200usize);
            let rescale = rng.random_range(0.001..0.5);
            let cutoff = rng.random_range(50..150u64);
            let taus: Vec<Tau> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.05 {
                        Tau::Censored(cutoff)
                    } else {
                        Tau::Hit(rng.random_range(1..=cutoff))
                    }
                })
                .collect();
            let batch = synthetic_batch(&taus, rescale);
            let base = default_t_grid();
            let curve = survival_curve(&batch, &base).unwrap();
            let mut refined = base.clone();
            for _ in 0..37 {
                refined.push(rng.random_range(0.0..8.0));
            }
            refined.sort_by(|a, b| a.partial_cmp(b).unwrap());
            refined.dedup();
            let curve_refined = survival_curve(&batch, &refined).unwrap();
            assert_eq!(curve.ks_exponential(), curve_refined.ks_exponential());
            // survival values stay monotone and inside [0,1] on every grid
            for w in curve_refined.survival.windows(2) {
                assert!(w[0] >= w[1]);
            }
            assert!(curve_refined
                .survival
                .iter()
                .all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn geometric_gap_is_zero_at_lag_zero() {
        let batch = synthetic_batch(&[Tau::Hit(1), Tau::Hit(2)], 0.1);
        let curve = survival_curve(&batch, &[0.0, 1.0]).unwrap();
        let report = geometric_law_gap(&curve, 0.2, &[0]);
        assert_eq!(report.entries[0].gap, 0.0);
        assert_eq!(report.entries[0].geometric, 1.0);
    }

    #[test]
    fn geometric_reference_matches_direct_power() {
        let batch = synthetic_batch(&[Tau::Hit(3), Tau::Hit(9)], 0.1);
        let curve = survival_curve(&batch, &[0.0, 1.0]).unwrap();
        let report = geometric_law_gap(&curve, 0.1, &[7]);
        assert!((report.entries[0].geometric - 0.4782969).abs() < 1e-12);
        assert!((report.entries[0].survival - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exactly_geometric_batch_has_zero_gap() {
        // survival halves each step: 8,4,2,1 hits at steps 1..4, one sample
        // censored at 5 keeps S(4) = 1/16
        let mut taus = Vec::new();
        taus.extend_from_slice(&[Tau::Hit(1); 8]);
        taus.extend_from_slice(&[Tau::Hit(2); 4]);
        taus.extend_from_slice(&[Tau::Hit(3); 2]);
        taus.push(Tau::Hit(4));
        taus.push(Tau::Censored(5));
        let batch = synthetic_batch(&taus, 0.5);
        let curve = survival_curve(&batch, &[0.0, 1.0]).unwrap();
        let report = geometric_law_gap(&curve, 0.5, &[0, 1, 2, 3, 4]);
        assert_eq!(report.max_gap, 0.0);
    }

    #[test]
    fn sup_gap_of_identical_arrays_is_zero() {
        let a = [0.9, 0.5, 0.25, 0.1];
        assert_eq!(sup_abs_gap(&a, &a), (0.0, 0));
    }

    #[test]
    fn delta_with_k_one_is_the_single_term_gap() {
        let system = System::markov_doubling_tripling();
        let target = Ball::new(CirclePoint::new(0.3), 0.05);
        let est = delta_estimator(
            system,
            target,
            &MeasureEstimate::AnalyticLebesgue,
            1,
            2000,
            16,
            11,
        )
        .unwrap();
        assert_eq!(est.k_grid, vec![1]);
        assert_eq!(
            est.delta_hat,
            (est.surv_uncond[0] - est.surv_cond[0]).abs()
        );
    }

    #[test]
    fn delta_halves_agree_within_three_sigma() {
        let system = System::markov_doubling_tripling();
        let target = Ball::new(CirclePoint::new(0.3), 0.05);
        let leb = MeasureEstimate::AnalyticLebesgue;
        let a = delta_estimator(system, target, &leb, 200, 20_000, 16, 101).unwrap();
        let b = delta_estimator(system, target, &leb, 200, 20_000, 16, 202).unwrap();
        let margin = 3.0 * (a.delta_se.powi(2) + b.delta_se.powi(2)).sqrt();
        assert!(
            (a.delta_hat - b.delta_hat).abs() <= margin,
            "{} vs {} exceeds {margin}",
            a.delta_hat,
            b.delta_hat
        );
    }

    #[test]
    fn delta_stalls_when_the_ball_misses_the_empirical_support() {
        let measure = MeasureEstimate::from_samples(
            vec![0.9; 1000],
            Provenance {
                system: "synthetic".into(),
                burn_in: 0,
                seed: 0,
            },
        );
        let err = delta_estimator(
            System::BetaUniform { lo: 2.0, hi: 3.0 },
            Ball::new(CirclePoint::new(0.1), 0.01),
            &measure,
            10,
            100,
            0,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, LawError::RejectionStall { .. }));
    }

    #[test]
    fn doubling_covariance_at_lag_zero_matches_the_integral() {
        let series = correlation_estimator(
            System::Affine { multiplier: 2 },
            Observable::Cos2Pi,
            Observable::ArcIndicator { lo: 0.0, len: 0.25 },
            &[0, 1, 2, 3, 4],
            100_000,
            0,
            77,
        );
        let oracle = 1.0 / std::f64::consts::TAU;
        assert!(
            (series.estimates[0] - oracle).abs() <= 3.0 * series.stderrs[0],
            "lag 0: {} vs {oracle} (se {})",
            series.estimates[0],
            series.stderrs[0]
        );
        for j in 1..series.n_grid.len() {
            assert!(
                series.estimates[j].abs() <= 3.0 * series.stderrs[j],
                "lag {}: {} (se {})",
                series.n_grid[j],
                series.estimates[j],
                series.stderrs[j]
            );
        }
    }

    #[test]
    fn constant_observable_has_exactly_zero_covariance() {
        for c in [1.0, 0.5] {
            let series = correlation_estimator(
                System::Affine { multiplier: 2 },
                Observable::Constant(c),
                Observable::Cos2Pi,
                &[0, 1, 2],
                5000,
                0,
                3,
            );
            assert!(series.estimates.iter().all(|e| *e == 0.0), "c = {c}");
        }
    }

    #[test]
    fn resampled_noise_has_no_covariance_at_positive_lags() {
        let series = correlation_estimator(
            System::UniformResample,
            Observable::Cos2Pi,
            Observable::ArcIndicator { lo: 0.0, len: 0.25 },
            &[1, 2, 3, 4, 5, 6, 7, 8],
            20_000,
            0,
            9,
        );
        for j in 0..series.n_grid.len() {
            assert!(
                series.estimates[j].abs() <= 3.0 * series.stderrs[j],
                "lag {}: {} (se {})",
                series.n_grid[j],
                series.estimates[j],
                series.stderrs[j]
            );
        }
    }

    fn synthetic_series(values: &[f64]) -> CorrelationSeries {
        CorrelationSeries {
            n_grid: (1..=values.len() as u64).collect(),
            estimates: values.to_vec(),
            stderrs: vec![0.0; values.len()],
            psi: Observable::Cos2Pi,
            phi: Observable::Cos2Pi,
            n_samples: 0,
        }
    }

    #[test]
    fn superpoly_passes_exact_zero_and_exponential_series() {
        let zero = synthetic_series(&[0.0; 12]);
        assert!(superpoly_fit(&zero, &[1.0, 2.0, 4.0])
            .iter()
            .all(|v| v.pass));
        let expo: Vec<f64> = (1..=12).map(|n| 0.5f64.powi(n)).collect();
        let series = synthetic_series(&expo);
        assert!(superpoly_fit(&series, &[1.0, 2.0, 4.0])
            .iter()
            .all(|v| v.pass));
    }

    #[test]
    fn superpoly_rejects_slow_polynomial_decay() {
        let slow: Vec<f64> = (1..=12).map(|n| 1.0 / n as f64).collect();
        let series = synthetic_series(&slow);
        let verdicts = superpoly_fit(&series, &[2.0]);
        assert!(!verdicts[0].pass);
    }
}
