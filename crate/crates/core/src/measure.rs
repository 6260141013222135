//! Stationary phase-measure estimation and the estimators built on it:
//! ball masses, pointwise (local) dimension, annulus regularity, and a
//! one-step stationarity self-check.

use rayon::prelude::*;
use thiserror::Error;

use crate::seed::sample_rng;
use crate::stats;
use crate::systems::System;
use crate::torus::{Annulus, Ball, CirclePoint};

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("ball of radius {radius} at {center} has zero empirical mass")]
    ZeroMass { center: f64, radius: f64 },
    #[error("need at least {needed} radii, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// Where an empirical measure came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub system: String,
    pub burn_in: u64,
    pub seed: u64,
}

/// A stationary phase measure: exact Lebesgue where the system guarantees
/// it, otherwise a sorted empirical sample supporting binary-search arc
/// queries.
#[derive(Clone, Debug)]
pub enum MeasureEstimate {
    AnalyticLebesgue,
    Empirical {
        /// Sorted ascending in [0, 1).
        samples: Vec<f64>,
        provenance: Provenance,
    },
}

/// A ball (or annulus) mass with its sampling error. `count` is `None` for
/// analytic values; a zero count flags a ball below the sample resolution.
#[derive(Clone, Copy, Debug)]
pub struct MassEstimate {
    pub value: f64,
    pub stderr: f64,
    pub count: Option<u64>,
}

impl MeasureEstimate {
    pub fn from_samples(mut samples: Vec<f64>, provenance: Provenance) -> Self {
        assert!(!samples.is_empty(), "empirical measure needs samples");
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        MeasureEstimate::Empirical {
            samples,
            provenance,
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self, MeasureEstimate::Empirical { .. })
    }

    pub fn len(&self) -> usize {
        match self {
            MeasureEstimate::AnalyticLebesgue => 0,
            MeasureEstimate::Empirical { samples, .. } => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of samples in the open arc (lo, hi) with 0 <= lo < hi <= 1.
    fn count_open_interval(samples: &[f64], lo: f64, hi: f64) -> u64 {
        let a = samples.partition_point(|v| *v <= lo);
        let b = samples.partition_point(|v| *v < hi);
        (b - a) as u64
    }

    fn count_ball(samples: &[f64], ball: &Ball) -> u64 {
        let c = ball.center().value();
        let r = ball.radius();
        let lo = c - r;
        let hi = c + r;
        if lo < 0.0 {
            Self::count_open_interval(samples, CirclePoint::new(lo).value(), 1.0)
                + Self::count_open_interval(samples, -1.0, hi)
        } else if hi > 1.0 {
            Self::count_open_interval(samples, lo, 1.0)
                + Self::count_open_interval(samples, -1.0, hi - 1.0)
        } else {
            Self::count_open_interval(samples, lo, hi)
        }
    }

    /// Mass of an open ball: 2r analytically, or the sample fraction with
    /// its binomial standard error.
    pub fn ball_mass(&self, ball: &Ball) -> MassEstimate {
        match self {
            MeasureEstimate::AnalyticLebesgue => MassEstimate {
                value: 2.0 * ball.radius(),
                stderr: 0.0,
                count: None,
            },
            MeasureEstimate::Empirical { samples, .. } => {
                let count = Self::count_ball(samples, ball);
                let n = samples.len();
                let value = count as f64 / n as f64;
                MassEstimate {
                    value,
                    stderr: stats::binomial_se(value, n),
                    count: Some(count),
                }
            }
        }
    }

    /// Mass of an annulus (distance in [inner, outer)).
    pub fn annulus_mass(&self, annulus: &Annulus) -> MassEstimate {
        match self {
            MeasureEstimate::AnalyticLebesgue => MassEstimate {
                value: annulus.lebesgue_mass(),
                stderr: 0.0,
                count: None,
            },
            MeasureEstimate::Empirical { samples, .. } => {
                let outer = Self::count_ball(
                    samples,
                    &Ball::new(annulus.center(), annulus.outer()),
                );
                let inner = if annulus.inner() > 0.0 {
                    Self::count_ball(samples, &Ball::new(annulus.center(), annulus.inner()))
                } else {
                    0
                };
                let count = outer - inner;
                let n = samples.len();
                let value = count as f64 / n as f64;
                MassEstimate {
                    value,
                    stderr: stats::binomial_se(value, n),
                    count: Some(count),
                }
            }
        }
    }

    /// The empirical samples lying inside the ball (empty for analytic).
    pub fn samples_in_ball(&self, ball: &Ball) -> Vec<f64> {
        match self {
            MeasureEstimate::AnalyticLebesgue => Vec::new(),
            MeasureEstimate::Empirical { samples, .. } => samples
                .iter()
                .copied()
                .filter(|v| ball.contains(CirclePoint::new(*v)))
                .collect(),
        }
    }
}

/// Draws `count` phase points, each the endpoint of an independent orbit
/// advanced `burn_in` steps from an invariant-law start. Sample `i` uses the
/// stream (seed, tag, i); the output order is by sample index.
pub fn sample_stationary(
    system: System,
    burn_in: u64,
    count: usize,
    seed: u64,
    tag: &str,
) -> Vec<f64> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut orbit = system.spawn(sample_rng(seed, tag, i as u64));
            orbit.advance(burn_in);
            orbit.position().value()
        })
        .collect()
}

/// Stationary measure of a system: analytic Lebesgue when the system
/// guarantees it, otherwise an empirical sample of size `count`.
pub fn estimate_stationary(
    system: System,
    burn_in: u64,
    count: usize,
    seed: u64,
) -> MeasureEstimate {
    if system.lebesgue_stationary() {
        return MeasureEstimate::AnalyticLebesgue;
    }
    let samples = sample_stationary(system, burn_in, count, seed, "stationary");
    MeasureEstimate::from_samples(
        samples,
        Provenance {
            system: system.describe(),
            burn_in,
            seed,
        },
    )
}

/// Local scaling of ball masses around a point.
#[derive(Clone, Debug)]
pub struct DimensionEstimate {
    pub point: f64,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// Least-squares slope of log mass against log r over all radii.
    pub slope: f64,
    /// Extremes over trailing windows, as in the recurrence-rate estimate.
    pub lower_dim: f64,
    pub upper_dim: f64,
}

/// Regresses log ball mass on log radius. Radii must be strictly
/// decreasing; empirical masses of zero abort with `ZeroMass`.
pub fn pointwise_dimension(
    est: &MeasureEstimate,
    point: CirclePoint,
    radii: &[f64],
) -> Result<DimensionEstimate, MeasureError> {
    if radii.len() < 3 {
        return Err(MeasureError::InsufficientData {
            needed: 3,
            got: radii.len(),
        });
    }
    assert!(
        radii.windows(2).all(|w| w[0] > w[1]) && radii.iter().all(|r| *r > 0.0 && *r < 0.5),
        "radii must be strictly decreasing within (0, 1/2)"
    );
    let mut xs = Vec::with_capacity(radii.len());
    let mut masses = Vec::with_capacity(radii.len());
    for &r in radii {
        let m = est.ball_mass(&Ball::new(point, r));
        if m.value == 0.0 {
            return Err(MeasureError::ZeroMass {
                center: point.value(),
                radius: r,
            });
        }
        xs.push(r.ln());
        masses.push(m.value);
    }
    let ys: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let slopes = stats::suffix_slopes(&xs, &ys, 3).expect("length checked above");
    Ok(DimensionEstimate {
        point: point.value(),
        radii: radii.to_vec(),
        masses,
        slope: slopes.full,
        lower_dim: slopes.min,
        upper_dim: slopes.max,
    })
}

/// One grid cell of the annulus-regularity check.
#[derive(Clone, Copy, Debug)]
pub struct AnnulusCell {
    pub r: f64,
    pub rho: f64,
    pub mass: f64,
    pub bound: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Verdict of the annulus-regularity check: every cell must satisfy
/// mass(annulus(y, r, r - rho)) <= r^(-b) * rho^a, with a 3-sigma allowance
/// for empirical masses.
#[derive(Clone, Debug)]
pub struct AnnulusReport {
    pub point: f64,
    pub a: f64,
    pub b: f64,
    pub cells: Vec<AnnulusCell>,
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Checks the annulus bound on the cartesian grid of radii and widths,
/// skipping cells with rho >= r.
pub fn annulus_check(
    est: &MeasureEstimate,
    point: CirclePoint,
    a: f64,
    b: f64,
    r_grid: &[f64],
    rho_grid: &[f64],
) -> AnnulusReport {
    assert!(a > 0.0 && b >= 0.0, "need a > 0 and b >= 0");
    let mut cells = Vec::new();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for &r in r_grid {
        for &rho in rho_grid {
            if rho <= 0.0 || rho >= r {
                continue;
            }
            let annulus = Annulus::new(point, r, r - rho);
            let m = est.annulus_mass(&annulus);
            let bound = r.powf(-b) * rho.powf(a);
            let ratio = m.value / bound;
            let cell_pass = m.value <= bound + 3.0 * m.stderr;
            worst = worst.max(ratio);
            pass &= cell_pass;
            cells.push(AnnulusCell {
                r,
                rho,
                mass: m.value,
                bound,
                ratio,
                stderr: m.stderr,
                pass: cell_pass,
            });
        }
    }
    assert!(!cells.is_empty(), "annulus grid produced no valid cells");
    AnnulusReport {
        point: point.value(),
        a,
        b,
        cells,
        worst_ratio: worst,
        pass,
    }
}

/// Result of pushing an empirical sample through one more random step and
/// comparing against the original with a two-sample KS test.
#[derive(Clone, Copy, Debug)]
pub struct StationarityReport {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
    pub n: usize,
}

/// One-step stationarity self-check for empirical measures. Sample `i` of
/// the pushforward uses the stream (seed, tag, i).
pub fn stationarity_check(
    samples: &[f64],
    system: System,
    seed: u64,
    significance: f64,
) -> StationarityReport {
    use crate::systems::Phase;
    assert!(!samples.is_empty());
    let pushed: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let rng = sample_rng(seed, "stationarity-push", i as u64);
            let mut orbit = system.spawn_at(Phase::Float(x), rng);
            orbit.step();
            orbit.position().value()
        })
        .collect();
    let statistic = stats::ks_statistic_two_sample(samples, &pushed);
    let critical = stats::ks_critical_two_sample(significance, samples.len(), pushed.len());
    StationarityReport {
        statistic,
        critical,
        pass: statistic < critical,
        n: samples.len(),
    }
}
