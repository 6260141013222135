//! Hitting and return times along orbits, with censoring at a cutoff, plus
//! the recurrence-rate regression and the linear hitting-probability bound.

use rayon::prelude::*;
use thiserror::Error;

use crate::measure::MeasureEstimate;
use crate::seed::sample_rng;
use crate::stats;
use crate::systems::{OrbitStream, Phase, System};
use crate::torus::Ball;

#[derive(Debug, Error, PartialEq)]
pub enum RecurrenceError {
    #[error("need at least {needed} uncensored radii for a slope, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// A hitting time, or the cutoff at which the orbit was censored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tau {
    Hit(u64),
    Censored(u64),
}

impl Tau {
    pub fn is_censored(&self) -> bool {
        matches!(self, Tau::Censored(_))
    }

    pub fn hit_value(&self) -> Option<u64> {
        match *self {
            Tau::Hit(k) => Some(k),
            Tau::Censored(_) => None,
        }
    }

    /// Hit step, or the cutoff for censored entries.
    pub fn bound(&self) -> u64 {
        match *self {
            Tau::Hit(k) | Tau::Censored(k) => k,
        }
    }
}

/// One measured hitting (or return) time with its provenance.
#[derive(Clone, Copy, Debug)]
pub struct HittingSample {
    pub tau: Tau,
    /// Stationary mass of the target ball; rescaled time is tau * rescale.
    pub rescale: f64,
    pub target: Ball,
    pub sample_id: u64,
    pub master_seed: u64,
    pub stream_index: u64,
}

impl HittingSample {
    pub fn rescaled(&self) -> Option<f64> {
        self.tau.hit_value().map(|k| k as f64 * self.rescale)
    }
}

/// Default censoring cutoff: ceil(50 / ball mass), about fifty mean hitting
/// times, so censoring is a tail event for anything close to the
/// exponential law.
pub fn default_cutoff(ball_mass: f64) -> u64 {
    assert!(ball_mass > 0.0 && ball_mass <= 1.0);
    (50.0 / ball_mass).ceil() as u64
}

/// First entry time of the orbit into the target: the smallest k in
/// [1, cutoff] with the phase in the target after k steps. The orbit is
/// consumed up to min(tau, cutoff) steps.
pub fn hitting_time(orbit: &mut OrbitStream, target: &Ball, cutoff: u64) -> Tau {
    assert!(cutoff >= 1, "cutoff must be at least 1");
    for k in 1..=cutoff {
        orbit.step();
        if target.contains(orbit.position()) {
            return Tau::Hit(k);
        }
    }
    Tau::Censored(cutoff)
}

/// Return time of the orbit's current point into its own r-ball: hitting
/// time of the ball centered at the current phase.
pub fn return_time(orbit: &mut OrbitStream, radius: f64, cutoff: u64) -> Tau {
    let target = Ball::new(orbit.position(), radius);
    hitting_time(orbit, &target, cutoff)
}

/// How the start of each sample orbit is drawn.
#[derive(Clone, Copy, Debug)]
pub enum StartMode<'a> {
    /// Invariant start; `burn_in` extra steps are discarded first (use 0
    /// when the invariant law is sampled exactly).
    Stationary { burn_in: u64 },
    /// Phase uniform on the target ball's arc (Lebesgue conditioned on the
    /// ball).
    InArc,
    /// Phase drawn uniformly from a pre-filtered list of stationary samples
    /// inside the ball (empirical measure conditioned on the ball).
    FromSamples(&'a [f64]),
}

/// Measures `count` independent hitting times in parallel. Sample `i` draws
/// everything from the stream (master_seed, tag, i), so the result vector is
/// identical for any worker count.
pub fn hitting_batch(
    system: System,
    target: Ball,
    rescale: f64,
    count: usize,
    cutoff: u64,
    master_seed: u64,
    tag: &str,
    mode: StartMode<'_>,
) -> Vec<HittingSample> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let rng = sample_rng(master_seed, tag, i as u64);
            let mut orbit = match mode {
                StartMode::Stationary { burn_in } => {
                    let mut orbit = system.spawn(rng);
                    orbit.advance(burn_in);
                    orbit
                }
                StartMode::InArc => system.spawn_in_ball(&target, rng),
                StartMode::FromSamples(samples) => {
                    let mut rng = rng;
                    let pick = {
                        use rand::Rng;
                        rng.random_range(0..samples.len())
                    };
                    system.spawn_at(Phase::Float(samples[pick]), rng)
                }
            };
            let tau = hitting_time(&mut orbit, &target, cutoff);
            HittingSample {
                tau,
                rescale,
                target,
                sample_id: i as u64,
                master_seed,
                stream_index: i as u64,
            }
        })
        .collect()
}

/// Return-time scaling estimate across radii.
#[derive(Clone, Debug)]
pub struct RateEstimate {
    pub radii: Vec<f64>,
    pub taus: Vec<Tau>,
    /// Least-squares slope of log tau against -log r over uncensored radii.
    pub slope: f64,
    /// Extremes of the slope over trailing windows (length >= 3): finite-
    /// scale stand-ins for the liminf/limsup scaling exponents.
    pub lower_slope: f64,
    pub upper_slope: f64,
    pub censored: usize,
}

/// Measures the return time of `start` into balls of each radius and
/// regresses log tau on -log r. Radius `i` uses the stream
/// (master_seed, tag, i), so random systems get a fresh driving realization
/// per radius; the cutoff for radius r is `cutoff_rule(r)`.
pub fn recurrence_rate(
    system: System,
    start: Phase,
    radii: &[f64],
    master_seed: u64,
    tag: &str,
    cutoff_rule: impl Fn(f64) -> u64 + Sync,
) -> Result<RateEstimate, RecurrenceError> {
    assert!(radii.iter().all(|r| *r > 0.0 && *r < 0.5));
    let taus: Vec<Tau> = radii
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let rng = sample_rng(master_seed, tag, i as u64);
            let mut orbit = system.spawn_at(start, rng);
            return_time(&mut orbit, r, cutoff_rule(r))
        })
        .collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, tau) in taus.iter().enumerate() {
        if let Some(k) = tau.hit_value() {
            xs.push(-radii[i].ln());
            ys.push((k as f64).ln());
        }
    }
    let censored = taus.len() - xs.len();
    let slopes = stats::suffix_slopes(&xs, &ys, 3).ok_or(RecurrenceError::InsufficientData {
        needed: 3,
        got: xs.len(),
    })?;
    Ok(RateEstimate {
        radii: radii.to_vec(),
        taus,
        slope: slopes.full,
        lower_slope: slopes.min,
        upper_slope: slopes.max,
        censored,
    })
}

/// Default per-radius cutoff for recurrence-rate runs, based on the
/// Lebesgue ball mass.
pub fn default_cutoff_rule(r: f64) -> u64 {
    default_cutoff(2.0 * r)
}

/// Result of the linear hitting-probability bound check: the empirical
/// fraction of samples with tau <= n must not exceed n * ball_mass beyond
/// binomial noise.
#[derive(Clone, Copy, Debug)]
pub struct HittingBoundCheck {
    pub n: u64,
    pub fraction: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    pub vacuous: bool,
}

/// Checks P(tau <= n) <= n * ball_mass with a 3-sigma binomial margin. All
/// samples must have been measured with cutoff >= n, otherwise censored
/// entries would be ambiguous.
pub fn hitting_upper_bound_check(taus: &[Tau], ball_mass: f64, n: u64) -> HittingBoundCheck {
    assert!(ball_mass > 0.0 && ball_mass <= 1.0);
    assert!(
        taus.iter().all(|t| !t.is_censored() || t.bound() >= n),
        "censored samples below n = {n} are ambiguous"
    );
    let total = taus.len();
    if total == 0 {
        return HittingBoundCheck {
            n,
            fraction: 0.0,
            bound: n as f64 * ball_mass,
            margin: 0.0,
            pass: true,
            vacuous: true,
        };
    }
    let hits = taus
        .iter()
        .filter(|t| t.hit_value().is_some_and(|k| k <= n))
        .count();
    let fraction = hits as f64 / total as f64;
    let bound = n as f64 * ball_mass;
    let margin = 3.0 * stats::binomial_se(fraction, total);
    HittingBoundCheck {
        n,
        fraction,
        bound,
        margin,
        pass: fraction <= bound + margin,
        vacuous: false,
    }
}

/// Start-mode resolution for conditional sampling: arcs for systems whose
/// stationary law is Lebesgue, otherwise a draw from the empirical estimate
/// restricted to the ball. Exposed so callers can detect rejection stalls
/// before launching a batch.
pub fn conditional_support(
    system: System,
    target: &Ball,
    empirical: Option<&MeasureEstimate>,
) -> Option<Vec<f64>> {
    if system.lebesgue_stationary() {
        return None;
    }
    let est = empirical.expect("empirical measure required for non-Lebesgue systems");
    Some(est.samples_in_ball(target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactCirclePoint;
    use crate::seed::sample_rng;
    use crate::systems::DrivingState;
    use crate::torus::CirclePoint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn float_orbit(system: System, x: f64) -> OrbitStream {
        system.spawn_with(
            Phase::Float(x),
            DrivingState::None,
            ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn hitting_examples() {
        // doubling from 0.1: orbit 0.2, 0.4; ball (0.5, 0.12) caught at k = 2
        let mut orbit = float_orbit(System::Affine { multiplier: 2 }, 0.1);
        let target = Ball::new(CirclePoint::new(0.5), 0.12);
        assert_eq!(hitting_time(&mut orbit, &target, 100), Tau::Hit(2));
        assert_eq!(orbit.steps(), 2);

        // tripling from 0.1: orbit 0.3, 0.9; ball (0.9, 0.05) caught at k = 2
        let mut orbit = float_orbit(System::Affine { multiplier: 3 }, 0.1);
        let target = Ball::new(CirclePoint::new(0.9), 0.05);
        assert_eq!(hitting_time(&mut orbit, &target, 100), Tau::Hit(2));
    }

    #[test]
    fn hitting_censors_at_cutoff() {
        // period-2 orbit 1/3 <-> 2/3 never enters a small ball at 0.1
        let phase = Phase::Exact(ExactCirclePoint::new(1, 3).unwrap());
        let mut orbit = System::Affine { multiplier: 2 }.spawn_with(
            phase,
            DrivingState::None,
            ChaCha8Rng::seed_from_u64(0),
        );
        let target = Ball::new(CirclePoint::new(0.1), 0.05);
        assert_eq!(hitting_time(&mut orbit, &target, 17), Tau::Censored(17));
        assert_eq!(orbit.steps(), 17);
    }

    #[test]
    fn return_examples() {
        let phase = Phase::Exact(ExactCirclePoint::new(1, 3).unwrap());
        let system = System::Affine { multiplier: 2 };
        let mut orbit =
            system.spawn_with(phase, DrivingState::None, ChaCha8Rng::seed_from_u64(0));
        assert_eq!(return_time(&mut orbit, 0.1, 100), Tau::Hit(2));

        // with r = 0.4 the other branch point 2/3 is already inside
        let mut orbit =
            system.spawn_with(phase, DrivingState::None, ChaCha8Rng::seed_from_u64(0));
        assert_eq!(return_time(&mut orbit, 0.4, 100), Tau::Hit(1));

        // the fixed point returns immediately
        let mut orbit = float_orbit(system, 0.0);
        assert_eq!(return_time(&mut orbit, 0.1, 100), Tau::Hit(1));
    }

    #[test]
    fn hitting_matches_brute_force_prefix_scan() {
        let system = System::markov_doubling_tripling();
        let target = Ball::new(CirclePoint::new(0.3), 0.07);
        for i in 0..50u64 {
            let mut orbit = system.spawn(sample_rng(3, "scan", i));
            let mut reference = orbit.clone();
            let tau = hitting_time(&mut orbit, &target, 400);
            // independent scan over the same stream's trajectory
            let mut found = None;
            for k in 1..=400u64 {
                reference.step();
                if target.contains(reference.position()) {
                    found = Some(k);
                    break;
                }
            }
            match tau {
                Tau::Hit(k) => assert_eq!(found, Some(k)),
                Tau::Censored(_) => assert_eq!(found, None),
            }
        }
    }

    #[test]
    fn hitting_time_is_monotone_in_radius() {
        let system = System::markov_doubling_tripling();
        let center = CirclePoint::new(0.41);
        for i in 0..40u64 {
            let mut prev: Option<u64> = None;
            for r in [0.15, 0.08, 0.04, 0.02] {
                let mut orbit = system.spawn(sample_rng(21, "monotone", i));
                let target = Ball::new(center, r);
                let tau = hitting_time(&mut orbit, &target, 20_000);
                let k = tau.hit_value().expect("generous cutoff");
                if let Some(p) = prev {
                    assert!(k >= p, "tau grew from {p} to {k} as r shrank");
                }
                prev = Some(k);
            }
        }
    }

    #[test]
    fn batch_is_deterministic_across_worker_counts() {
        let system = System::markov_doubling_tripling();
        let target = Ball::new(CirclePoint::new(0.41), 0.01);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                hitting_batch(
                    system,
                    target,
                    0.02,
                    500,
                    5000,
                    7,
                    "hitting-law",
                    StartMode::Stationary { burn_in: 0 },
                )
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.len(), b.len());
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.tau, t.tau);
        }
    }

    #[test]
    fn periodic_start_has_flat_return_scaling() {
        let start = Phase::Exact(ExactCirclePoint::new(1, 3).unwrap());
        let radii: Vec<f64> = (4..=10).map(|j| 0.5f64.powi(j)).collect();
        let est = recurrence_rate(
            System::Affine { multiplier: 2 },
            start,
            &radii,
            0,
            "rate",
            default_cutoff_rule,
        )
        .unwrap();
        assert!(est.slope.abs() < 1e-9, "slope {}", est.slope);
        assert!(est.lower_slope.abs() < 1e-9);
        assert!(est.upper_slope.abs() < 1e-9);
        assert_eq!(est.censored, 0);
    }

    #[test]
    fn typical_start_has_unit_return_scaling() {
        let mut rng = sample_rng(11, "rate-start", 0);
        let start = Phase::Exact(ExactCirclePoint::random_typical(&mut rng));
        let radii: Vec<f64> = (5..=12).map(|j| 0.5f64.powi(j)).collect();
        let est = recurrence_rate(
            System::Affine { multiplier: 2 },
            start,
            &radii,
            11,
            "rate",
            default_cutoff_rule,
        )
        .unwrap();
        assert!(
            (est.slope - 1.0).abs() < 0.35,
            "slope {} too far from 1",
            est.slope
        );
        assert!(est.lower_slope <= est.slope && est.slope <= est.upper_slope);
    }

    #[test]
    fn too_few_radii_is_an_error() {
        let start = Phase::Float(0.37);
        let err = recurrence_rate(
            System::Affine { multiplier: 2 },
            start,
            &[0.1, 0.05],
            0,
            "rate",
            default_cutoff_rule,
        )
        .unwrap_err();
        assert_eq!(
            err,
            RecurrenceError::InsufficientData { needed: 3, got: 2 }
        );
    }

    #[test]
    fn upper_bound_check_behaviour() {
        // tau <= n never happens on a censored-only batch
        let taus = vec![Tau::Censored(100); 50];
        let check = hitting_upper_bound_check(&taus, 0.01, 10);
        assert!(check.pass && !check.vacuous);
        assert_eq!(check.fraction, 0.0);

        // large n makes the bound vacuously >= 1
        let taus = vec![Tau::Hit(1); 50];
        let check = hitting_upper_bound_check(&taus, 0.05, 30);
        assert!(check.bound >= 1.0);
        assert!(check.pass);

        let check = hitting_upper_bound_check(&[], 0.01, 5);
        assert!(check.pass && check.vacuous);
    }
}
