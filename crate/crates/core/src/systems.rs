//! Circle-map families and orbit streams.
//!
//! The built-in systems cover deterministic integer-multiplier maps, a skew
//! product driven by a piecewise-linear Lebesgue-preserving base map whose
//! fibers double or triple, the equivalent two-state Markov sampling of that
//! fiber-label process, i.i.d. beta-map cocktails, and noise-perturbed
//! doubling. Integer-multiplier phases are iterated exactly (see
//! [`crate::exact`]); everything else runs in double precision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exact::ExactCirclePoint;
use crate::stats;
use crate::torus::{Ball, CirclePoint};

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("markov chain has no unique stationary vector")]
    SingularChain,
    #[error("markov data invalid: {0}")]
    BadMatrix(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("m^n overflows the machine range (m = {m}, n = {n})")]
    Overflow { m: u32, n: u32 },
}

/// One affine branch of the piecewise-linear base map.
#[derive(Clone, Copy, Debug)]
pub struct ThetaBranch {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Branch table of the base map used by [`System::SkewProduct`]. On each
/// label region ([0, 2/5) and [2/5, 1)) the reciprocal slopes of the branches
/// mapping onto that region sum to one, which is exactly the bookkeeping that
/// makes the map preserve Lebesgue measure.
pub const THETA_BRANCHES: [ThetaBranch; 4] = [
    ThetaBranch {
        lo: 0.0,
        hi: 0.2,
        slope: 2.0,
        intercept: 0.0,
    },
    ThetaBranch {
        lo: 0.2,
        hi: 0.4,
        slope: 3.0,
        intercept: -0.2,
    },
    ThetaBranch {
        lo: 0.4,
        hi: 0.6,
        slope: 2.0,
        intercept: -0.8,
    },
    ThetaBranch {
        lo: 0.6,
        hi: 1.0,
        slope: 1.5,
        intercept: -0.5,
    },
];

/// Label split of the skew product: fibers double below 2/5 and triple at
/// and above it.
pub const LABEL_SPLIT: f64 = 0.4;

/// Transition matrix of the skew product's fiber-label process, derived from
/// the branch geometry of the base map. Its stationary vector is (2/5, 3/5).
pub const DOUBLING_TRIPLING_MATRIX: [[f64; 2]; 2] = [[0.5, 0.5], [1.0 / 3.0, 2.0 / 3.0]];

/// Fiber multipliers indexed by label.
pub const DOUBLING_TRIPLING_MULTIPLIERS: [u32; 2] = [2, 3];

/// The piecewise-linear base map on [0, 1).
pub fn eval_theta(omega: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&omega), "omega = {omega} outside [0,1)");
    let v = if omega < 0.2 {
        2.0 * omega
    } else if omega < 0.4 {
        3.0 * omega - 0.2
    } else if omega < 0.6 {
        2.0 * omega - 0.8
    } else {
        1.5 * omega - 0.5
    };
    // guard against rounding pushing a value onto the excluded endpoints
    if v >= 1.0 {
        0.0
    } else {
        v.max(0.0)
    }
}

/// A single fiber map on the circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FiberMap {
    /// x -> m x mod 1 for an integer multiplier m >= 2.
    AffineInteger { multiplier: u32 },
    /// x -> beta x mod 1 for a real beta > 1.
    Beta { beta: f64 },
    /// x -> (m x + lambda) mod 1 with lambda ~ U[-eps, eps].
    Perturbed { multiplier: u32, epsilon: f64 },
}

impl FiberMap {
    /// Infimum of |T'| over the circle: the expansion constant.
    pub fn min_derivative(&self) -> f64 {
        match *self {
            FiberMap::AffineInteger { multiplier } => multiplier as f64,
            FiberMap::Beta { beta } => beta,
            FiberMap::Perturbed { multiplier, .. } => multiplier as f64,
        }
    }
}

/// Fiber selection rule of the skew product.
pub fn select_fiber(omega: f64) -> FiberMap {
    FiberMap::AffineInteger {
        multiplier: fiber_multiplier(omega),
    }
}

pub(crate) fn fiber_multiplier(omega: f64) -> u32 {
    if omega < LABEL_SPLIT {
        2
    } else {
        3
    }
}

/// x -> m x mod 1 in double precision.
pub fn eval_affine(multiplier: u32, x: CirclePoint) -> CirclePoint {
    CirclePoint::new(multiplier as f64 * x.value())
}

/// x -> beta x mod 1 in double precision.
pub fn eval_beta(beta: f64, x: CirclePoint) -> CirclePoint {
    debug_assert!(beta > 1.0, "beta must exceed 1, got {beta}");
    CirclePoint::new(beta * x.value())
}

/// The perturbed affine map with an explicit noise value.
pub fn eval_perturbed_with(multiplier: u32, x: CirclePoint, lambda: f64) -> CirclePoint {
    CirclePoint::new(multiplier as f64 * x.value() + lambda)
}

/// The perturbed affine map; draws lambda ~ U[-eps, eps], consuming exactly
/// one RNG draw.
pub fn eval_perturbed<R: Rng + ?Sized>(
    multiplier: u32,
    epsilon: f64,
    x: CirclePoint,
    rng: &mut R,
) -> CirclePoint {
    debug_assert!(epsilon > 0.0);
    let u: f64 = rng.random();
    eval_perturbed_with(multiplier, x, epsilon * (2.0 * u - 1.0))
}

/// One step of the skew product in double precision. The fiber map selected
/// by the current omega is applied to the phase first; only then does omega
/// advance under the base map.
pub fn step_skew(omega: f64, x: CirclePoint) -> (f64, CirclePoint) {
    let x_next = eval_affine(fiber_multiplier(omega), x);
    (eval_theta(omega), x_next)
}

/// Unique stationary probability vector of a 2x2 stochastic matrix.
pub fn markov_stationary(matrix: [[f64; 2]; 2]) -> Result<[f64; 2], SystemError> {
    validate_matrix(&matrix)?;
    let p = matrix[0][1];
    let q = matrix[1][0];
    if p + q == 0.0 {
        return Err(SystemError::SingularChain);
    }
    Ok([q / (p + q), p / (p + q)])
}

fn validate_matrix(matrix: &[[f64; 2]; 2]) -> Result<(), SystemError> {
    for row in matrix {
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (row[0] + row[1] - 1.0).abs() > 1e-12 {
            return Err(SystemError::BadMatrix(format!(
                "row {row:?} is not a probability vector"
            )));
        }
    }
    Ok(())
}

/// Distribution of the expansion constant across a random map family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamDistribution {
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// The expansion-on-average integral E[1 / min|T'|] over the map family.
/// Values strictly below 1 certify expansion on average.
pub fn expanding_in_average(dist: &ParamDistribution) -> Result<f64, SystemError> {
    match *dist {
        ParamDistribution::PointMass { value } => {
            if value <= 0.0 {
                return Err(SystemError::QuadratureFailure(format!(
                    "non-positive expansion constant {value}"
                )));
            }
            Ok(1.0 / value)
        }
        ParamDistribution::Uniform { lo, hi } => {
            if !(lo > 0.0 && hi > lo) {
                return Err(SystemError::QuadratureFailure(format!(
                    "degenerate support [{lo}, {hi}]"
                )));
            }
            let integral = stats::adaptive_simpson(|b| 1.0 / b, lo, hi, 1e-8)
                .map_err(|e| SystemError::QuadratureFailure(e.to_string()))?;
            Ok(integral / (hi - lo))
        }
    }
}

/// Number of n-periodic points of x -> m x mod 1: solutions of
/// (m^n - 1) x = 0 mod 1, i.e. m^n - 1 points.
pub fn count_periodic_points(m: u32, n: u32) -> Result<u64, SystemError> {
    assert!(m >= 2 && n >= 1, "need m >= 2 and n >= 1");
    let total = (m as u64)
        .checked_pow(n)
        .ok_or(SystemError::Overflow { m, n })?;
    Ok(total - 1)
}

/// Orbit phase coordinate: exact rational or double precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Exact(ExactCirclePoint),
    Float(f64),
}

impl Phase {
    pub fn to_circle(self) -> CirclePoint {
        match self {
            Phase::Exact(p) => p.to_circle(),
            Phase::Float(v) => CirclePoint::new(v),
        }
    }

    fn apply_multiplier(self, m: u32) -> Phase {
        match self {
            Phase::Exact(p) => Phase::Exact(p.apply_multiplier(m)),
            Phase::Float(v) => Phase::Float(eval_affine(m, CirclePoint::new(v)).value()),
        }
    }
}

/// Driving coordinate of an orbit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DrivingState {
    None,
    Omega(f64),
    Label(usize),
}

/// A circle-map system: deterministic, randomly driven, or noise-perturbed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum System {
    /// Deterministic x -> m x mod 1.
    Affine { multiplier: u32 },
    /// Skew product over the piecewise-linear base map; fibers double or
    /// triple according to the label of the driving coordinate.
    SkewProduct,
    /// The skew product's fiber-label process sampled directly as a
    /// two-state Markov chain over the multipliers.
    MarkovAffine {
        matrix: [[f64; 2]; 2],
        init: [f64; 2],
        multipliers: [u32; 2],
    },
    /// i.i.d. maps x -> beta x mod 1 with beta ~ U[lo, hi] each step.
    BetaUniform { lo: f64, hi: f64 },
    /// x -> (m x + lambda) mod 1 with i.i.d. lambda ~ U[-eps, eps].
    PerturbedAffine { multiplier: u32, epsilon: f64 },
    /// Null model: every step redraws the phase uniformly.
    UniformResample,
}

impl System {
    /// The doubling/tripling label chain started from its stationary law.
    pub fn markov_doubling_tripling() -> System {
        let init = markov_stationary(DOUBLING_TRIPLING_MATRIX).expect("chain is irreducible");
        System::MarkovAffine {
            matrix: DOUBLING_TRIPLING_MATRIX,
            init,
            multipliers: DOUBLING_TRIPLING_MULTIPLIERS,
        }
    }

    /// A general two-state chain over integer multipliers. `init` defaults
    /// to the stationary vector.
    pub fn markov_affine(
        matrix: [[f64; 2]; 2],
        init: Option<[f64; 2]>,
        multipliers: [u32; 2],
    ) -> Result<System, SystemError> {
        let stationary = markov_stationary(matrix)?;
        let init = init.unwrap_or(stationary);
        if init.iter().any(|v| *v < 0.0) || (init[0] + init[1] - 1.0).abs() > 1e-12 {
            return Err(SystemError::BadMatrix(format!(
                "initial law {init:?} is not a probability vector"
            )));
        }
        Ok(System::MarkovAffine {
            matrix,
            init,
            multipliers,
        })
    }

    /// True when Lebesgue measure is the stationary phase law, so ball
    /// masses are available in closed form.
    pub fn lebesgue_stationary(&self) -> bool {
        !matches!(self, System::BetaUniform { .. })
    }

    /// True when phases are iterated in exact rational arithmetic.
    pub fn exact_phase(&self) -> bool {
        matches!(
            self,
            System::Affine { .. } | System::SkewProduct | System::MarkovAffine { .. }
        )
    }

    /// Short stable identifier used in provenance records.
    pub fn describe(&self) -> String {
        match *self {
            System::Affine { multiplier } => format!("affine(m={multiplier})"),
            System::SkewProduct => "skew-product".to_string(),
            System::MarkovAffine { multipliers, .. } => {
                format!("markov-affine(m={},{})", multipliers[0], multipliers[1])
            }
            System::BetaUniform { lo, hi } => format!("beta-uniform({lo},{hi})"),
            System::PerturbedAffine {
                multiplier,
                epsilon,
            } => format!("perturbed(m={multiplier},eps={epsilon})"),
            System::UniformResample => "uniform-resample".to_string(),
        }
    }

    /// Starts an orbit from the invariant law: a Lebesgue-typical phase
    /// (exact for integer-multiplier systems) and the driving coordinate
    /// drawn from its stationary law. For [`System::BetaUniform`] the phase
    /// starts Lebesgue; callers burn in to approach stationarity.
    pub fn spawn(&self, mut rng: ChaCha8Rng) -> OrbitStream {
        let phase = self.sample_phase(&mut rng);
        let driving = self.sample_driving(&mut rng);
        OrbitStream {
            system: *self,
            phase,
            driving,
            rng,
            steps: 0,
        }
    }

    /// Starts an orbit at a given phase, driving sampled from its
    /// stationary law.
    pub fn spawn_at(&self, phase: Phase, mut rng: ChaCha8Rng) -> OrbitStream {
        let phase = self.adapt_phase(phase);
        let driving = self.sample_driving(&mut rng);
        OrbitStream {
            system: *self,
            phase,
            driving,
            rng,
            steps: 0,
        }
    }

    /// Starts an orbit with full control of both coordinates. The driving
    /// state must match the system kind.
    pub fn spawn_with(&self, phase: Phase, driving: DrivingState, rng: ChaCha8Rng) -> OrbitStream {
        let ok = matches!(
            (self, driving),
            (System::SkewProduct, DrivingState::Omega(_))
                | (System::MarkovAffine { .. }, DrivingState::Label(0 | 1))
                | (
                    System::Affine { .. }
                        | System::BetaUniform { .. }
                        | System::PerturbedAffine { .. }
                        | System::UniformResample,
                    DrivingState::None
                )
        );
        assert!(ok, "driving state {driving:?} does not fit {self:?}");
        OrbitStream {
            system: *self,
            phase: self.adapt_phase(phase),
            driving,
            rng,
            steps: 0,
        }
    }

    /// Starts an orbit with the phase uniform on the ball's arc (the
    /// Lebesgue law conditioned on the ball).
    pub fn spawn_in_ball(&self, ball: &Ball, mut rng: ChaCha8Rng) -> OrbitStream {
        let lo = ball.center().value() - ball.radius();
        let width = 2.0 * ball.radius();
        let phase = if self.exact_phase() {
            Phase::Exact(ExactCirclePoint::random_in_arc(&mut rng, lo, width))
        } else {
            let u: f64 = rng.random();
            Phase::Float(CirclePoint::new(lo + u * width).value())
        };
        let driving = self.sample_driving(&mut rng);
        OrbitStream {
            system: *self,
            phase,
            driving,
            rng,
            steps: 0,
        }
    }

    fn sample_phase(&self, rng: &mut ChaCha8Rng) -> Phase {
        if self.exact_phase() {
            Phase::Exact(ExactCirclePoint::random_typical(rng))
        } else {
            Phase::Float(rng.random::<f64>())
        }
    }

    fn adapt_phase(&self, phase: Phase) -> Phase {
        match (self.exact_phase(), phase) {
            (false, Phase::Exact(p)) => Phase::Float(p.to_f64()),
            (_, p) => p,
        }
    }

    fn sample_driving(&self, rng: &mut ChaCha8Rng) -> DrivingState {
        match *self {
            System::SkewProduct => DrivingState::Omega(rng.random::<f64>()),
            System::MarkovAffine { init, .. } => {
                let u: f64 = rng.random();
                DrivingState::Label(if u < init[0] { 0 } else { 1 })
            }
            _ => DrivingState::None,
        }
    }
}

/// A lazily advanced orbit carrying its own RNG stream, so a sample's
/// trajectory depends only on the stream seed, never on scheduling.
#[derive(Clone, Debug)]
pub struct OrbitStream {
    system: System,
    phase: Phase,
    driving: DrivingState,
    rng: ChaCha8Rng,
    steps: u64,
}

impl OrbitStream {
    pub fn step(&mut self) {
        match self.system {
            System::Affine { multiplier } => {
                self.phase = self.phase.apply_multiplier(multiplier);
            }
            System::SkewProduct => {
                let DrivingState::Omega(omega) = self.driving else {
                    unreachable!("skew product carries omega")
                };
                self.phase = self.phase.apply_multiplier(fiber_multiplier(omega));
                self.driving = DrivingState::Omega(eval_theta(omega));
            }
            System::MarkovAffine {
                matrix,
                multipliers,
                ..
            } => {
                let DrivingState::Label(label) = self.driving else {
                    unreachable!("markov system carries a label")
                };
                self.phase = self.phase.apply_multiplier(multipliers[label]);
                let u: f64 = self.rng.random();
                self.driving = DrivingState::Label(if u < matrix[label][0] { 0 } else { 1 });
            }
            System::BetaUniform { lo, hi } => {
                let u: f64 = self.rng.random();
                let beta = lo + (hi - lo) * u;
                self.phase = Phase::Float(eval_beta(beta, self.phase.to_circle()).value());
            }
            System::PerturbedAffine {
                multiplier,
                epsilon,
            } => {
                let x = self.phase.to_circle();
                self.phase = Phase::Float(eval_perturbed(multiplier, epsilon, x, &mut self.rng).value());
            }
            System::UniformResample => {
                self.phase = Phase::Float(self.rng.random::<f64>());
            }
        }
        self.steps += 1;
    }

    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn position(&self) -> CirclePoint {
        self.phase.to_circle()
    }

    pub fn driving(&self) -> DrivingState {
        self.driving
    }

    /// Driving coordinate as a real for reporting: omega for skew products,
    /// the label index for chains, 0 otherwise.
    pub fn driving_value(&self) -> f64 {
        match self.driving {
            DrivingState::None => 0.0,
            DrivingState::Omega(w) => w,
            DrivingState::Label(l) => l as f64,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn system(&self) -> System {
        self.system
    }
}
