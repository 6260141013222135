//! Exact rational circle points for integer-multiplier maps.
//!
//! Iterating x -> 2x mod 1 in floating point collapses to 0 once the 53-bit
//! mantissa is exhausted, so long doubling/tripling orbits cannot be trusted
//! in f64. Orbits here are kept as p/q with a fixed denominator, and the maps
//! act as p -> m*p mod q in integer arithmetic, which is exact at any orbit
//! length.

use rand::Rng;
use thiserror::Error;

use crate::torus::CirclePoint;

/// Denominators are capped at 120 bits so that m*p never overflows u128 for
/// any supported multiplier.
pub const MAX_DENOMINATOR_BITS: u32 = 120;

/// Largest fiber multiplier usable with [`ExactCirclePoint::apply_multiplier`].
pub const MAX_MULTIPLIER: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactPointError {
    #[error("denominator must be positive")]
    DenominatorZero,
    #[error("denominator exceeds {MAX_DENOMINATOR_BITS} bits")]
    DenominatorTooLarge,
}

/// A circle point p/q held in lowest terms modulo q (0 <= p < q). The
/// denominator is fixed for the lifetime of an orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactCirclePoint {
    num: u128,
    den: u128,
}

impl ExactCirclePoint {
    pub fn new(num: u128, den: u128) -> Result<Self, ExactPointError> {
        if den == 0 {
            return Err(ExactPointError::DenominatorZero);
        }
        if den >> MAX_DENOMINATOR_BITS != 0 {
            return Err(ExactPointError::DenominatorTooLarge);
        }
        Ok(ExactCirclePoint {
            num: num % den,
            den,
        })
    }

    pub fn numerator(self) -> u128 {
        self.num
    }

    pub fn denominator(self) -> u128 {
        self.den
    }

    /// The map p/q -> (m*p mod q)/q, exact for every supported multiplier.
    pub fn apply_multiplier(self, m: u32) -> Self {
        debug_assert!(m >= 1 && m <= MAX_MULTIPLIER, "multiplier {m} out of range");
        ExactCirclePoint {
            num: (self.num * m as u128) % self.den,
            den: self.den,
        }
    }

    /// Nearest double-precision value of p/q. The conversion error is one
    /// part in 2^52, far below any ball radius used in experiments.
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_circle(self) -> CirclePoint {
        CirclePoint::new(self.to_f64())
    }

    /// Draws a Lebesgue-typical point: a random denominator of exactly
    /// [`MAX_DENOMINATOR_BITS`] bits that is odd and not a multiple of 3 (so
    /// both x2 and x3 act bijectively mod q and orbits never degenerate),
    /// with a uniform numerator.
    pub fn random_typical<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let den = random_denominator(rng);
        let num = uniform_below(rng, den);
        ExactCirclePoint { num, den }
    }

    /// Draws a point uniformly among the q-grid points of the arc
    /// [lo, lo + width) mod 1, with a fresh typical denominator q. The grid
    /// spacing 1/q (~2^-120) is negligible against any arc used in practice.
    pub fn random_in_arc<R: Rng + ?Sized>(rng: &mut R, lo: f64, width: f64) -> Self {
        assert!(width > 0.0 && width < 1.0, "arc width must lie in (0, 1)");
        let lo = CirclePoint::new(lo).value();
        let den = random_denominator(rng);
        let start = (lo * den as f64).ceil() as u128;
        let count = ((width * den as f64).floor() as u128).max(1);
        let offset = uniform_below(rng, count);
        ExactCirclePoint {
            num: (start + offset) % den,
            den,
        }
    }
}

fn random_denominator<R: Rng + ?Sized>(rng: &mut R) -> u128 {
    loop {
        let d = (rng.random::<u128>() >> (128 - MAX_DENOMINATOR_BITS))
            | (1u128 << (MAX_DENOMINATOR_BITS - 1));
        if d & 1 == 1 && d % 3 != 0 {
            return d;
        }
    }
}

/// Uniform draw from [0, bound) by rejection from the smallest binary window.
fn uniform_below<R: Rng + ?Sized>(rng: &mut R, bound: u128) -> u128 {
    debug_assert!(bound > 0);
    let bits = 128 - bound.leading_zeros();
    if bits == 0 {
        return 0;
    }
    loop {
        let v = rng.random::<u128>() >> (128 - bits);
        if v < bound {
            return v;
        }
    }
}
