//! Geometry of the unit circle R/Z: canonical points, the circle metric,
//! open balls (arcs) and annuli.

use std::fmt;

/// A point on the circle, stored by its canonical representative in [0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CirclePoint(f64);

impl CirclePoint {
    /// Wraps an arbitrary finite real to its representative in [0, 1).
    pub fn new(value: f64) -> Self {
        assert!(value.is_finite(), "circle point must be finite, got {value}");
        let mut v = value - value.floor();
        // value - floor(value) can round up to exactly 1.0 for tiny negative
        // inputs; fold that case back onto 0.
        if v >= 1.0 {
            v = 0.0;
        }
        CirclePoint(v)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for CirclePoint {
    fn from(value: f64) -> Self {
        CirclePoint::new(value)
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arc-length distance on the circle: min(|x-y|, 1-|x-y|). Lies in [0, 1/2].
pub fn circle_dist(x: CirclePoint, y: CirclePoint) -> f64 {
    let d = (x.0 - y.0).abs();
    d.min(1.0 - d)
}

/// An open metric ball (arc). The radius must lie in (0, 1/2) so the ball is
/// a proper arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    center: CirclePoint,
    radius: f64,
}

impl Ball {
    pub fn new(center: CirclePoint, radius: f64) -> Self {
        assert!(
            radius > 0.0 && radius < 0.5,
            "ball radius must lie in (0, 1/2), got {radius}"
        );
        Ball { center, radius }
    }

    pub fn center(&self) -> CirclePoint {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Open-ball membership: strict inequality, so boundary points are out.
    pub fn contains(&self, x: CirclePoint) -> bool {
        circle_dist(x, self.center) < self.radius
    }
}

/// Open-ball membership test; see [`Ball::contains`].
pub fn in_ball(x: CirclePoint, ball: &Ball) -> bool {
    ball.contains(x)
}

/// Lebesgue (arc-length) mass of a ball: 2r.
pub fn lebesgue_ball_mass(ball: &Ball) -> f64 {
    2.0 * ball.radius
}

/// The set of points at distance in [inner, outer) from the center: inside
/// the outer ball but not inside the (open) inner ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annulus {
    center: CirclePoint,
    outer: f64,
    inner: f64,
}

impl Annulus {
    pub fn new(center: CirclePoint, outer: f64, inner: f64) -> Self {
        assert!(
            outer > 0.0 && outer < 0.5,
            "annulus outer radius must lie in (0, 1/2), got {outer}"
        );
        assert!(
            (0.0..outer).contains(&inner),
            "annulus inner radius must lie in [0, outer), got {inner}"
        );
        Annulus {
            center,
            outer,
            inner,
        }
    }

    pub fn center(&self) -> CirclePoint {
        self.center
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn contains(&self, x: CirclePoint) -> bool {
        let d = circle_dist(x, self.center);
        d < self.outer && d >= self.inner
    }

    /// Lebesgue mass: 2(outer - inner).
    pub fn lebesgue_mass(&self) -> f64 {
        2.0 * (self.outer - self.inner)
    }
}
