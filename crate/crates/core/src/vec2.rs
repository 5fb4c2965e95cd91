use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or displacement in the image plane, in pixel units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Counterclockwise rotation by 90 degrees: (x, y) -> (-y, x).
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            self
        }
    }

    #[inline]
    pub fn midpoint(self, other: Vec2) -> Vec2 {
        Vec2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

/// Closest point on segment `[a, b]` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let d = b - a;
    let len_sq = d.norm_sq();
    if len_sq == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(d) / len_sq).clamp(0.0, 1.0);
    (a + d * t, t)
}

/// Chebyshev (L-infinity) distance from `p` to segment `[a, b]`.
pub fn chebyshev_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    // max(|f(t)|, |g(t)|) is convex and piecewise linear in t; its minimum
    // sits at an endpoint or at a kink.
    let f0 = a.x - p.x;
    let g0 = a.y - p.y;
    let df = b.x - a.x;
    let dg = b.y - a.y;
    let eval = |t: f64| (f0 + t * df).abs().max((g0 + t * dg).abs());
    let mut best = eval(0.0).min(eval(1.0));
    let mut try_t = |num: f64, den: f64| {
        if den != 0.0 {
            let t = num / den;
            if (0.0..=1.0).contains(&t) {
                best = best.min(eval(t));
            }
        }
    };
    try_t(-f0, df);
    try_t(-g0, dg);
    try_t(g0 - f0, df - dg);
    try_t(-(f0 + g0), df + dg);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perp_rotates_counterclockwise() {
        assert_eq!(Vec2::new(1.0, 0.0).perp(), Vec2::new(0.0, 1.0));
        assert_eq!(Vec2::new(0.0, 1.0).perp(), Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn chebyshev_distance_matches_brute_force() {
        let a = Vec2::new(0.3, -1.2);
        let b = Vec2::new(4.1, 2.7);
        for &(px, py) in &[(0.0, 0.0), (5.0, -3.0), (2.0, 2.0), (-1.0, 4.0), (3.0, 0.5)] {
            let p = Vec2::new(px, py);
            let brute = (0..=100_000)
                .map(|i| {
                    let t = i as f64 / 100_000.0;
                    (a + (b - a) * t - p).max_abs()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((chebyshev_to_segment(p, a, b) - brute).abs() < 1e-4);
        }
    }
}
