//! Three-dimensional velocities and the small amount of vector algebra the
//! collision kinematics needs.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A particle velocity in R³.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Velocity { x, y, z }
    }

    /// Unit vector along coordinate axis `k` (0, 1 or 2).
    #[inline]
    pub fn axis(k: usize) -> Self {
        match k {
            0 => Velocity::new(1.0, 0.0, 0.0),
            1 => Velocity::new(0.0, 1.0, 0.0),
            _ => Velocity::new(0.0, 0.0, 1.0),
        }
    }

    #[inline]
    pub fn component(&self, k: usize) -> f64 {
        match k {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn dot(&self, other: &Velocity) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(&self, other: &Velocity) -> Velocity {
        Velocity::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn dist2(&self, other: &Velocity) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }

    /// `det[a, b, c] = a · (b × c)`.
    pub fn triple(a: &Velocity, b: &Velocity, c: &Velocity) -> f64 {
        a.dot(&b.cross(c))
    }
}

impl fmt::Display for Velocity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl Add for Velocity {
    type Output = Velocity;
    #[inline]
    fn add(self, o: Velocity) -> Velocity {
        Velocity::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Velocity {
    type Output = Velocity;
    #[inline]
    fn sub(self, o: Velocity) -> Velocity {
        Velocity::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Velocity {
    type Output = Velocity;
    #[inline]
    fn neg(self) -> Velocity {
        Velocity::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Velocity {
    type Output = Velocity;
    #[inline]
    fn mul(self, s: f64) -> Velocity {
        Velocity::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Velocity> for f64 {
    type Output = Velocity;
    #[inline]
    fn mul(self, v: Velocity) -> Velocity {
        v * self
    }
}

impl Div<f64> for Velocity {
    type Output = Velocity;
    #[inline]
    fn div(self, s: f64) -> Velocity {
        Velocity::new(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Velocity {
    #[inline]
    fn add_assign(&mut self, o: Velocity) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl SubAssign for Velocity {
    #[inline]
    fn sub_assign(&mut self, o: Velocity) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl Sum for Velocity {
    fn sum<I: Iterator<Item = Velocity>>(iter: I) -> Velocity {
        iter.fold(Velocity::ZERO, |acc, v| acc + v)
    }
}

impl<'a> Sum<&'a Velocity> for Velocity {
    fn sum<I: Iterator<Item = &'a Velocity>>(iter: I) -> Velocity {
        iter.fold(Velocity::ZERO, |acc, v| acc + *v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_orthogonal() {
        let a = Velocity::new(1.0, 2.0, 3.0);
        let b = Velocity::new(-0.5, 4.0, 0.25);
        let c = a.cross(&b);
        assert!(c.dot(&a).abs() < 1e-12);
        assert!(c.dot(&b).abs() < 1e-12);
    }

    #[test]
    fn triple_of_axes() {
        let d = Velocity::triple(&Velocity::axis(0), &Velocity::axis(1), &Velocity::axis(2));
        assert_eq!(d, 1.0);
    }
}
