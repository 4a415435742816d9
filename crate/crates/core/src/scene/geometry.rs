use std::ops::{Add, Mul, Neg, Sub};

use crate::real::{deg_to_rad, Real};

/// Point or direction in room coordinates, metres. Floor at `z = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; a zero vector stays zero.
    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self * (T::one() / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

impl<T: Real> From<[T; 3]> for Vec3<T> {
    fn from(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Pointing direction of a receiver face. Azimuth is measured in the floor
/// plane from +x towards +y, elevation up from the floor plane, so an
/// elevation of 90° is the zenith.
pub fn branch_normal<T: Real>(azimuth_deg: T, elevation_deg: T) -> Vec3<T> {
    let az = deg_to_rad(azimuth_deg);
    let el = deg_to_rad(elevation_deg);
    let (sin_el, cos_el) = el.sin_cos();
    let (sin_az, cos_az) = az.sin_cos();
    Vec3::new(cos_el * cos_az, cos_el * sin_az, sin_el)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec3<f64>, b: [f64; 3], tol: f64) -> bool {
        (a.x - b[0]).abs() < tol && (a.y - b[1]).abs() < tol && (a.z - b[2]).abs() < tol
    }

    #[test]
    fn zenith() {
        let n = branch_normal(0.0, 90.0);
        assert!(close(n, [0.0, 0.0, 1.0], 1e-15));
    }

    #[test]
    fn table_branches() {
        let half_sqrt3 = 3f64.sqrt() / 2.0;
        assert!(close(branch_normal(180.0, 60.0), [-0.5, 0.0, half_sqrt3], 1e-12));
        assert!(close(branch_normal(90.0, 60.0), [0.0, 0.5, half_sqrt3], 1e-12));
        assert!((half_sqrt3 - 0.8660).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn unit_length(az in 0.0f64..360.0, el in 1e-6f64..=90.0) {
            let n = branch_normal(az, el);
            prop_assert!((n.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn zenith_ignores_azimuth(az in 0.0f64..360.0) {
            let n = branch_normal(az, 90.0);
            prop_assert!(close(n, [0.0, 0.0, 1.0], 1e-12));
        }
    }
}
