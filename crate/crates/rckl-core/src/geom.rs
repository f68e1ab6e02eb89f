//! Planar rigid transforms and angle utilities.

use nalgebra::{DVector, Vector2};

pub const TAU: f64 = std::f64::consts::TAU;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// Smallest signed difference `a - b`, wrapped to (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// A rigid transform of the plane: rotation by `angle` followed by a
/// translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform2 {
    pub angle: f64,
    pub translation: Vector2<f64>,
}

impl RigidTransform2 {
    pub fn identity() -> Self {
        Self { angle: 0.0, translation: Vector2::zeros() }
    }

    pub fn new(angle: f64, tx: f64, ty: f64) -> Self {
        Self { angle, translation: Vector2::new(tx, ty) }
    }

    pub fn apply_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.angle.sin_cos();
        Vector2::new(c * p.x - s * p.y + self.translation.x, s * p.x + c * p.y + self.translation.y)
    }

    /// Transforms a planar pose (x, y, theta); theta picks up the rotation.
    pub fn apply_pose(&self, pose: &DVector<f64>) -> DVector<f64> {
        let p = self.apply_point(&Vector2::new(pose[0], pose[1]));
        DVector::from_vec(vec![p.x, p.y, wrap_angle(pose[2] + self.angle)])
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.angle.sin_cos();
        let t = &self.translation;
        Self {
            angle: -self.angle,
            translation: Vector2::new(-(c * t.x + s * t.y), -(-s * t.x + c * t.y)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(0.1 - TAU), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let t = RigidTransform2::new(0.7, 1.5, -2.0);
        let p = Vector2::new(3.0, 4.0);
        let back = t.inverse().apply_point(&t.apply_point(&p));
        assert_relative_eq!(back, p, epsilon = 1e-12);
    }

    #[test]
    fn quarter_turn_pose() {
        let t = RigidTransform2::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let pose = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let out = t.apply_pose(&pose);
        assert_relative_eq!(out[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out[2], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }
}
