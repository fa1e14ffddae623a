//! Ground-truth world state and observer plants.

use crate::geometry::{normalize_angle, PlatformClass, PlatformLimits, Pose2, Pose3, Twist};

/// Ground truth. Only the simulator and metrics read this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldState {
    pub observer: Pose3,
    pub target: Pose2,
    pub t: f64,
}

/// Integrate a body-frame twist for `dt` (forward Euler). `u` is clamped first.
pub fn step_observer(pose: &Pose3, cls: PlatformClass, limits: &PlatformLimits, u: &Twist, dt: f64) -> Pose3 {
    let u = limits.clamp(u, cls);
    let (s, c) = pose.yaw.sin_cos();
    let dx = c * u.vx - s * u.vy;
    let dy = s * u.vx + c * u.vy;
    let z = if cls == PlatformClass::Holonomic3D { (pose.z + u.vz * dt).max(0.0) } else { 0.0 };
    Pose3 { x: pose.x + dx * dt, y: pose.y + dy * dt, z, yaw: normalize_angle(pose.yaw + u.omega * dt) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn lim() -> PlatformLimits {
        PlatformLimits { v_max: 2.0, omega_max: 2.0, r_min: 0.5 }
    }

    #[test]
    fn unicycle_steps() {
        let p = step_observer(&Pose3::default(), PlatformClass::CoupledGround, &lim(), &Twist::unicycle(1.0, 0.0), 0.1);
        assert!((p.x - 0.1).abs() < 1e-15 && p.y == 0.0);
        let p = step_observer(&Pose3::default(), PlatformClass::CoupledGround, &lim(), &Twist::unicycle(0.0, 1.0), 0.1);
        assert!(p.x == 0.0 && (p.yaw - 0.1).abs() < 1e-15);
    }

    #[test]
    fn holonomic_rotates_body_twist() {
        let start = Pose3::new(0.0, 0.0, 0.0, FRAC_PI_2);
        let p = step_observer(&start, PlatformClass::Holonomic2D, &lim(), &Twist::planar(1.0, 0.0, 0.0), 0.1);
        assert!(p.x.abs() < 1e-15 && (p.y - 0.1).abs() < 1e-15);
    }

    #[test]
    fn clamping() {
        let u = lim().clamp(&Twist { vx: 3.0, vy: 4.0, vz: 1.0, omega: -9.0 }, PlatformClass::Holonomic2D);
        assert!((u.vx.hypot(u.vy) - 2.0).abs() < 1e-12);
        assert_eq!((u.vz, u.omega), (0.0, -2.0));
        let u = lim().clamp(&Twist { vx: -5.0, vy: 1.0, vz: 0.0, omega: 0.5 }, PlatformClass::CoupledGround);
        assert_eq!((u.vx, u.vy), (-2.0, 0.0));
    }

    #[test]
    fn altitude_floor() {
        let start = Pose3::new(0.0, 0.0, 0.05, 0.0);
        let p = step_observer(&start, PlatformClass::Holonomic3D, &lim(), &Twist { vz: -1.0, ..Twist::ZERO }, 0.1);
        assert_eq!(p.z, 0.0);
    }
}
