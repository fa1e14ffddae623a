//! Planar and 3D pose types, twists, angle arithmetic and platform limits.
//!
//! Angles live in (−π, π]. Every operation that produces an angle passes it
//! through [`normalize_angle`].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle into (−π, π], rejecting NaN and infinities.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(normalize_angle(a))
}

/// Infallible variant of [`wrap_angle`]; non-finite input propagates as NaN.
#[inline]
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar pose. `theta` is kept in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`, mapped out.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)
    }

    /// Express `other` in the frame of `self`, i.e. `self⁻¹ ∘ other`.
    pub fn relative(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

pub fn se2_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn se2_inverse(a: &Pose2) -> Pose2 {
    a.inverse()
}

/// 3D position with yaw. Roll and pitch are not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose3 {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    pub yaw: f64,
}

impl Pose3 {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw: normalize_angle(yaw) }
    }

    pub fn planar(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.yaw)
    }
}

impl From<Pose2> for Pose3 {
    fn from(p: Pose2) -> Self {
        Pose3::new(p.x, p.y, 0.0, p.theta)
    }
}

/// Body-frame velocity command or estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Twist {
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub vz: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { vx: 0.0, vy: 0.0, vz: 0.0, omega: 0.0 };

    /// Forward speed and yaw rate, as used by coupled (unicycle) platforms.
    pub fn unicycle(v: f64, omega: f64) -> Self {
        Twist { vx: v, vy: 0.0, vz: 0.0, omega }
    }

    pub fn planar(vx: f64, vy: f64, omega: f64) -> Self {
        Twist { vx, vy, vz: 0.0, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformLimits {
    pub v_max: f64,
    pub omega_max: f64,
    /// Minimum turning radius; only binding for coupled platforms.
    pub r_min: f64,
}

impl PlatformLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("v_max", self.v_max), ("omega_max", self.omega_max), ("r_min", self.r_min)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Clamp a command to what the platform can execute. Coupled platforms
    /// have no lateral or vertical channel; holonomic speed is capped in the
    /// plane.
    pub fn clamp(&self, u: &Twist, cls: PlatformClass) -> Twist {
        let omega = u.omega.clamp(-self.omega_max, self.omega_max);
        match cls {
            PlatformClass::CoupledGround => Twist::unicycle(u.vx.clamp(-self.v_max, self.v_max), omega),
            PlatformClass::Holonomic2D | PlatformClass::Holonomic3D => {
                let sp = u.vx.hypot(u.vy);
                let k = if sp > self.v_max { self.v_max / sp } else { 1.0 };
                let vz = if cls == PlatformClass::Holonomic3D { u.vz.clamp(-self.v_max, self.v_max) } else { 0.0 };
                Twist { vx: u.vx * k, vy: u.vy * k, vz, omega }
            }
        }
    }
}

impl Default for PlatformLimits {
    fn default() -> Self {
        PlatformLimits { v_max: 1.0, omega_max: 1.5, r_min: 0.5 }
    }
}

/// Kinematic taxonomy that selects the reachability model and planner family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformClass {
    /// Position and heading coupled (rover): Dubins reach, SCP planner.
    CoupledGround,
    /// Planar holonomic (air-bearing spacecraft testbed).
    #[serde(rename = "holonomic2d")]
    Holonomic2D,
    /// Holonomic with altitude (multirotor).
    #[serde(rename = "holonomic3d")]
    Holonomic3D,
}

impl PlatformClass {
    pub fn is_coupled(self) -> bool {
        matches!(self, PlatformClass::CoupledGround)
    }
}
