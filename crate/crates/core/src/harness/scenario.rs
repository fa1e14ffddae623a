//! Declarative trial description, read from JSON.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::NoiseConfig;
use crate::geometry::{PlatformClass, PlatformLimits, Pose2, Pose3};
use crate::intercept::InterceptConfig;
use crate::planner::scp::ScpConfig;
use crate::sim::{SensorConfig, TargetProfile};

/// Which heading a holonomic observer turns to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawMode {
    TargetHeading,
    VelocityDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub scp: ScpConfig,
    pub intercept: InterceptConfig,
    pub noise: NoiseConfig,
    /// Predictor window length `L`.
    pub history_len: usize,
    /// Steps averaged by the target twist estimator.
    pub twist_window: usize,
    /// Gap kept behind the target along its heading.
    pub standoff: f64,
    /// Hover height above the target plane (3D platforms).
    pub altitude: f64,
    /// Descend onto the target once it is slow and directly below.
    pub land: bool,
    pub land_speed: f64,
    pub land_radius: f64,
    /// Shortest polynomial segment used for holonomic planning.
    pub min_segment_s: f64,
    pub yaw_mode: YawMode,
    /// Reject measurements whose normalized innovation squared exceeds this.
    pub innovation_gate: Option<f64>,
    /// After this long with every measurement rejected, accept the next one.
    pub gate_reset_s: f64,
    /// A measurement arriving after a gap at least this long is spliced
    /// into the predictor window by shifting the coasted history, instead
    /// of appearing as a step.
    pub reanchor_gap_s: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            scp: ScpConfig::default(),
            // The intercept search cannot look past the predictor horizon.
            intercept: InterceptConfig { t_max: 3.0, ..Default::default() },
            noise: NoiseConfig::default(),
            history_len: 20,
            twist_window: 5,
            standoff: 1.25,
            altitude: 1.0,
            land: true,
            land_speed: 0.05,
            land_radius: 0.2,
            min_segment_s: 1.0,
            yaw_mode: YawMode::TargetHeading,
            innovation_gate: None,
            gate_reset_s: 2.0,
            reanchor_gap_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuccessConfig {
    pub pos_tol: f64,
    pub ang_tol: f64,
    /// Time the target must have been at rest before the final errors count.
    pub settle_s: f64,
    /// Position covariance trace above which an unseen target counts as lost.
    pub lost_trace: f64,
    pub lost_after_s: f64,
}

impl Default for SuccessConfig {
    fn default() -> Self {
        SuccessConfig { pos_tol: 0.25, ang_tol: 0.20, settle_s: 3.0, lost_trace: 25.0, lost_after_s: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub duration: f64,
    #[serde(default = "default_tick_hz")]
    pub tick_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub prediction_enabled: bool,
}

fn default_tick_hz() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub platform: PlatformClass,
    #[serde(default)]
    pub limits: PlatformLimits,
    #[serde(default)]
    pub observer_start: Pose3,
    pub target_start: Pose2,
    pub profile: TargetProfile,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub success: SuccessConfig,
    pub run: RunConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        self.limits.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        self.profile.validate()?;
        self.sensor.validate()?;
        self.planner.scp.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        self.planner.noise.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        let p = &self.planner;
        if p.history_len < crate::predictor::MIN_SAMPLES {
            return bad(format!("history_len must be at least {}", crate::predictor::MIN_SAMPLES));
        }
        if p.twist_window == 0 {
            return bad("twist_window must be positive".into());
        }
        if !(p.standoff >= 0.0) || !(p.altitude >= 0.0) || !(p.min_segment_s > 0.0) {
            return bad("standoff and altitude must be non-negative, min_segment_s positive".into());
        }
        if !(p.reanchor_gap_s > 0.0) || !(p.gate_reset_s > 0.0) {
            return bad("reanchor_gap_s and gate_reset_s must be positive".into());
        }
        if !(self.success.pos_tol > 0.0) || !(self.success.ang_tol > 0.0) {
            return bad("success tolerances must be positive".into());
        }
        if !(self.run.duration > 0.0) || !self.run.duration.is_finite() {
            return bad("run.duration must be positive".into());
        }
        if !(self.run.tick_hz > 0.0) {
            return bad("run.tick_hz must be positive".into());
        }
        if !self.target_start.is_finite() {
            return bad("target_start must be finite".into());
        }
        Ok(())
    }

    pub fn tick_dt(&self) -> f64 {
        1.0 / self.run.tick_hz
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.run.seed = seed;
        s
    }

    /// A small leader-follower example used by `schema` and tests.
    pub fn example() -> Scenario {
        Scenario {
            platform: PlatformClass::CoupledGround,
            limits: PlatformLimits::default(),
            observer_start: Pose3::default(),
            target_start: Pose2::new(2.0, 0.0, 0.0),
            profile: TargetProfile::Linear { speed: 0.25, heading: None, distance: 5.0 },
            sensor: SensorConfig { fov_half_angle: PI / 3.0, ..Default::default() },
            planner: PlannerConfig::default(),
            success: SuccessConfig::default(),
            run: RunConfig { duration: 30.0, tick_hz: 10.0, seed: 0, prediction_enabled: true },
        }
    }
}
