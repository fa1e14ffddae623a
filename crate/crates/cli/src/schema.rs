//! Scenario schema reference, generated from the library defaults so it
//! cannot drift from what the loader actually fills in.

use intercept_core::geometry::{PlatformLimits, Pose3};
use intercept_core::harness::io::SCHEMA_VERSION;
use intercept_core::harness::{PlannerConfig, Scenario, SuccessConfig};
use intercept_core::sim::SensorConfig;
use serde_json::{json, Value};

pub fn document() -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "unknown_keys": "rejected at every level",
        "required": ["platform", "target_start", "profile", "run"],
        "keys": {
            "platform": { "type": "string", "one_of": ["coupled_ground", "holonomic2d", "holonomic3d"] },
            "limits": { "type": "object", "default": PlatformLimits::default() },
            "observer_start": { "type": "object", "fields": ["x", "y", "z", "yaw"], "default": Pose3::default() },
            "target_start": { "type": "object", "fields": ["x", "y", "theta"] },
            "profile": {
                "type": "object",
                "tag": "kind",
                "variants": {
                    "linear": { "speed": "m/s", "distance": "m", "heading": "rad, optional" },
                    "sinusoid": {
                        "p2p": "m", "wavelength": "m", "speed": "m/s",
                        "heading": "rad, optional", "distance": "m, optional"
                    },
                    "stochastic_twist": {
                        "v_range": "[min, max] m/s", "omega_range": "[min, max] rad/s",
                        "resample_hz": "Hz", "stop_after": "s"
                    },
                    "waypoints": { "points": "list of {pose: {x, y, theta}, speed}" },
                    "static": {}
                }
            },
            "sensor": { "type": "object", "default": SensorConfig::default() },
            "planner": { "type": "object", "default": PlannerConfig::default() },
            "success": { "type": "object", "default": SuccessConfig::default() },
            "run": {
                "type": "object",
                "required": ["duration"],
                "default": { "tick_hz": 10.0, "seed": 0, "prediction_enabled": true }
            }
        },
        "example": Scenario::example()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_in_schema_loads() {
        let doc = document();
        let text = serde_json::to_string(&doc["example"]).unwrap();
        Scenario::from_json(&text).unwrap();
    }

    #[test]
    fn defaults_match_library() {
        let doc = document();
        let planner: PlannerConfig = serde_json::from_value(doc["keys"]["planner"]["default"].clone()).unwrap();
        assert_eq!(planner, PlannerConfig::default());
    }
}
