//! Planner configuration: every weight, bound and model parameter in one
//! place, with JSON overrides merged key by key over the defaults.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::behavior_gen::BehaviorParams;
use crate::central_opt::{CostWeights, OptimizerParams};
use crate::decision::{DecisionParams, MobilParams};
use crate::driver_models::IdmParams;
use crate::emergency::EmergencyParams;
use crate::lane_change::SingleTrackParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("configuration value out of range: {0}")]
    Range(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Support points per plan.
    pub n: usize,
    /// Spacing of the support points [s].
    pub dt: f64,
    /// Simulation ticks between two replans.
    pub replan_ticks: usize,
    /// Speed bound used for sanity checks [m/s].
    pub v_max: f64,
    /// Lateral acceleration used for the velocity profile [m/s^2].
    pub a_lat_profile: f64,
    /// Longitudinal acceleration used for the velocity profile [m/s^2].
    pub a_lon_profile: f64,
    /// Clearance kept to the enlarged shape of a physical leader [m].
    pub leader_margin: f64,
    pub weights: CostWeights,
    pub optimizer: OptimizerParams,
    pub ego_idm: IdmParams,
    pub others_idm: IdmParams,
    pub mobil: MobilParams,
    pub decision: DecisionParams,
    pub behavior: BehaviorParams,
    pub lane_change: SingleTrackParams,
    pub emergency: EmergencyParams,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n: 60,
            dt: 0.05,
            replan_ticks: 2,
            v_max: 30.0,
            a_lat_profile: 2.0,
            a_lon_profile: 1.5,
            leader_margin: 0.5,
            weights: CostWeights::default(),
            optimizer: OptimizerParams::default(),
            ego_idm: IdmParams::default(),
            others_idm: IdmParams::default(),
            mobil: MobilParams::default(),
            decision: DecisionParams::default(),
            behavior: BehaviorParams::default(),
            lane_change: SingleTrackParams::default(),
            emergency: EmergencyParams::default(),
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl PlannerConfig {
    /// Applies overrides in order; unknown keys are rejected with their path.
    pub fn with_overrides<'a>(&self, patches: impl IntoIterator<Item = &'a Value>) -> Result<Self, ConfigError> {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for p in patches {
            merge_json(&mut value, p);
        }
        let cfg: PlannerConfig = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Invalid {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(ConfigError::Range(what.to_string())) };
        check(self.n >= 6, "n must be at least 6")?;
        check(self.dt > 0.0, "dt must be positive")?;
        check(self.replan_ticks >= 1, "replan_ticks must be at least 1")?;
        check(self.replan_ticks + 2 < self.n, "replan_ticks must leave points to execute")?;
        check(self.weights.is_valid(), "cost weights")?;
        check(self.ego_idm.is_valid(), "ego_idm")?;
        check(self.others_idm.is_valid(), "others_idm")?;
        check(self.emergency.a_min < 0.0, "emergency.a_min must be negative")?;
        check(self.optimizer.a_max > 0.0, "optimizer.a_max must be positive")?;
        check(self.a_lat_profile > 0.0 && self.a_lon_profile > 0.0, "profile accelerations")?;
        check(self.leader_margin >= 0.0, "leader_margin must not be negative")?;
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * (self.n - 1) as f64
    }
}
