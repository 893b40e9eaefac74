//! Loading and validation of run and sweep configurations.
//!
//! Files are TOML; sections may be written as tables or as dotted keys
//! (`vehicle.m_q = 1.0`). Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::sim::{ControllerKind, SimConfig};

/// Load masses of the standard sweep, kg.
pub const DEFAULT_MASSES: [f64; 11] =
    [0.005, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];

/// Relative tolerance for `dt_control` being a whole multiple of `dt_physics`.
const STEP_RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Load masses, kg, strictly increasing.
    pub masses: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    /// Settings shared by every run; its `controller` and `m_l` are overridden.
    pub base: SimConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            masses: DEFAULT_MASSES.to_vec(),
            controllers: ControllerKind::ALL.to_vec(),
            base: SimConfig::default(),
        }
    }
}

impl SweepSpec {
    /// Run configurations ordered by controller, then mass.
    pub fn runs(&self) -> Vec<SimConfig> {
        let mut controllers = self.controllers.clone();
        controllers.sort();
        controllers
            .iter()
            .flat_map(|&controller| {
                self.masses.iter().map(move |&m_l| SimConfig {
                    controller,
                    m_l,
                    ..self.base.clone()
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.base.validate_with_mass(None, "base.")?;
        if self.masses.is_empty() {
            return Err(ConfigError::invalid(
                "masses",
                "at least one mass is required",
            ));
        }
        if self.controllers.is_empty() {
            return Err(ConfigError::invalid(
                "controllers",
                "at least one controller is required",
            ));
        }
        let mut seen = self.controllers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.controllers.len() {
            return Err(ConfigError::invalid("controllers", "duplicate entries"));
        }
        let max = self.base.vehicle.max_payload;
        for (i, &m) in self.masses.iter().enumerate() {
            if !(m.is_finite() && m > 0.0 && m <= max) {
                return Err(ConfigError::invalid(
                    format!("masses[{i}]"),
                    format!("{m} kg is outside (0, {max}] kg"),
                ));
            }
            if i > 0 && m <= self.masses[i - 1] {
                return Err(ConfigError::invalid(
                    format!("masses[{i}]"),
                    "masses must be strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

fn check(ok: bool, key: String, message: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, message))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_mass(Some(self.m_l), "")
    }

    fn validate_with_mass(&self, m_l: Option<f64>, prefix: &str) -> Result<(), ConfigError> {
        let key = |k: &str| format!("{prefix}{k}");
        if let Some(field) = self.vehicle.first_invalid_field() {
            return Err(ConfigError::invalid(
                key(&format!("vehicle.{field}")),
                "must be finite and positive",
            ));
        }
        if let Some(m) = m_l {
            let max = self.vehicle.max_payload;
            check(
                m.is_finite() && (0.0..=max).contains(&m),
                key("m_l"),
                format!("{m} kg is outside [0, {max}] kg (vehicle.max_payload)"),
            )?;
        }
        check(
            self.dt_physics.is_finite() && self.dt_physics > 0.0,
            key("dt_physics"),
            "must be positive",
        )?;
        check(
            self.dt_control.is_finite() && self.dt_control >= self.dt_physics,
            key("dt_control"),
            "must be at least dt_physics",
        )?;
        let ratio = self.dt_control / self.dt_physics;
        check(
            (ratio - ratio.round()).abs() <= STEP_RATIO_TOLERANCE * ratio,
            key("dt_control"),
            format!("must be a whole multiple of dt_physics (ratio {ratio})"),
        )?;
        check(
            self.profile.is_consistent(),
            key("profile"),
            "needs positive times, v_cruise = a_peak * t_accel and 2 t_accel + t_cruise <= t_leg",
        )?;
        let end = self.trajectory().end;
        check(
            self.duration.is_finite() && self.duration > 0.0 && self.duration <= end + 1e-9,
            key("duration"),
            format!("must be in (0, {end}] s"),
        )?;
        check(self.z_hold.is_finite(), key("z_hold"), "must be finite")?;
        check(
            self.angle_cap_deg > 0.0 && self.angle_cap_deg < 90.0,
            key("angle_cap_deg"),
            "must be in (0, 90) degrees",
        )?;
        if let Some(field) = self.pd.first_invalid_field() {
            return Err(ConfigError::invalid(
                key(&format!("pd.{field}")),
                "out of range",
            ));
        }
        if let Some(field) = self.smc.first_invalid_field() {
            return Err(ConfigError::invalid(
                key(&format!("smc.{field}")),
                "out of range",
            ));
        }
        if let Some(field) = self.mpc.first_invalid_field() {
            return Err(ConfigError::invalid(
                key(&format!("mpc.{field}")),
                "out of range",
            ));
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parses and validates a single-run configuration.
pub fn parse_sim_config(text: &str, path: &Path) -> Result<SimConfig, ConfigError> {
    let cfg: SimConfig = parse(text, path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses and validates a sweep specification.
pub fn parse_sweep_spec(text: &str, path: &Path) -> Result<SweepSpec, ConfigError> {
    let spec: SweepSpec = parse(text, path)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig, ConfigError> {
    parse_sim_config(&read(path)?, path)
}

pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec, ConfigError> {
    parse_sweep_spec(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::Feedforward;

    fn sim(text: &str) -> Result<SimConfig, ConfigError> {
        parse_sim_config(text, Path::new("test.toml"))
    }

    fn sweep(text: &str) -> Result<SweepSpec, ConfigError> {
        parse_sweep_spec(text, Path::new("test.toml"))
    }

    fn invalid_key(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = sim("controller = \"MPC\"\nm_l = 0.3\n").unwrap();
        assert_eq!(cfg.controller, ControllerKind::Mpc);
        assert_eq!(cfg.m_l, 0.3);
        assert_eq!(cfg.vehicle.m_q, 1.0);
        assert_eq!(cfg.mpc.horizon, 25);
        assert_eq!(cfg.mpc.control_horizon, 25);
        assert_eq!(cfg.pd.kpz, 20.0);
    }

    #[test]
    fn dotted_and_table_keys_agree() {
        let a = sim("vehicle.m_q = 1.2\npd.feedforward = \"full\"\n").unwrap();
        let b = sim("[vehicle]\nm_q = 1.2\n[pd]\nfeedforward = \"full\"\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vehicle.m_q, 1.2);
        assert_eq!(a.pd.feedforward, Feedforward::Full);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["m_L = 0.3\n", "vehicle.mq = 1.0\n", "[mpc]\nhorizn = 10\n"] {
            assert!(
                matches!(sim(text), Err(ConfigError::Parse { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn overweight_load_is_rejected() {
        assert_eq!(invalid_key(sim("m_l = 0.7\n").unwrap_err()), "m_l");
        assert!(sim("m_l = 0.6\n").is_ok());
    }

    #[test]
    fn step_sizes_must_nest() {
        assert_eq!(
            invalid_key(sim("dt_control = 0.0105\n").unwrap_err()),
            "dt_control"
        );
        assert_eq!(
            invalid_key(sim("dt_physics = 0.0\n").unwrap_err()),
            "dt_physics"
        );
        assert!(sim("dt_physics = 0.0005\n").is_ok());
        assert!(sim("dt_control = 0.02\n").is_ok());
    }

    #[test]
    fn nested_fields_are_named() {
        assert_eq!(
            invalid_key(sim("vehicle.cable_length = -1.0\n").unwrap_err()),
            "vehicle.cable_length"
        );
        assert_eq!(
            invalid_key(sim("smc.lambda = [0.5, 0.5, 0.5, 2.25, 0.0, 5.0]\n").unwrap_err()),
            "smc.lambda"
        );
        assert_eq!(
            invalid_key(sim("mpc.control_horizon = 40\n").unwrap_err()),
            "mpc.control_horizon"
        );
        assert_eq!(
            invalid_key(sim("duration = 80.0\n").unwrap_err()),
            "duration"
        );
    }

    #[test]
    fn default_sweep_has_33_runs_in_order() {
        let spec = sweep("").unwrap();
        let runs = spec.runs();
        assert_eq!(runs.len(), 33);
        assert_eq!(runs[0].controller, ControllerKind::Pd);
        assert_eq!(runs[0].m_l, 0.005);
        assert_eq!(runs[10].m_l, 0.5);
        assert_eq!(runs[11].controller, ControllerKind::Smc);
        assert_eq!(runs[32].controller, ControllerKind::Mpc);
    }

    #[test]
    fn sweep_masses_are_checked() {
        assert_eq!(invalid_key(sweep("masses = []\n").unwrap_err()), "masses");
        assert_eq!(
            invalid_key(sweep("masses = [0.1, 0.1]\n").unwrap_err()),
            "masses[1]"
        );
        assert_eq!(
            invalid_key(sweep("masses = [0.0, 0.1]\n").unwrap_err()),
            "masses[0]"
        );
        assert_eq!(
            invalid_key(sweep("masses = [0.1, 0.7]\n").unwrap_err()),
            "masses[1]"
        );
        assert_eq!(
            invalid_key(sweep("controllers = [\"PD\", \"pd\"]\n").unwrap_err()),
            "controllers"
        );
        let spec = sweep("masses = [0.2]\ncontrollers = [\"MPC\", \"PD\"]\nbase.duration = 10.0\n")
            .unwrap();
        let runs = spec.runs();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].controller, ControllerKind::Pd);
        assert_eq!(runs[1].duration, 10.0);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_sim_config(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }
}
