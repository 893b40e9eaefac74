//! Fixed-step closed-loop simulation: reference, cascade controller, coupled
//! plant integrated with RK4 under zero-order-hold inputs, and logging.

use serde::{Deserialize, Serialize};

use crate::controllers::{
    Controller, PdController, PdGains, SaturationFlags, SmcController, SmcGains,
};
use crate::dynamics::{
    coupled_derivative, ControlInputs, LoadState, QuadState, SystemState, VehicleParams, STATE_DIM,
};
use crate::error::{ControlError, DynamicsError, SimError};
use crate::mpc::{MpcConfig, MpcController};
use crate::trajectory::{Trajectory, TrajectoryKind, TrapezoidProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "PD", alias = "pd")]
    Pd,
    #[serde(rename = "SMC", alias = "smc")]
    Smc,
    #[serde(rename = "MPC", alias = "mpc")]
    Mpc,
}

impl ControllerKind {
    pub const ALL: [Self; 3] = [Self::Pd, Self::Smc, Self::Mpc];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pd => "PD",
            Self::Smc => "SMC",
            Self::Mpc => "MPC",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PD" => Ok(Self::Pd),
            "SMC" => Ok(Self::Smc),
            "MPC" => Ok(Self::Mpc),
            _ => Err(format!(
                "unknown controller `{s}` (expected PD, SMC or MPC)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub controller: ControllerKind,
    /// Load mass, kg.
    pub m_l: f64,
    pub dt_physics: f64,
    pub dt_control: f64,
    pub duration: f64,
    pub trajectory: TrajectoryKind,
    /// Start and cruise altitude, m.
    pub z_hold: f64,
    /// Limit on commanded roll and pitch, degrees.
    pub angle_cap_deg: f64,
    pub profile: TrapezoidProfile,
    pub vehicle: VehicleParams,
    pub pd: PdGains,
    pub smc: SmcGains,
    pub mpc: MpcConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            controller: ControllerKind::Pd,
            m_l: 0.3,
            dt_physics: 1e-3,
            dt_control: 1e-2,
            duration: 75.0,
            trajectory: TrajectoryKind::Square,
            z_hold: 1.5,
            angle_cap_deg: 20.0,
            profile: TrapezoidProfile::default(),
            vehicle: VehicleParams::default(),
            pd: PdGains::default(),
            smc: SmcGains::default(),
            mpc: MpcConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.trajectory, self.profile, self.z_hold)
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState {
            t: 0.0,
            quad: QuadState::at_rest(0.0, 0.0, self.z_hold),
            load: LoadState::hanging(self.m_l),
        }
    }

    /// Physics sub-steps per control period.
    pub fn substeps(&self) -> usize {
        (self.dt_control / self.dt_physics).round() as usize
    }

    /// Number of control periods in the run.
    pub fn control_steps(&self) -> usize {
        (self.duration / self.dt_control).round() as usize
    }

    pub fn build_controller(&self) -> Result<Box<dyn Controller>, ControlError> {
        let cap = self.angle_cap_deg.to_radians();
        Ok(match self.controller {
            ControllerKind::Pd => {
                let mut c = PdController::new(self.pd, self.vehicle, self.dt_control);
                c.angle_cap = cap;
                Box::new(c)
            }
            ControllerKind::Smc => {
                let mut c = SmcController::new(self.smc, self.vehicle, self.dt_control);
                c.angle_cap = cap;
                Box::new(c)
            }
            ControllerKind::Mpc => {
                let mut c = MpcController::new(&self.mpc, self.vehicle, self.dt_control)?;
                c.angle_cap = cap;
                Box::new(c)
            }
        })
    }
}

/// One control tick: the state at `t`, the inputs held over the following
/// period and the reference they were computed for.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub quad: QuadState,
    pub load_r: f64,
    pub load_s: f64,
    pub load_zeta: f64,
    pub inputs: ControlInputs,
    pub reference: [f64; 3],
    /// Reference minus actual position.
    pub error: [f64; 3],
    pub flags: SaturationFlags,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    /// Set when the run stopped early; `rows` then holds everything up to the failure.
    pub failure: Option<SimError>,
}

impl SimLog {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_row(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

/// Classical fourth-order Runge-Kutta step of `dx/dt = f(x)`.
pub fn rk4_step<const N: usize, E>(
    x: &[f64; N],
    dt: f64,
    mut f: impl FnMut(&[f64; N]) -> Result<[f64; N], E>,
) -> Result<[f64; N], E> {
    let offset = |k: &[f64; N], h: f64| -> [f64; N] { std::array::from_fn(|i| x[i] + h * k[i]) };
    let k1 = f(x)?;
    let k2 = f(&offset(&k1, 0.5 * dt))?;
    let k3 = f(&offset(&k2, 0.5 * dt))?;
    let k4 = f(&offset(&k3, dt))?;
    Ok(std::array::from_fn(|i| {
        x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Advances the coupled plant by `dt` with `u` held constant.
pub fn step_system(
    state: &SystemState,
    u: &ControlInputs,
    params: &VehicleParams,
    dt: f64,
) -> Result<SystemState, DynamicsError> {
    let x = rk4_step(&state.to_array(), dt, |v: &[f64; STATE_DIM]| {
        coupled_derivative(&state.with_array(v), u, params)
    })?;
    let mut next = state.with_array(&x);
    next.t = state.t + dt;
    Ok(next)
}

fn log_row(
    state: &SystemState,
    out_inputs: ControlInputs,
    flags: SaturationFlags,
    reference: [f64; 3],
    l: f64,
) -> LogRow {
    let pos = state.quad.position();
    LogRow {
        t: state.t,
        quad: state.quad,
        load_r: state.load.r,
        load_s: state.load.s,
        load_zeta: state.load.zeta(l),
        inputs: out_inputs,
        reference,
        error: std::array::from_fn(|i| reference[i] - pos[i]),
        flags,
    }
}

/// Runs one closed-loop scenario. Never panics on plant or controller
/// failure: the log up to that point is returned with `failure` set.
pub fn run(config: &SimConfig) -> SimLog {
    let trajectory = config.trajectory();
    let params = config.vehicle;
    let mut log = SimLog {
        rows: Vec::with_capacity(config.control_steps() + 1),
        failure: None,
    };
    let mut controller = match config.build_controller() {
        Ok(c) => c,
        Err(source) => {
            log.failure = Some(SimError::Control { t: 0.0, source });
            return log;
        }
    };
    let steps = config.control_steps();
    let substeps = config.substeps();
    let mut state = config.initial_state();

    for k in 0..=steps {
        let t = k as f64 * config.dt_control;
        state.t = t;
        let out = match controller.update(t, &trajectory, &state.quad) {
            Ok(out) => out,
            Err(source) => {
                log.failure = Some(SimError::Control { t, source });
                return log;
            }
        };
        let mut inputs = out.inputs;
        let mut flags = out.flags;
        if inputs.u1 > params.u1_max {
            inputs.u1 = params.u1_max;
            flags |= SaturationFlags::THRUST_HIGH;
        } else if !(inputs.u1 >= 0.0) {
            inputs.u1 = 0.0;
            flags |= SaturationFlags::THRUST_LOW;
        }
        let reference = trajectory.sample_clamped(t).pos;
        log.rows.push(log_row(
            &state,
            inputs,
            flags,
            reference,
            params.cable_length,
        ));
        if k == steps {
            break;
        }
        for j in 0..substeps {
            state = match step_system(&state, &inputs, &params, config.dt_physics) {
                Ok(s) => s,
                Err(source) => {
                    log.failure = Some(SimError::Dynamics { t: state.t, source });
                    return log;
                }
            };
            if !state.is_finite() {
                log.failure = Some(SimError::NonFinite {
                    t: t + (j + 1) as f64 * config.dt_physics,
                });
                return log;
            }
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{load_accelerations, pendulum_energy};

    #[test]
    fn constant_field_is_exact() {
        let x = rk4_step(&[1.0, -2.0], 0.25, |_| Ok::<_, ()>([3.0, 0.5])).unwrap();
        assert_eq!(x, [1.75, -1.875]);
    }

    #[test]
    fn harmonic_oscillator_keeps_amplitude() {
        let dt = 0.01;
        let steps = (2.0 * std::f64::consts::PI / dt).round() as usize;
        let mut x = [1.0, 0.0];
        for _ in 0..steps {
            x = rk4_step(&x, dt, |v| Ok::<_, ()>([v[1], -v[0]])).unwrap();
        }
        let amplitude = (x[0] * x[0] + x[1] * x[1]).sqrt();
        assert!((amplitude - 1.0).abs() < 1e-8, "{amplitude}");
    }

    #[test]
    fn coupled_free_fall_is_polynomial() {
        let params = VehicleParams::default();
        let mut state = SystemState {
            t: 0.0,
            quad: QuadState::at_rest(0.0, 0.0, 1.5),
            load: LoadState::hanging(0.3),
        };
        let u = ControlInputs::default();
        for _ in 0..100 {
            state = step_system(&state, &u, &params, 0.01).unwrap();
        }
        let expected = 1.5 - 0.5 * params.g * state.t * state.t;
        assert!(
            (state.quad.z - expected).abs() < 1e-10,
            "{}",
            state.quad.z - expected
        );
        assert!(state.load.r.abs() < 1e-14 && state.load.s.abs() < 1e-14);
    }

    #[test]
    fn pinned_pendulum_conserves_energy() {
        let params = VehicleParams::default();
        let mut load = LoadState {
            r: 0.2,
            s: -0.1,
            r_dot: 0.0,
            s_dot: 0.3,
            m_l: 0.3,
        };
        let e0 = pendulum_energy(&load, &params);
        let dt = 1e-4;
        for _ in 0..100_000 {
            let x = rk4_step(&[load.r, load.s, load.r_dot, load.s_dot], dt, |v| {
                let l = LoadState {
                    r: v[0],
                    s: v[1],
                    r_dot: v[2],
                    s_dot: v[3],
                    m_l: load.m_l,
                };
                let (rdd, sdd) = load_accelerations(&l, [0.0; 3], &params)?;
                Ok::<_, DynamicsError>([v[2], v[3], rdd, sdd])
            })
            .unwrap();
            load = LoadState {
                r: x[0],
                s: x[1],
                r_dot: x[2],
                s_dot: x[3],
                m_l: load.m_l,
            };
        }
        let drift = (pendulum_energy(&load, &params) - e0).abs();
        assert!(drift < 1e-6, "{drift}");
    }

    fn hover_config(controller: ControllerKind) -> SimConfig {
        SimConfig {
            controller,
            m_l: 0.0,
            duration: 10.0,
            trajectory: TrajectoryKind::Hover,
            ..Default::default()
        }
    }

    #[test]
    fn hover_is_held_by_every_controller() {
        for kind in ControllerKind::ALL {
            let log = run(&hover_config(kind));
            assert!(log.completed());
            assert_eq!(log.rows.len(), 1001);
            let worst = log
                .rows
                .iter()
                .flat_map(|r| r.error.iter().map(|e| e.abs()))
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "{kind}: {worst}");
        }
    }

    #[test]
    fn row_count_and_time_grid() {
        let cfg = SimConfig {
            duration: 2.0,
            ..hover_config(ControllerKind::Pd)
        };
        let log = run(&cfg);
        assert_eq!(log.rows.len(), 201);
        assert!(log.rows.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(log.final_row().unwrap().t, 2.0);
    }

    #[test]
    fn repeated_runs_are_identical() {
        for kind in ControllerKind::ALL {
            let cfg = SimConfig {
                controller: kind,
                duration: 20.0,
                ..Default::default()
            };
            assert_eq!(run(&cfg), run(&cfg));
        }
    }

    #[test]
    fn controllers_never_see_the_load() {
        for kind in ControllerKind::ALL {
            let light = run(&SimConfig {
                controller: kind,
                m_l: 0.05,
                duration: 0.01,
                ..Default::default()
            });
            let heavy = run(&SimConfig {
                controller: kind,
                m_l: 0.5,
                duration: 0.01,
                ..Default::default()
            });
            assert_eq!(light.rows[0].inputs, heavy.rows[0].inputs);
            assert_ne!(light.rows[1].quad, heavy.rows[1].quad);
        }
    }

    #[test]
    fn failure_keeps_partial_log() {
        // The square reference ends at 75 s, so the controller fails one tick later.
        let cfg = SimConfig {
            duration: 76.0,
            m_l: 0.0,
            ..Default::default()
        };
        let log = run(&cfg);
        assert_eq!(log.rows.len(), 7501);
        match log.failure {
            Some(SimError::Control { t, .. }) => assert!((t - 75.01).abs() < 1e-9),
            other => panic!("unexpected outcome {other:?}"),
        }
    }
}
