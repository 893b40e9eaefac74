//! Receding-horizon position and attitude loops.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kalman::{filter_gain, EstimatorConfig, KalmanEstimator};
use super::model::{discretize_rotational, discretize_translational, DiscreteModel};
use super::predict::{build_prediction, MpcSolver, MpcWeights};
use crate::controllers::{
    saturate_thrust, AttitudeCommand, ControlOutput, Controller, SaturationFlags, DEFAULT_ANGLE_CAP,
};
use crate::dynamics::{ControlInputs, QuadState, VehicleParams};
use crate::error::{ControlError, MpcError};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction horizon N, steps.
    pub horizon: usize,
    /// Control horizon M, steps; inputs after step M are held.
    pub control_horizon: usize,
    /// Output weights on (x, y, z).
    pub position_output_weight: [f64; 3],
    /// Move weights on (theta, phi, G).
    pub position_move_weight: [f64; 3],
    /// Output weights on (phi, theta, psi).
    pub attitude_output_weight: [f64; 3],
    /// Move weights on the three body moments.
    pub attitude_move_weight: [f64; 3],
    pub process_noise: f64,
    pub measurement_noise: f64,
    /// When true the input applied over a control period is the one optimised
    /// on the previous tick; otherwise the current measurement is folded in
    /// through the filter gain and the first move is applied at once.
    pub one_step_delay: bool,
    /// When true the position loop sees the reference over the whole
    /// horizon; otherwise the current reference point is held across it.
    pub preview: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            control_horizon: 25,
            position_output_weight: [1.0; 3],
            position_move_weight: [0.3, 0.3, 0.05],
            attitude_output_weight: [100.0; 3],
            attitude_move_weight: [0.05; 3],
            process_noise: 1e-4,
            measurement_noise: 1e-4,
            one_step_delay: true,
            preview: false,
        }
    }
}

impl MpcConfig {
    pub fn first_invalid_field(&self) -> Option<&'static str> {
        if self.horizon == 0 {
            return Some("horizon");
        }
        if self.control_horizon == 0 || self.control_horizon > self.horizon {
            return Some("control_horizon");
        }
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        [
            (
                "position_output_weight",
                positive(&self.position_output_weight),
            ),
            ("position_move_weight", positive(&self.position_move_weight)),
            (
                "attitude_output_weight",
                positive(&self.attitude_output_weight),
            ),
            ("attitude_move_weight", positive(&self.attitude_move_weight)),
            ("process_noise", positive(&[self.process_noise])),
            ("measurement_noise", positive(&[self.measurement_noise])),
        ]
        .iter()
        .find(|(_, ok)| !ok)
        .map(|(name, _)| *name)
    }
}

/// Estimator plus solver for one loop of the cascade.
#[derive(Debug, Clone)]
pub struct MpcLoop {
    pub model: DiscreteModel,
    pub solver: MpcSolver,
    pub estimator: KalmanEstimator,
    filter: DMatrix<f64>,
    /// Input for the current period (delayed mode: planned last tick).
    pending: DVector<f64>,
    /// Input applied over the previous period.
    previous: DVector<f64>,
    started: bool,
    delayed: bool,
}

impl MpcLoop {
    pub fn new(
        model: DiscreteModel,
        weights: MpcWeights,
        horizon: usize,
        control_horizon: usize,
        estimator: &EstimatorConfig,
        delayed: bool,
    ) -> Result<Self, MpcError> {
        let prediction = build_prediction(&model, horizon);
        let solver = MpcSolver::new(prediction, weights, control_horizon)?;
        let est = KalmanEstimator::new(&model, estimator)?;
        let filter = filter_gain(&model, &est.p, estimator)?;
        let m = model.inputs();
        Ok(Self {
            model,
            solver,
            estimator: est,
            filter,
            pending: DVector::zeros(m),
            previous: DVector::zeros(m),
            started: false,
            delayed,
        })
    }

    /// Steps ahead of the current tick covered by the first reference block.
    pub fn reference_offset(&self) -> usize {
        usize::from(self.delayed)
    }

    /// Runs measure, estimate, optimise for one tick and returns the input to
    /// hold until the next one.
    ///
    /// `refs(i)` gives the output reference `i` control periods ahead of now.
    /// `limit` may modify the input before it is applied; the estimator and
    /// the move penalty see the limited value.
    pub fn update(
        &mut self,
        y: &DVector<f64>,
        refs: impl Fn(usize) -> DVector<f64>,
        mut limit: impl FnMut(&mut DVector<f64>),
    ) -> DVector<f64> {
        if !self.started {
            // Outputs are measured states; unmeasured states start at zero.
            self.estimator.xhat = self.model.c.transpose() * y;
            self.started = true;
        }
        let (p, n_steps) = (self.model.outputs(), self.solver.prediction.horizon);
        let offset = self.reference_offset();
        let mut stacked = DVector::zeros(p * n_steps);
        for i in 0..n_steps {
            stacked.rows_mut(i * p, p).copy_from(&refs(i + offset));
        }

        if self.delayed {
            let mut u = self.pending.clone();
            limit(&mut u);
            self.estimator.step(&self.model, &u, y);
            self.pending = self.solver.first_move(&self.estimator.xhat, &stacked, &u);
            self.previous = u.clone();
            u
        } else {
            let innovation = y - &self.model.c * &self.estimator.xhat;
            let current = &self.estimator.xhat + &self.filter * innovation;
            let mut u = self.solver.first_move(&current, &stacked, &self.previous);
            limit(&mut u);
            self.estimator.xhat = &self.model.a * &current + &self.model.b * &u;
            self.previous = u.clone();
            u
        }
    }
}

fn loop_weights(output: &[f64; 3], moves: &[f64; 3]) -> MpcWeights {
    MpcWeights::diagonal(output, moves)
}

/// Cascade of two receding-horizon loops designed on the bare quadrotor.
///
/// The position loop optimises `(theta, phi, G)` with `G = g - U1 / m_q`; the
/// attitude loop optimises body moments, which map to the thrust differences
/// `U2 = tau_phi / arm`, `U3 = tau_theta / arm` and `U4 = tau_psi`.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub params: VehicleParams,
    pub angle_cap: f64,
    pub position: MpcLoop,
    pub attitude: MpcLoop,
    dt: f64,
    preview: bool,
}

impl MpcController {
    pub fn new(
        config: &MpcConfig,
        params: VehicleParams,
        dt_control: f64,
    ) -> Result<Self, MpcError> {
        let est = EstimatorConfig::isotropic(6, 3, config.process_noise, config.measurement_noise);
        let position = MpcLoop::new(
            discretize_translational(dt_control, params.g),
            loop_weights(&config.position_output_weight, &config.position_move_weight),
            config.horizon,
            config.control_horizon,
            &est,
            config.one_step_delay,
        )?;
        let attitude = MpcLoop::new(
            discretize_rotational(dt_control, params.i_x, params.i_y, params.i_z),
            loop_weights(&config.attitude_output_weight, &config.attitude_move_weight),
            config.horizon,
            config.control_horizon,
            &est,
            config.one_step_delay,
        )?;
        Ok(Self {
            params,
            angle_cap: DEFAULT_ANGLE_CAP,
            position,
            attitude,
            dt: dt_control,
            preview: config.preview,
        })
    }
}

impl Controller for MpcController {
    fn update(
        &mut self,
        t: f64,
        trajectory: &Trajectory,
        quad: &QuadState,
    ) -> Result<ControlOutput, ControlError> {
        let reference = trajectory.sample(t)?;
        let params = self.params;
        let cap = self.angle_cap;
        let dt = if self.preview { self.dt } else { 0.0 };

        let mut flags = SaturationFlags::NONE;
        let y = DVector::from_column_slice(&quad.position());
        let u = self.position.update(
            &y,
            |i| DVector::from_column_slice(&trajectory.sample_clamped(t + i as f64 * dt).pos),
            |u| {
                let (u1, f) = saturate_thrust(params.m_q * (params.g - u[2]), &params);
                flags |= f;
                u[2] = params.g - u1 / params.m_q;
                for k in 0..2 {
                    if u[k].abs() > cap {
                        flags |= SaturationFlags::ANGLE;
                        u[k] = u[k].clamp(-cap, cap);
                    }
                }
            },
        );
        let command = AttitudeCommand {
            theta_d: u[0],
            phi_d: u[1],
            psi_d: reference.yaw,
            u1: params.m_q * (params.g - u[2]),
        };

        let y = DVector::from_vec(vec![quad.phi, quad.theta, quad.psi]);
        let target = DVector::from_vec(vec![command.phi_d, command.theta_d, command.psi_d]);
        let tau = self.attitude.update(&y, |_| target.clone(), |_| {});
        let inputs = ControlInputs {
            u1: command.u1,
            u2: tau[0] / params.arm,
            u3: tau[1] / params.arm,
            u4: tau[2],
        };
        Ok(ControlOutput {
            inputs,
            command,
            flags,
        })
    }
}
