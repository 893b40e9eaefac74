//! Steady-state Kalman predictor from the discrete algebraic Riccati equation.

use nalgebra::{DMatrix, DVector};

use super::model::DiscreteModel;
use crate::error::MpcError;

pub const DARE_TOLERANCE: f64 = 1e-12;
pub const DARE_MAX_ITERATIONS: usize = 100_000;

/// Noise covariances used to shape the estimator gain.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Process noise covariance, n x n.
    pub w: DMatrix<f64>,
    /// Measurement noise covariance, p x p.
    pub v: DMatrix<f64>,
    /// Cross covariance, n x p.
    pub z: DMatrix<f64>,
}

impl EstimatorConfig {
    /// Scaled identities for `w` and `v`, zero cross covariance.
    pub fn isotropic(states: usize, outputs: usize, w: f64, v: f64) -> Self {
        Self {
            w: DMatrix::identity(states, states) * w,
            v: DMatrix::identity(outputs, outputs) * v,
            z: DMatrix::zeros(states, outputs),
        }
    }
}

fn innovation_inverse(
    model: &DiscreteModel,
    p: &DMatrix<f64>,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>, MpcError> {
    let s = &model.c * p * model.c.transpose() + &cfg.v;
    s.try_inverse().ok_or(MpcError::SingularInnovation)
}

/// One application of the Riccati map.
fn riccati_map(
    model: &DiscreteModel,
    p: &DMatrix<f64>,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>, MpcError> {
    let (a, c) = (&model.a, &model.c);
    let apct = a * p * c.transpose() + &cfg.z;
    let inv = innovation_inverse(model, p, cfg)?;
    let next = &cfg.w + a * p * a.transpose() - &apct * inv * apct.transpose();
    Ok((&next + next.transpose()) * 0.5)
}

fn check_dimensions(model: &DiscreteModel, cfg: &EstimatorConfig) -> Result<(), MpcError> {
    let (n, p) = (model.states(), model.outputs());
    if cfg.w.shape() != (n, n) || cfg.v.shape() != (p, p) || cfg.z.shape() != (n, p) {
        return Err(MpcError::Dimension(format!(
            "covariances {:?}, {:?}, {:?} do not fit a model with {n} states and {p} outputs",
            cfg.w.shape(),
            cfg.v.shape(),
            cfg.z.shape()
        )));
    }
    Ok(())
}

/// Fixed-point iteration of the Riccati map from `P = W` until the largest
/// entry change drops below [`DARE_TOLERANCE`].
pub fn solve_dare(model: &DiscreteModel, cfg: &EstimatorConfig) -> Result<DMatrix<f64>, MpcError> {
    check_dimensions(model, cfg)?;
    let mut p = cfg.w.clone();
    let mut step = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERATIONS {
        let next = riccati_map(model, &p, cfg)?;
        step = (&next - &p).amax();
        p = next;
        if step < DARE_TOLERANCE {
            return Ok(p);
        }
    }
    Err(MpcError::NoConvergence {
        iterations: DARE_MAX_ITERATIONS,
        last_step: step,
    })
}

/// Largest absolute entry of `P - riccati(P)`.
pub fn dare_residual(
    model: &DiscreteModel,
    p: &DMatrix<f64>,
    cfg: &EstimatorConfig,
) -> Result<f64, MpcError> {
    Ok((p - riccati_map(model, p, cfg)?).amax())
}

/// `K = (A P C^T + Z)(C P C^T + V)^-1`.
pub fn kalman_gain(
    model: &DiscreteModel,
    p: &DMatrix<f64>,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>, MpcError> {
    let inv = innovation_inverse(model, p, cfg)?;
    Ok((&model.a * p * model.c.transpose() + &cfg.z) * inv)
}

/// Measurement-update gain `P C^T (C P C^T + V)^-1`, giving the filtered
/// estimate `xhat + L (y - C xhat)` from the one-step prediction.
pub fn filter_gain(
    model: &DiscreteModel,
    p: &DMatrix<f64>,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>, MpcError> {
    let inv = innovation_inverse(model, p, cfg)?;
    Ok(p * model.c.transpose() * inv)
}

/// One-step-ahead state predictor with a fixed gain.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanEstimator {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Prediction of the state at the next sample given data up to now.
    pub xhat: DVector<f64>,
}

impl KalmanEstimator {
    pub fn new(model: &DiscreteModel, cfg: &EstimatorConfig) -> Result<Self, MpcError> {
        let p = solve_dare(model, cfg)?;
        let gain = kalman_gain(model, &p, cfg)?;
        Ok(Self {
            p,
            gain,
            xhat: DVector::zeros(model.states()),
        })
    }

    /// `xhat <- A xhat + B u + K (y - C xhat)`.
    pub fn step(&mut self, model: &DiscreteModel, u: &DVector<f64>, y: &DVector<f64>) {
        let innovation = y - &model.c * &self.xhat;
        self.xhat = &model.a * &self.xhat + &model.b * u + &self.gain * innovation;
    }
}
