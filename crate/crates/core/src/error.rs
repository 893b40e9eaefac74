use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("rotor {index} has negative angular speed {value}")]
    NegativeRotorSpeed { index: usize, value: f64 },
    #[error("cable no longer taut: zeta = {zeta:.6} m is below the floor {floor:.6} m")]
    SlackCable { zeta: f64, floor: f64 },
    #[error("attitude at gimbal singularity (phi = {phi}, theta = {theta})")]
    GimbalSingularity { phi: f64, theta: f64 },
    #[error("coupled acceleration system is singular")]
    SingularSystem,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("reference time {t} s outside [0, {end}] s")]
    OutOfRange { t: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("collective thrust must be positive to extract attitude, got {0} N")]
    NonPositiveThrust(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("Riccati iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("innovation covariance C P C^T + V is singular")]
    SingularInnovation,
    #[error("MPC normal-equation matrix is not positive definite")]
    SingularHessian,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("at t = {t:.4} s: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error("at t = {t:.4} s: {source}")]
    Control { t: f64, source: ControlError },
    #[error("at t = {t:.4} s: state became non-finite")]
    NonFinite { t: f64 },
}

impl SimError {
    pub fn time(&self) -> f64 {
        match self {
            Self::Dynamics { t, .. } | Self::Control { t, .. } | Self::NonFinite { t } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("log contains no samples")]
    EmptyLog,
    #[error("{0}")]
    Infeasible(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}
