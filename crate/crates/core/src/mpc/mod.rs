//! Linear model predictive control: discrete models, steady-state Kalman
//! prediction, stacked prediction matrices and the receding-horizon solve.

pub mod controller;
pub mod kalman;
pub mod model;
pub mod predict;

pub use controller::{MpcConfig, MpcController, MpcLoop};
pub use kalman::{
    dare_residual, filter_gain, kalman_gain, solve_dare, EstimatorConfig, KalmanEstimator,
};
pub use model::{discretize_rotational, discretize_translational, DiscreteModel};
pub use predict::{build_prediction, MpcSolver, MpcWeights, PredictionModel};
