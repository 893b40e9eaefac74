//! Stacked output prediction and the unconstrained receding-horizon solve.

use nalgebra::{DMatrix, DVector};

use super::model::DiscreteModel;
use crate::error::MpcError;

/// Maps the one-step-ahead state estimate and the stacked future inputs
/// `U = [u(k+1); ...; u(k+N)]` to the stacked outputs
/// `Y = [y(k+1); ...; y(k+N)] = lambda * xhat + gamma * U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionModel {
    /// `[C; CA; ...; CA^(N-1)]`, `(p N) x n`.
    pub lambda: DMatrix<f64>,
    /// Strictly block-lower-triangular, block `(i, j) = C A^(i-j-1) B` for `j < i`.
    pub gamma: DMatrix<f64>,
    pub horizon: usize,
    pub outputs: usize,
    pub inputs: usize,
}

pub fn build_prediction(model: &DiscreteModel, horizon: usize) -> PredictionModel {
    assert!(horizon >= 1, "prediction horizon must be at least one step");
    let (n, m, p) = (model.states(), model.inputs(), model.outputs());
    let mut lambda = DMatrix::zeros(p * horizon, n);
    let mut gamma = DMatrix::zeros(p * horizon, m * horizon);

    // markov[i] = C A^i B, ca = C A^i
    let mut ca = model.c.clone();
    let mut markov = Vec::with_capacity(horizon);
    for i in 0..horizon {
        lambda.view_mut((i * p, 0), (p, n)).copy_from(&ca);
        markov.push(&ca * &model.b);
        ca = &ca * &model.a;
    }
    for i in 1..horizon {
        for j in 0..i {
            gamma
                .view_mut((i * p, j * m), (p, m))
                .copy_from(&markov[i - j - 1]);
        }
    }
    PredictionModel {
        lambda,
        gamma,
        horizon,
        outputs: p,
        inputs: m,
    }
}

/// Output tracking weight and input-move weight of the quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    pub output: DMatrix<f64>,
    pub moves: DMatrix<f64>,
}

impl MpcWeights {
    pub fn diagonal(output: &[f64], moves: &[f64]) -> Self {
        Self {
            output: DMatrix::from_diagonal(&DVector::from_column_slice(output)),
            moves: DMatrix::from_diagonal(&DVector::from_column_slice(moves)),
        }
    }
}

fn block_diagonal(block: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * count, c * count);
    for i in 0..count {
        out.view_mut((i * r, i * c), (r, c)).copy_from(block);
    }
    out
}

/// Quadratic program of the receding-horizon controller, factored once.
///
/// Minimises
/// `J = 1/2 sum_i |y(k+i) - r(k+i)|^2_Y + |u(k+i) - u(k+i-1)|^2_S`
/// over `U`, where `u(k)` is the input already committed for the current
/// period. With a control horizon `M < N` the inputs after `u(k+M)` are held.
#[derive(Debug, Clone)]
pub struct MpcSolver {
    pub prediction: PredictionModel,
    pub weights: MpcWeights,
    pub control_horizon: usize,
    /// `(m N) x (m M)` map from free moves to the full input sequence.
    blocking: DMatrix<f64>,
    /// Move-difference operator, `(m N) x (m N)`.
    difference: DMatrix<f64>,
    output_weight: DMatrix<f64>,
    move_weight: DMatrix<f64>,
    /// `H^-1 (gamma T)^T Ybar`
    reference_gain: DMatrix<f64>,
    /// `H^-1 (D T)^T Sbar E`
    previous_gain: DMatrix<f64>,
}

impl MpcSolver {
    pub fn new(
        prediction: PredictionModel,
        weights: MpcWeights,
        control_horizon: usize,
    ) -> Result<Self, MpcError> {
        let (n_steps, m, p) = (prediction.horizon, prediction.inputs, prediction.outputs);
        if weights.output.shape() != (p, p) || weights.moves.shape() != (m, m) {
            return Err(MpcError::Dimension(format!(
                "weights {:?} / {:?} do not fit {p} outputs and {m} inputs",
                weights.output.shape(),
                weights.moves.shape()
            )));
        }
        if control_horizon == 0 || control_horizon > n_steps {
            return Err(MpcError::Dimension(format!(
                "control horizon {control_horizon} must lie in 1..={n_steps}"
            )));
        }
        let eye = DMatrix::<f64>::identity(m, m);
        let mut blocking = DMatrix::zeros(m * n_steps, m * control_horizon);
        let mut difference = DMatrix::zeros(m * n_steps, m * n_steps);
        for i in 0..n_steps {
            blocking
                .view_mut((i * m, i.min(control_horizon - 1) * m), (m, m))
                .copy_from(&eye);
            difference.view_mut((i * m, i * m), (m, m)).copy_from(&eye);
            if i > 0 {
                difference
                    .view_mut((i * m, (i - 1) * m), (m, m))
                    .copy_from(&(-&eye));
            }
        }
        let output_weight = block_diagonal(&weights.output, n_steps);
        let move_weight = block_diagonal(&weights.moves, n_steps);

        let gamma_t = &prediction.gamma * &blocking;
        let diff_t = &difference * &blocking;
        let hessian = gamma_t.transpose() * &output_weight * &gamma_t
            + diff_t.transpose() * &move_weight * &diff_t;
        let chol = hessian.cholesky().ok_or(MpcError::SingularHessian)?;
        let reference_gain = chol.solve(&(gamma_t.transpose() * &output_weight));
        let first_block = move_weight.columns(0, m).into_owned();
        let previous_gain = chol.solve(&(diff_t.transpose() * first_block));

        Ok(Self {
            prediction,
            weights,
            control_horizon,
            blocking,
            difference,
            output_weight,
            move_weight,
            reference_gain,
            previous_gain,
        })
    }

    fn free_moves(
        &self,
        xhat: &DVector<f64>,
        refs: &DVector<f64>,
        u_prev: &DVector<f64>,
    ) -> DVector<f64> {
        let tracking = refs - &self.prediction.lambda * xhat;
        &self.reference_gain * tracking + &self.previous_gain * u_prev
    }

    /// Full optimal input sequence `[u(k+1); ...; u(k+N)]`.
    pub fn solve(
        &self,
        xhat: &DVector<f64>,
        refs: &DVector<f64>,
        u_prev: &DVector<f64>,
    ) -> DVector<f64> {
        &self.blocking * self.free_moves(xhat, refs, u_prev)
    }

    /// First block of the optimal sequence, the only part that gets applied.
    pub fn first_move(
        &self,
        xhat: &DVector<f64>,
        refs: &DVector<f64>,
        u_prev: &DVector<f64>,
    ) -> DVector<f64> {
        let m = self.prediction.inputs;
        let tracking = refs - &self.prediction.lambda * xhat;
        self.reference_gain.rows(0, m) * tracking + self.previous_gain.rows(0, m) * u_prev
    }

    /// Value of the receding-horizon cost for an arbitrary input sequence.
    pub fn cost(
        &self,
        xhat: &DVector<f64>,
        refs: &DVector<f64>,
        u_prev: &DVector<f64>,
        inputs: &DVector<f64>,
    ) -> f64 {
        let m = self.prediction.inputs;
        let err = &self.prediction.lambda * xhat + &self.prediction.gamma * inputs - refs;
        let mut moves = &self.difference * inputs;
        let mut head = moves.rows_mut(0, m);
        head -= u_prev;
        0.5 * ((err.transpose() * &self.output_weight * &err)[(0, 0)]
            + (moves.transpose() * &self.move_weight * &moves)[(0, 0)])
    }
}
