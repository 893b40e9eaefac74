use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use slungsim_core::mpc::{
    build_prediction, discretize_rotational, discretize_translational, DiscreteModel,
    EstimatorConfig, KalmanEstimator, MpcLoop, MpcSolver, MpcWeights,
};

const DT: f64 = 0.01;

fn models() -> [DiscreteModel; 2] {
    [
        discretize_translational(DT, 9.81),
        discretize_rotational(DT, 7.5e-3, 7.5e-3, 1.3e-2),
    ]
}

fn random_vector(rng: &mut StdRng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

fn solver(model: &DiscreteModel, horizon: usize, control_horizon: usize) -> MpcSolver {
    MpcSolver::new(
        build_prediction(model, horizon),
        MpcWeights::diagonal(&[1.0, 2.0, 0.5], &[0.3, 0.3, 0.05]),
        control_horizon,
    )
    .unwrap()
}

/// Holds every input after `control_horizon` at the last free one.
fn hold_tail(inputs: &mut DVector<f64>, m: usize, control_horizon: usize) {
    let last = inputs.rows((control_horizon - 1) * m, m).into_owned();
    for i in control_horizon..inputs.len() / m {
        inputs.rows_mut(i * m, m).copy_from(&last);
    }
}

#[test]
fn stacked_prediction_matches_state_recursion() {
    let mut rng = StdRng::seed_from_u64(7);
    for model in models() {
        for horizon in [1, 2, 5, 25] {
            let pm = build_prediction(&model, horizon);
            let (n, m, p) = (model.states(), model.inputs(), model.outputs());
            for _ in 0..20 {
                let x0 = random_vector(&mut rng, n, 2.0);
                let u = random_vector(&mut rng, m * horizon, 1.0);
                let stacked = &pm.lambda * &x0 + &pm.gamma * &u;
                let mut x = x0.clone();
                for i in 0..horizon {
                    let y = &model.c * &x;
                    let got = stacked.rows(i * p, p);
                    for k in 0..p {
                        let tol = 1e-12 * (1.0 + y[k].abs());
                        assert!(
                            (got[k] - y[k]).abs() <= tol,
                            "step {i}: {} vs {}",
                            got[k],
                            y[k]
                        );
                    }
                    x = &model.a * &x + &model.b * u.rows(i * m, m);
                }
            }
        }
    }
}

#[test]
fn optimum_has_zero_gradient() {
    let mut rng = StdRng::seed_from_u64(11);
    for model in models() {
        let s = solver(&model, 25, 25);
        let (n, m, p) = (model.states(), model.inputs(), model.outputs());
        let xhat = random_vector(&mut rng, n, 0.5);
        let refs = random_vector(&mut rng, p * 25, 0.5);
        let u_prev = random_vector(&mut rng, m, 0.2);
        let opt = s.solve(&xhat, &refs, &u_prev);
        let h = 1e-5;
        let mut largest = 0.0f64;
        for j in 0..opt.len() {
            let mut up = opt.clone();
            up[j] += h;
            let mut down = opt.clone();
            down[j] -= h;
            let grad = (s.cost(&xhat, &refs, &u_prev, &up) - s.cost(&xhat, &refs, &u_prev, &down))
                / (2.0 * h);
            largest = largest.max(grad.abs());
        }
        assert!(largest < 1e-6, "largest gradient component {largest}");
    }
}

#[test]
fn random_perturbations_never_lower_the_cost() {
    let mut rng = StdRng::seed_from_u64(13);
    for model in models() {
        for control_horizon in [25, 5] {
            let s = solver(&model, 25, control_horizon);
            let (n, m, p) = (model.states(), model.inputs(), model.outputs());
            let xhat = random_vector(&mut rng, n, 0.5);
            let refs = random_vector(&mut rng, p * 25, 0.5);
            let u_prev = random_vector(&mut rng, m, 0.2);
            let opt = s.solve(&xhat, &refs, &u_prev);
            let best = s.cost(&xhat, &refs, &u_prev, &opt);
            for _ in 0..1000 {
                let scale = 10f64.powf(rng.random_range(-4.0..0.0));
                let mut delta = random_vector(&mut rng, m * 25, scale);
                hold_tail(&mut delta, m, control_horizon);
                let trial = &opt + delta;
                let cost = s.cost(&xhat, &refs, &u_prev, &trial);
                assert!(cost >= best - 1e-12 * (1.0 + best), "{cost} < {best}");
            }
        }
    }
}

#[test]
fn blocked_solution_holds_inputs_after_control_horizon() {
    let model = discretize_translational(DT, 9.81);
    let s = solver(&model, 25, 5);
    let mut rng = StdRng::seed_from_u64(17);
    let opt = s.solve(
        &random_vector(&mut rng, 6, 0.5),
        &random_vector(&mut rng, 75, 0.5),
        &random_vector(&mut rng, 3, 0.2),
    );
    let mut held = opt.clone();
    hold_tail(&mut held, 3, 5);
    assert_eq!(opt, held);
}

#[test]
fn receding_horizon_reaches_constant_reference() {
    for (model, target) in [
        (discretize_translational(DT, 9.81), [0.3, -0.2, 1.0]),
        (
            discretize_rotational(DT, 7.5e-3, 7.5e-3, 1.3e-2),
            [0.05, -0.05, 0.1],
        ),
    ] {
        for delayed in [false, true] {
            let mut mpc = MpcLoop::new(
                model.clone(),
                MpcWeights::diagonal(&[1.0, 1.0, 1.0], &[0.3, 0.3, 0.05]),
                25,
                25,
                &EstimatorConfig::isotropic(6, 3, 1e-4, 1e-4),
                delayed,
            )
            .unwrap();
            let r = DVector::from_column_slice(&target);
            let mut x = DVector::zeros(6);
            for _ in 0..20000 {
                let y = &model.c * &x;
                let u = mpc.update(&y, |_| r.clone(), |_| {});
                x = &model.a * &x + &model.b * u;
            }
            let err = (&model.c * &x - &r).amax();
            assert!(err < 1e-6, "delayed = {delayed}: error {err}");
            let speed = (0..3).map(|i| x[2 * i + 1].abs()).fold(0.0, f64::max);
            assert!(speed < 1e-6, "delayed = {delayed}: speed {speed}");
        }
    }
}

#[test]
fn estimator_converges_from_wrong_initial_state() {
    let mut rng = StdRng::seed_from_u64(19);
    for model in models() {
        let mut est =
            KalmanEstimator::new(&model, &EstimatorConfig::isotropic(6, 3, 1e-4, 1e-4)).unwrap();
        let mut x = random_vector(&mut rng, 6, 1.0);
        est.xhat = DVector::zeros(6);
        let initial = (&x - &est.xhat).norm();
        for _ in 0..5000 {
            let u = random_vector(&mut rng, 3, 0.1);
            let y = &model.c * &x;
            est.step(&model, &u, &y);
            x = &model.a * &x + &model.b * &u;
        }
        let err = (&x - &est.xhat).norm();
        assert!(err < 1e-9 * initial, "error {err} from {initial}");
        let closed = &model.a - &est.gain * &model.c;
        let radius = closed
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max);
        assert!(radius < 1.0);
    }
}

#[test]
fn solver_rejects_mismatched_weights() {
    let model = discretize_translational(DT, 9.81);
    let bad = MpcWeights {
        output: DMatrix::identity(2, 2),
        moves: DMatrix::identity(3, 3),
    };
    assert!(MpcSolver::new(build_prediction(&model, 10), bad, 10).is_err());
    let w = MpcWeights::diagonal(&[1.0; 3], &[1.0; 3]);
    assert!(MpcSolver::new(build_prediction(&model, 10), w.clone(), 0).is_err());
    assert!(MpcSolver::new(build_prediction(&model, 10), w, 11).is_err());
}
