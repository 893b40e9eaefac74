use nalgebra::DMatrix;

/// `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k]`, sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub dt: f64,
}

impl DiscreteModel {
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// Three decoupled (position, velocity) pairs with position outputs and one
/// input per velocity. `gains[i]` is the input-to-velocity gain per second.
fn double_integrator_chain(dt: f64, gains: [f64; 3]) -> DiscreteModel {
    let mut a = DMatrix::identity(6, 6);
    let mut b = DMatrix::zeros(6, 3);
    let mut c = DMatrix::zeros(3, 6);
    for i in 0..3 {
        a[(2 * i, 2 * i + 1)] = dt;
        b[(2 * i + 1, i)] = gains[i] * dt;
        c[(i, 2 * i)] = 1.0;
    }
    DiscreteModel { a, b, c, dt }
}

/// Small-angle translational model.
///
/// States `(x, vx, y, vy, z, vz)`, inputs `(theta, phi, G)` with
/// `G = g - U1 / m_q`, outputs `(x, y, z)`. Signs follow the z-up frame:
/// positive pitch accelerates +x, positive roll accelerates -y, and positive
/// `G` (thrust below weight) accelerates -z.
pub fn discretize_translational(dt: f64, g: f64) -> DiscreteModel {
    double_integrator_chain(dt, [g, -g, -1.0])
}

/// Attitude model. States `(phi, p, theta, q, psi, r)`, inputs the three
/// body moments, outputs `(phi, theta, psi)`.
pub fn discretize_rotational(dt: f64, i_x: f64, i_y: f64, i_z: f64) -> DiscreteModel {
    double_integrator_chain(dt, [1.0 / i_x, 1.0 / i_y, 1.0 / i_z])
}
