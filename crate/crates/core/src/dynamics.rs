//! Equations of motion for the quadrotor alone and for the quadrotor with a
//! cable-suspended point-mass load.
//!
//! World frame is z-up: gravity acts along -z and a level vehicle thrusts along
//! +z. The load hangs below the vehicle's centre of gravity at relative offset
//! `(r, s, -zeta)` with `zeta = sqrt(L^2 - r^2 - s^2)`.
//!
//! Attitude rates are Euler-angle rates (`roll_rate = d(phi)/dt`, ...), which
//! is how the rotational model is written; for the small angles flown here
//! they coincide with body rates to first order.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;

/// Taut-cable floor as a fraction of the cable length.
pub const ZETA_FLOOR_FRACTION: f64 = 0.01;

/// Physical constants of the vehicle and its cable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Quadrotor mass, kg.
    pub m_q: f64,
    /// Principal moments of inertia, kg m^2.
    pub i_x: f64,
    pub i_y: f64,
    pub i_z: f64,
    /// Rotor arm length, m.
    pub arm: f64,
    /// Thrust factor, N s^2.
    pub thrust_factor: f64,
    /// Drag factor, N m s^2.
    pub drag_factor: f64,
    /// Cable length, m.
    pub cable_length: f64,
    /// Manufacturer payload limit, kg.
    pub max_payload: f64,
    /// Collective thrust ceiling, N.
    pub u1_max: f64,
    /// Gravity magnitude, m/s^2.
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m_q: 1.0,
            i_x: 7.5e-3,
            i_y: 7.5e-3,
            i_z: 1.3e-2,
            arm: 0.25,
            thrust_factor: 3.13e-5,
            drag_factor: 7.5e-7,
            cable_length: 0.5,
            max_payload: 0.6,
            u1_max: 14.72,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    /// Returns the name of the first field that is not strictly positive and finite.
    pub fn first_invalid_field(&self) -> Option<&'static str> {
        let fields = [
            ("m_q", self.m_q),
            ("i_x", self.i_x),
            ("i_y", self.i_y),
            ("i_z", self.i_z),
            ("arm", self.arm),
            ("thrust_factor", self.thrust_factor),
            ("drag_factor", self.drag_factor),
            ("cable_length", self.cable_length),
            ("max_payload", self.max_payload),
            ("u1_max", self.u1_max),
            ("g", self.g),
        ];
        fields
            .iter()
            .find(|(_, v)| !(v.is_finite() && *v > 0.0))
            .map(|(name, _)| *name)
    }

    pub fn zeta_floor(&self) -> f64 {
        ZETA_FLOOR_FRACTION * self.cable_length
    }
}

/// Pose and twist of the quadrotor body.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
}

impl QuadState {
    pub fn at_rest(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            ..Self::default()
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.vx, self.vy, self.vz]
    }
}

/// Load position and velocity relative to the vehicle's centre of gravity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadState {
    pub r: f64,
    pub s: f64,
    pub r_dot: f64,
    pub s_dot: f64,
    /// Load mass, kg.
    pub m_l: f64,
}

impl LoadState {
    pub fn hanging(m_l: f64) -> Self {
        Self {
            m_l,
            ..Self::default()
        }
    }

    /// Vertical distance of the load below the suspension point.
    pub fn zeta(&self, cable_length: f64) -> f64 {
        (cable_length * cable_length - self.r * self.r - self.s * self.s).sqrt()
    }

    /// Time derivative of `zeta`.
    pub fn zeta_dot(&self, cable_length: f64) -> f64 {
        -(self.r * self.r_dot + self.s * self.s_dot) / self.zeta(cable_length)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub quad: QuadState,
    pub load: LoadState,
}

/// Number of integrated scalars in a [`SystemState`] (the load mass and time are parameters).
pub const STATE_DIM: usize = 16;

impl SystemState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let q = &self.quad;
        let l = &self.load;
        [
            q.x,
            q.y,
            q.z,
            q.vx,
            q.vy,
            q.vz,
            q.phi,
            q.theta,
            q.psi,
            q.roll_rate,
            q.pitch_rate,
            q.yaw_rate,
            l.r,
            l.s,
            l.r_dot,
            l.s_dot,
        ]
    }

    /// Rebuilds a state from integrated scalars, keeping time and load mass from `self`.
    pub fn with_array(&self, v: &[f64; STATE_DIM]) -> Self {
        Self {
            t: self.t,
            quad: QuadState {
                x: v[0],
                y: v[1],
                z: v[2],
                vx: v[3],
                vy: v[4],
                vz: v[5],
                phi: v[6],
                theta: v[7],
                psi: v[8],
                roll_rate: v[9],
                pitch_rate: v[10],
                yaw_rate: v[11],
            },
            load: LoadState {
                r: v[12],
                s: v[13],
                r_dot: v[14],
                s_dot: v[15],
                m_l: self.load.m_l,
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Collective thrust and the three attitude control inputs.
///
/// `u2` and `u3` are rotor thrust differences; the rolling and pitching
/// moments are `arm * u2` and `arm * u3`. `u4` is the yawing moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControlInputs {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
}

/// Force the cable exerts on the quadrotor, N, world frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CableForce {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

/// Translational and load accelerations of the coupled system.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoupledAccelerations {
    pub x_dd: f64,
    pub y_dd: f64,
    pub z_dd: f64,
    pub r_dd: f64,
    pub s_dd: f64,
}

impl CoupledAccelerations {
    fn as_vector(&self) -> Vector5<f64> {
        Vector5::new(self.x_dd, self.y_dd, self.z_dd, self.r_dd, self.s_dd)
    }
}

/// Rotor thrusts `b w^2` and drag moments `d w^2`.
pub fn rotor_forces(
    omega: [f64; 4],
    params: &VehicleParams,
) -> Result<([f64; 4], [f64; 4]), DynamicsError> {
    if let Some((index, &value)) = omega.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(DynamicsError::NegativeRotorSpeed { index, value });
    }
    let thrust = omega.map(|w| params.thrust_factor * w * w);
    let drag = omega.map(|w| params.drag_factor * w * w);
    Ok((thrust, drag))
}

pub fn mix_rotors(thrust: [f64; 4], drag: [f64; 4]) -> ControlInputs {
    let [f1, f2, f3, f4] = thrust;
    let [q1, q2, q3, q4] = drag;
    ControlInputs {
        u1: f1 + f2 + f3 + f4,
        u2: -f1 + f3,
        u3: -f2 + f4,
        u4: q1 - q2 + q3 - q4,
    }
}

fn check_attitude(quad: &QuadState) -> Result<(), DynamicsError> {
    let c = quad.phi.cos() * quad.theta.cos();
    if !(c > 1e-6) {
        return Err(DynamicsError::GimbalSingularity {
            phi: quad.phi,
            theta: quad.theta,
        });
    }
    Ok(())
}

fn checked_zeta(load: &LoadState, params: &VehicleParams) -> Result<f64, DynamicsError> {
    let zeta = load.zeta(params.cable_length);
    let floor = params.zeta_floor();
    if !(zeta >= floor) {
        return Err(DynamicsError::SlackCable { zeta, floor });
    }
    Ok(zeta)
}

/// Angular accelerations of the rigid body, shared by both models.
fn rotational_accelerations(quad: &QuadState, u: &ControlInputs, p: &VehicleParams) -> [f64; 3] {
    let (pr, qr, rr) = (quad.roll_rate, quad.pitch_rate, quad.yaw_rate);
    [
        (p.i_y - p.i_z) / p.i_x * qr * rr + p.arm / p.i_x * u.u2,
        (p.i_z - p.i_x) / p.i_y * pr * rr + p.arm / p.i_y * u.u3,
        (p.i_x - p.i_y) / p.i_z * qr * pr + u.u4 / p.i_z,
    ]
}

/// The five coupled relations as a linear system `M a = rhs` in
/// `a = (x_dd, y_dd, z_dd, r_dd, s_dd)`.
fn coupled_system(
    state: &SystemState,
    u1: f64,
    params: &VehicleParams,
    zeta: f64,
) -> (Matrix5<f64>, Vector5<f64>) {
    let q = &state.quad;
    let LoadState {
        r,
        s,
        r_dot: rd,
        s_dot: sd,
        m_l,
    } = state.load;
    let (m_q, g, len) = (params.m_q, params.g, params.cable_length);
    let total = m_q + m_l;
    let l2 = len * len;
    let (z2, z3, z4) = (zeta * zeta, zeta.powi(3), zeta.powi(4));
    let (cphi, sphi) = (q.phi.cos(), q.phi.sin());
    let (cth, sth) = (q.theta.cos(), q.theta.sin());
    let radial = r * rd + s * sd;

    #[rustfmt::skip]
    let m = Matrix5::new(
        total, 0.0,   0.0,        m_l,                 0.0,
        0.0,   total, 0.0,        0.0,                 m_l,
        0.0,   0.0,   total,      m_l * r / zeta,      m_l * s / zeta,
        z4,    0.0,   r * z3,     (l2 - s * s) * z2,   r * s * z2,
        0.0,   z4,    s * z3,     r * s * z2,          (l2 - r * r) * z2,
    );
    let rhs = Vector5::new(
        u1 * cphi * sth,
        -u1 * sphi,
        u1 * cphi * cth
            - m_l * (rd * rd + sd * sd) / zeta
            - m_l * radial * radial / z3
            - g * (m_l * zeta / len + m_q),
        -((r * l2 - r * s * s) * rd * rd
            + (r * l2 - r * r * r) * sd * sd
            + 2.0 * rd * sd * r * r * s
            + r * g * z3),
        -((s * l2 - s * r * r) * sd * sd
            + (s * l2 - s * s * s) * rd * rd
            + 2.0 * rd * sd * s * s * r
            + s * g * z3),
    );
    (m, rhs)
}

/// Solves the mutually coupled vehicle/load acceleration relations.
pub fn coupled_accelerations(
    state: &SystemState,
    u1: f64,
    params: &VehicleParams,
) -> Result<CoupledAccelerations, DynamicsError> {
    let zeta = checked_zeta(&state.load, params)?;
    let (m, rhs) = coupled_system(state, u1, params, zeta);
    let a = m.lu().solve(&rhs).ok_or(DynamicsError::SingularSystem)?;
    if !a.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::SingularSystem);
    }
    Ok(CoupledAccelerations {
        x_dd: a[0],
        y_dd: a[1],
        z_dd: a[2],
        r_dd: a[3],
        s_dd: a[4],
    })
}

/// Largest relative residual of the coupled relations at `accel`: each row's
/// `|M a - rhs|` scaled by the magnitude of its largest term.
pub fn coupled_residual(
    state: &SystemState,
    u1: f64,
    params: &VehicleParams,
    accel: &CoupledAccelerations,
) -> Result<f64, DynamicsError> {
    let zeta = checked_zeta(&state.load, params)?;
    let (m, rhs) = coupled_system(state, u1, params, zeta);
    let a = accel.as_vector();
    let lhs = m * a;
    let worst = (0..5)
        .map(|i| {
            let scale = (0..5)
                .map(|j| (m[(i, j)] * a[j]).abs())
                .fold(rhs[i].abs(), f64::max)
                .max(f64::MIN_POSITIVE);
            (lhs[i] - rhs[i]).abs() / scale
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Second time derivative of `zeta` given the load's relative accelerations.
pub fn zeta_ddot(load: &LoadState, r_dd: f64, s_dd: f64, cable_length: f64) -> f64 {
    let zeta = load.zeta(cable_length);
    let radial = load.r * load.r_dot + load.s * load.s_dot;
    -(load.r_dot * load.r_dot + load.r * r_dd + load.s_dot * load.s_dot + load.s * s_dd) / zeta
        - radial * radial / zeta.powi(3)
}

/// Load relative accelerations for a prescribed vehicle acceleration.
///
/// Solves only the two pendulum relations; with `vehicle_accel = 0` this is
/// the spherical pendulum hanging from a fixed point.
pub fn load_accelerations(
    load: &LoadState,
    vehicle_accel: [f64; 3],
    params: &VehicleParams,
) -> Result<(f64, f64), DynamicsError> {
    let state = SystemState {
        t: 0.0,
        quad: QuadState::default(),
        load: *load,
    };
    let zeta = checked_zeta(load, params)?;
    let (m, rhs) = coupled_system(&state, 0.0, params, zeta);
    let [ax, ay, az] = vehicle_accel;
    let b0 = rhs[3] - m[(3, 0)] * ax - m[(3, 2)] * az;
    let b1 = rhs[4] - m[(4, 1)] * ay - m[(4, 2)] * az;
    let (a00, a01, a10, a11) = (m[(3, 3)], m[(3, 4)], m[(4, 3)], m[(4, 4)]);
    let det = a00 * a11 - a01 * a10;
    if !(det.abs() > 0.0) {
        return Err(DynamicsError::SingularSystem);
    }
    Ok(((b0 * a11 - a01 * b1) / det, (a00 * b1 - a10 * b0) / det))
}

/// Force the cable applies to the vehicle: minus the load mass times the
/// load's absolute acceleration plus gravity.
pub fn cable_force(
    state: &SystemState,
    accel: &CoupledAccelerations,
    params: &VehicleParams,
) -> Result<CableForce, DynamicsError> {
    checked_zeta(&state.load, params)?;
    let m_l = state.load.m_l;
    let zdd = zeta_ddot(&state.load, accel.r_dd, accel.s_dd, params.cable_length);
    Ok(CableForce {
        fx: -m_l * (accel.x_dd + accel.r_dd),
        fy: -m_l * (accel.y_dd + accel.s_dd),
        fz: -m_l * (accel.z_dd - zdd + params.g),
    })
}

/// Time derivative of a bare quadrotor state.
pub fn quad_only_derivative(
    quad: &QuadState,
    u: &ControlInputs,
    params: &VehicleParams,
) -> Result<QuadState, DynamicsError> {
    check_attitude(quad)?;
    let (cphi, sphi) = (quad.phi.cos(), quad.phi.sin());
    let (cth, sth) = (quad.theta.cos(), quad.theta.sin());
    let (cpsi, spsi) = (quad.psi.cos(), quad.psi.sin());
    let k = u.u1 / params.m_q;
    let [p_dd, q_dd, r_dd] = rotational_accelerations(quad, u, params);
    Ok(QuadState {
        x: quad.vx,
        y: quad.vy,
        z: quad.vz,
        vx: (cphi * sth * cpsi + sphi * spsi) * k,
        vy: (cphi * sth * spsi - sphi * cpsi) * k,
        vz: cphi * cth * k - params.g,
        phi: quad.roll_rate,
        theta: quad.pitch_rate,
        psi: quad.yaw_rate,
        roll_rate: p_dd,
        pitch_rate: q_dd,
        yaw_rate: r_dd,
    })
}

/// Time derivative of the coupled vehicle/load state, in [`SystemState::to_array`] order.
pub fn coupled_derivative(
    state: &SystemState,
    u: &ControlInputs,
    params: &VehicleParams,
) -> Result<[f64; STATE_DIM], DynamicsError> {
    let q = &state.quad;
    check_attitude(q)?;
    let a = coupled_accelerations(state, u.u1, params)?;
    let [p_dd, q_dd, r_dd] = rotational_accelerations(q, u, params);
    let l = &state.load;
    Ok([
        q.vx,
        q.vy,
        q.vz,
        a.x_dd,
        a.y_dd,
        a.z_dd,
        q.roll_rate,
        q.pitch_rate,
        q.yaw_rate,
        p_dd,
        q_dd,
        r_dd,
        l.r_dot,
        l.s_dot,
        a.r_dd,
        a.s_dd,
    ])
}

/// Mechanical energy of the load relative to a fixed suspension point, J.
pub fn pendulum_energy(load: &LoadState, params: &VehicleParams) -> f64 {
    let zd = load.zeta_dot(params.cable_length);
    0.5 * load.m_l * (load.r_dot * load.r_dot + load.s_dot * load.s_dot + zd * zd)
        - load.m_l * params.g * load.zeta(params.cable_length)
}
