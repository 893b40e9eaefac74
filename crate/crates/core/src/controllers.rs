//! Cascaded position/attitude controllers.
//!
//! Every controller here is designed on the bare quadrotor model: its inputs
//! are the measured [`QuadState`] and the reference, never the load state or
//! mass. The load reaches the controllers only through the vehicle motion.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInputs, QuadState, VehicleParams};
use crate::error::ControlError;
use crate::trajectory::{ReferencePoint, Trajectory};

/// Default limit on commanded roll and pitch, 20 degrees.
pub const DEFAULT_ANGLE_CAP: f64 = 20.0 * std::f64::consts::PI / 180.0;

/// Thrust floor used when a position law asks for non-positive thrust, N.
pub const THRUST_FLOOR: f64 = 1e-3;

/// Bit set recording which limits were active on a control tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SaturationFlags(pub u8);

impl SaturationFlags {
    pub const NONE: Self = Self(0);
    /// Collective thrust clipped at the ceiling.
    pub const THRUST_HIGH: Self = Self(1);
    /// Collective thrust raised to the floor.
    pub const THRUST_LOW: Self = Self(2);
    /// Commanded roll or pitch clipped.
    pub const ANGLE: Self = Self(4);

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn any(self) -> bool {
        self.0 != 0
    }
}

impl std::ops::BitOr for SaturationFlags {
    type Output = Self;

    fn bitor(self, rhs: Self) -> Self {
        Self(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for SaturationFlags {
    fn bitor_assign(&mut self, rhs: Self) {
        self.0 |= rhs.0;
    }
}

/// Output of a position loop: thrust plus the attitude the inner loop should hold.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AttitudeCommand {
    pub phi_d: f64,
    pub theta_d: f64,
    pub psi_d: f64,
    pub u1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControlOutput {
    pub inputs: ControlInputs,
    pub command: AttitudeCommand,
    pub flags: SaturationFlags,
}

/// A stateful cascade controller; one instance per simulation run.
pub trait Controller: Send {
    /// Computes the inputs to hold over the next control period.
    fn update(
        &mut self,
        t: f64,
        trajectory: &Trajectory,
        quad: &QuadState,
    ) -> Result<ControlOutput, ControlError>;
}

/// Clips collective thrust to `[THRUST_FLOOR, u1_max]`.
pub fn saturate_thrust(u1: f64, params: &VehicleParams) -> (f64, SaturationFlags) {
    if !(u1 > THRUST_FLOOR) {
        (THRUST_FLOOR, SaturationFlags::THRUST_LOW)
    } else if u1 > params.u1_max {
        (params.u1_max, SaturationFlags::THRUST_HIGH)
    } else {
        (u1, SaturationFlags::NONE)
    }
}

/// Roll and pitch that point thrust `u1` so the vehicle accelerates by
/// `(accel_x, accel_y)` horizontally, at zero yaw.
///
/// Both asin arguments are clipped to [-1, 1] and both angles to
/// `±angle_cap`; the returned flag reports whether any clipping happened.
pub fn desired_angles(
    accel_x: f64,
    accel_y: f64,
    u1: f64,
    m_q: f64,
    angle_cap: f64,
) -> Result<(f64, f64, SaturationFlags), ControlError> {
    if !(u1 > 0.0) {
        return Err(ControlError::NonPositiveThrust(u1));
    }
    let mut flags = SaturationFlags::NONE;
    let mut clip_unit = |v: f64| {
        if v.abs() > 1.0 {
            flags |= SaturationFlags::ANGLE;
        }
        v.clamp(-1.0, 1.0)
    };
    let phi = clip_unit(-m_q * accel_y / u1).asin();
    let theta = clip_unit(m_q * accel_x / (u1 * phi.cos())).asin();
    let mut cap = |a: f64| {
        if a.abs() > angle_cap {
            flags |= SaturationFlags::ANGLE;
        }
        a.clamp(-angle_cap, angle_cap)
    };
    let (phi, theta) = (cap(phi), cap(theta));
    Ok((phi, theta, flags))
}

/// Thrust from a vertical acceleration demand, tilt-compensated and saturated.
fn collective_thrust(
    accel_z: f64,
    quad: &QuadState,
    params: &VehicleParams,
) -> (f64, SaturationFlags) {
    let tilt = quad.phi.cos() * quad.theta.cos();
    saturate_thrust(params.m_q * (params.g + accel_z) / tilt, params)
}

/// Which reference derivatives enter the PD position law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedforward {
    /// Velocity error and reference acceleration.
    Full,
    /// Velocity error only.
    Velocity,
    /// Neither: the derivative term acts on the measured velocity.
    None,
}

impl Feedforward {
    /// Multipliers on the reference velocity and acceleration.
    pub fn weights(self) -> (f64, f64) {
        match self {
            Self::Full => (1.0, 1.0),
            Self::Velocity => (1.0, 0.0),
            Self::None => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdGains {
    pub kpx: f64,
    pub kpy: f64,
    pub kpz: f64,
    pub kdx: f64,
    pub kdy: f64,
    pub kdz: f64,
    pub kpp: f64,
    pub kpt: f64,
    pub kpps: f64,
    pub kdp: f64,
    pub kdt: f64,
    pub kdps: f64,
    pub feedforward: Feedforward,
    /// Fraction of the backward-differenced command rate used as the
    /// attitude rate reference; zero damps the bare body rate.
    pub command_rate_gain: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kpx: 10.0,
            kpy: 10.0,
            kpz: 20.0,
            kdx: 8.0,
            kdy: 8.0,
            kdz: 15.0,
            kpp: 50.0,
            kpt: 50.0,
            kpps: 20.0,
            kdp: 20.0,
            kdt: 20.0,
            kdps: 15.0,
            feedforward: Feedforward::None,
            command_rate_gain: 1.0,
        }
    }
}

impl PdGains {
    pub fn first_invalid_field(&self) -> Option<&'static str> {
        let fields = [
            ("kpx", self.kpx),
            ("kpy", self.kpy),
            ("kpz", self.kpz),
            ("kdx", self.kdx),
            ("kdy", self.kdy),
            ("kdz", self.kdz),
            ("kpp", self.kpp),
            ("kpt", self.kpt),
            ("kpps", self.kpps),
            ("kdp", self.kdp),
            ("kdt", self.kdt),
            ("kdps", self.kdps),
        ];
        fields
            .iter()
            .find(|(_, v)| !(v.is_finite() && *v > 0.0))
            .map(|(n, _)| *n)
            .or_else(|| {
                (!(0.0..=1.0).contains(&self.command_rate_gain)).then_some("command_rate_gain")
            })
    }
}

/// PD position law; `gains.feedforward` selects the reference terms.
pub fn pd_position(
    reference: &ReferencePoint,
    quad: &QuadState,
    gains: &PdGains,
    params: &VehicleParams,
    angle_cap: f64,
) -> Result<(AttitudeCommand, SaturationFlags), ControlError> {
    let pos = quad.position();
    let vel = quad.velocity();
    let kp = [gains.kpx, gains.kpy, gains.kpz];
    let kd = [gains.kdx, gains.kdy, gains.kdz];
    let (use_vel, use_acc) = gains.feedforward.weights();
    let accel: [f64; 3] = std::array::from_fn(|i| {
        use_acc * reference.acc[i]
            + kd[i] * (use_vel * reference.vel[i] - vel[i])
            + kp[i] * (reference.pos[i] - pos[i])
    });
    let (u1, mut flags) = collective_thrust(accel[2], quad, params);
    let (phi_d, theta_d, angle_flags) =
        desired_angles(accel[0], accel[1], u1, params.m_q, angle_cap)?;
    flags |= angle_flags;
    Ok((
        AttitudeCommand {
            phi_d,
            theta_d,
            psi_d: reference.yaw,
            u1,
        },
        flags,
    ))
}

/// PD attitude law. `command_rate` holds the rate references (phi, theta,
/// psi); pass zeros for pure rate damping.
pub fn pd_attitude(
    command: &AttitudeCommand,
    command_rate: &[f64; 3],
    quad: &QuadState,
    gains: &PdGains,
    params: &VehicleParams,
) -> ControlInputs {
    let [dphi, dtheta, dpsi] = *command_rate;
    ControlInputs {
        u1: command.u1,
        u2: params.i_x / params.arm
            * (gains.kpp * (command.phi_d - quad.phi) + gains.kdp * (dphi - quad.roll_rate)),
        u3: params.i_y / params.arm
            * (gains.kpt * (command.theta_d - quad.theta) + gains.kdt * (dtheta - quad.pitch_rate)),
        u4: params.i_z
            * (gains.kpps * (command.psi_d - quad.psi) + gains.kdps * (dpsi - quad.yaw_rate)),
    }
}

#[derive(Debug, Clone)]
pub struct PdController {
    pub gains: PdGains,
    pub params: VehicleParams,
    pub angle_cap: f64,
    dt: f64,
    previous: Option<[f64; 3]>,
}

impl PdController {
    pub fn new(gains: PdGains, params: VehicleParams, dt_control: f64) -> Self {
        Self {
            gains,
            params,
            angle_cap: DEFAULT_ANGLE_CAP,
            dt: dt_control,
            previous: None,
        }
    }
}

impl Controller for PdController {
    fn update(
        &mut self,
        t: f64,
        trajectory: &Trajectory,
        quad: &QuadState,
    ) -> Result<ControlOutput, ControlError> {
        let reference = trajectory.sample(t)?;
        let (command, flags) =
            pd_position(&reference, quad, &self.gains, &self.params, self.angle_cap)?;
        let angles = [command.phi_d, command.theta_d, command.psi_d];
        let kappa = self.gains.command_rate_gain;
        let rate = match self.previous {
            Some(prev) => std::array::from_fn(|i| kappa * (angles[i] - prev[i]) / self.dt),
            None => [0.0; 3],
        };
        self.previous = Some(angles);
        let inputs = pd_attitude(&command, &rate, quad, &self.gains, &self.params);
        Ok(ControlOutput {
            inputs,
            command,
            flags,
        })
    }
}

/// Index of each tracked variable in [`SmcGains`] arrays.
pub mod axis {
    pub const PHI: usize = 0;
    pub const THETA: usize = 1;
    pub const PSI: usize = 2;
    pub const X: usize = 3;
    pub const Y: usize = 4;
    pub const Z: usize = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcGains {
    /// Reaching gains, ordered phi, theta, psi, x, y, z.
    pub k: [f64; 6],
    /// Surface slopes, same order.
    pub lambda: [f64; 6],
    /// Boundary-layer half widths on each surface; zero gives a pure sign law.
    pub boundary_layer: [f64; 6],
    /// Reference derivatives used by the position surfaces.
    pub feedforward: Feedforward,
}

impl SmcGains {
    pub fn first_invalid_field(&self) -> Option<&'static str> {
        let positive = |v: &[f64; 6]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !positive(&self.k) {
            Some("k")
        } else if !positive(&self.lambda) {
            Some("lambda")
        } else if !self
            .boundary_layer
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
        {
            Some("boundary_layer")
        } else {
            None
        }
    }
}

impl Default for SmcGains {
    fn default() -> Self {
        Self {
            k: [0.4, 0.4, 0.4, 0.6, 0.6, 0.4],
            lambda: [0.5, 0.5, 0.5, 2.25, 2.25, 5.0],
            boundary_layer: [0.05, 0.05, 0.05, 0.1, 0.1, 0.05],
            feedforward: Feedforward::None,
        }
    }
}

/// `S_i = de_i + lambda_i * e_i` for each `(e_i, de_i)` pair.
pub fn sliding_surfaces(errors: &[(f64, f64); 6], lambda: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| errors[i].1 + lambda[i] * errors[i].0)
}

/// Sign of `s` with `sign(0) = 0`, or a linear ramp inside `|s| < width`.
pub fn switching(s: f64, width: f64) -> f64 {
    if width > 0.0 {
        (s / width).clamp(-1.0, 1.0)
    } else if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sliding-mode position loop.
pub fn smc_position(
    reference: &ReferencePoint,
    quad: &QuadState,
    gains: &SmcGains,
    params: &VehicleParams,
    angle_cap: f64,
) -> Result<(AttitudeCommand, SaturationFlags), ControlError> {
    use axis::{X, Y, Z};
    let pos = quad.position();
    let vel = quad.velocity();
    let (use_vel, use_acc) = gains.feedforward.weights();
    let e: [(f64, f64); 3] = std::array::from_fn(|i| {
        (
            reference.pos[i] - pos[i],
            use_vel * reference.vel[i] - vel[i],
        )
    });
    let demand = |i: usize, idx: usize| {
        let s = e[i].1 + gains.lambda[idx] * e[i].0;
        use_acc * reference.acc[i]
            + gains.lambda[idx] * e[i].1
            + gains.k[idx] * switching(s, gains.boundary_layer[idx])
    };
    let (ax, ay, az) = (demand(0, X), demand(1, Y), demand(2, Z));
    let (u1, mut flags) = collective_thrust(az, quad, params);
    let (phi_d, theta_d, angle_flags) = desired_angles(ax, ay, u1, params.m_q, angle_cap)?;
    flags |= angle_flags;
    Ok((
        AttitudeCommand {
            phi_d,
            theta_d,
            psi_d: reference.yaw,
            u1,
        },
        flags,
    ))
}

/// First and second derivatives of the commanded attitude, ordered phi, theta, psi.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CommandRates {
    pub rate: [f64; 3],
    pub accel: [f64; 3],
}

/// Sliding-mode attitude loop with gyroscopic decoupling.
pub fn smc_attitude(
    command: &AttitudeCommand,
    rates: &CommandRates,
    quad: &QuadState,
    gains: &SmcGains,
    params: &VehicleParams,
) -> ControlInputs {
    let angle = [quad.phi, quad.theta, quad.psi];
    let body_rate = [quad.roll_rate, quad.pitch_rate, quad.yaw_rate];
    let desired = [command.phi_d, command.theta_d, command.psi_d];
    let errors: [(f64, f64); 3] =
        std::array::from_fn(|i| (desired[i] - angle[i], rates.rate[i] - body_rate[i]));
    let demand = |i: usize| {
        let s = errors[i].1 + gains.lambda[i] * errors[i].0;
        gains.k[i] * switching(s, gains.boundary_layer[i])
            + rates.accel[i]
            + gains.lambda[i] * errors[i].1
    };
    let (p, q, r) = (quad.roll_rate, quad.pitch_rate, quad.yaw_rate);
    let (ix, iy, iz) = (params.i_x, params.i_y, params.i_z);
    ControlInputs {
        u1: command.u1,
        u2: ix / params.arm * (demand(0) - (iy - iz) / ix * q * r),
        u3: iy / params.arm * (demand(1) - (iz - ix) / iy * p * r),
        u4: iz * (demand(2) - (ix - iy) / iz * p * q),
    }
}

/// Full sliding-mode cascade for one tick with externally supplied command rates.
pub fn smc_control(
    reference: &ReferencePoint,
    rates: &CommandRates,
    quad: &QuadState,
    gains: &SmcGains,
    params: &VehicleParams,
    angle_cap: f64,
) -> Result<ControlOutput, ControlError> {
    let (command, flags) = smc_position(reference, quad, gains, params, angle_cap)?;
    let inputs = smc_attitude(&command, rates, quad, gains, params);
    Ok(ControlOutput {
        inputs,
        command,
        flags,
    })
}

/// Sliding-mode cascade that differentiates its own attitude commands by
/// backward differences at the control period.
#[derive(Debug, Clone)]
pub struct SmcController {
    pub gains: SmcGains,
    pub params: VehicleParams,
    pub angle_cap: f64,
    dt: f64,
    previous: Option<([f64; 3], [f64; 3])>,
}

impl SmcController {
    pub fn new(gains: SmcGains, params: VehicleParams, dt_control: f64) -> Self {
        Self {
            gains,
            params,
            angle_cap: DEFAULT_ANGLE_CAP,
            dt: dt_control,
            previous: None,
        }
    }
}

impl Controller for SmcController {
    fn update(
        &mut self,
        t: f64,
        trajectory: &Trajectory,
        quad: &QuadState,
    ) -> Result<ControlOutput, ControlError> {
        let reference = trajectory.sample(t)?;
        let (command, flags) =
            smc_position(&reference, quad, &self.gains, &self.params, self.angle_cap)?;
        let angles = [command.phi_d, command.theta_d, command.psi_d];
        let rates = match self.previous {
            None => CommandRates::default(),
            Some((prev_angles, prev_rate)) => {
                let rate: [f64; 3] =
                    std::array::from_fn(|i| (angles[i] - prev_angles[i]) / self.dt);
                let accel = std::array::from_fn(|i| (rate[i] - prev_rate[i]) / self.dt);
                CommandRates { rate, accel }
            }
        };
        self.previous = Some((angles, rates.rate));
        let inputs = smc_attitude(&command, &rates, quad, &self.gains, &self.params);
        Ok(ControlOutput {
            inputs,
            command,
            flags,
        })
    }
}
