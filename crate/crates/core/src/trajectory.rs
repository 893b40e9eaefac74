//! Reference trajectories built from trapezoidal velocity legs.

use serde::{Deserialize, Serialize};

use crate::error::TrajectoryError;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReferencePoint {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub acc: [f64; 3],
    pub yaw: f64,
}

/// Accelerate / cruise / decelerate profile for one straight leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapezoidProfile {
    pub a_peak: f64,
    pub v_cruise: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
    /// Time allotted to one leg, including any hold after deceleration.
    pub t_leg: f64,
}

impl Default for TrapezoidProfile {
    fn default() -> Self {
        Self {
            a_peak: 0.032,
            v_cruise: 0.08,
            t_accel: 2.5,
            t_cruise: 10.0,
            t_leg: 15.0,
        }
    }
}

impl TrapezoidProfile {
    pub fn leg_length(&self) -> f64 {
        self.a_peak * self.t_accel * self.t_accel + self.v_cruise * self.t_cruise
    }

    /// Time at which deceleration begins, measured from the start of a leg.
    pub fn decel_start(&self) -> f64 {
        self.t_accel + self.t_cruise
    }

    pub fn is_consistent(&self) -> bool {
        let positive = [self.a_peak, self.v_cruise, self.t_accel, self.t_leg]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        positive
            && self.t_cruise >= 0.0
            && (self.v_cruise - self.a_peak * self.t_accel).abs() <= 1e-9 * self.v_cruise
            && 2.0 * self.t_accel + self.t_cruise <= self.t_leg + 1e-12
    }

    /// Displacement, speed and acceleration along the leg at `tau` seconds into it.
    pub fn sample(&self, tau: f64) -> (f64, f64, f64) {
        let (a, v, ta) = (self.a_peak, self.v_cruise, self.t_accel);
        let cruise_end = self.decel_start();
        if tau <= 0.0 {
            (0.0, 0.0, if tau == 0.0 { a } else { 0.0 })
        } else if tau < ta {
            (0.5 * a * tau * tau, a * tau, a)
        } else if tau < cruise_end {
            (0.5 * a * ta * ta + v * (tau - ta), v, 0.0)
        } else if tau < cruise_end + ta {
            let d = tau - cruise_end;
            (
                0.5 * a * ta * ta + v * self.t_cruise + v * d - 0.5 * a * d * d,
                v - a * d,
                -a,
            )
        } else {
            (self.leg_length(), 0.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Four legs +X, +Y, -X, -Y followed by a hold at the origin.
    Square,
    /// One +X leg followed by a hold at its end point.
    SingleLeg,
    /// Constant reference at the start point.
    Hover,
}

impl TrajectoryKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Square => "square",
            Self::SingleLeg => "single_leg",
            Self::Hover => "hover",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub profile: TrapezoidProfile,
    pub z_hold: f64,
    /// Last valid reference time, s.
    pub end: f64,
}

const SQUARE_DIRECTIONS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];

impl Trajectory {
    pub fn new(kind: TrajectoryKind, profile: TrapezoidProfile, z_hold: f64) -> Self {
        Self {
            kind,
            profile,
            z_hold,
            end: 5.0 * profile.t_leg,
        }
    }

    pub fn sample(&self, t: f64) -> Result<ReferencePoint, TrajectoryError> {
        if !(0.0..=self.end).contains(&t) {
            return Err(TrajectoryError::OutOfRange { t, end: self.end });
        }
        Ok(match self.kind {
            TrajectoryKind::Square => square_reference(t, &self.profile, self.z_hold),
            TrajectoryKind::SingleLeg => single_leg_reference(t, &self.profile, self.z_hold),
            TrajectoryKind::Hover => ReferencePoint {
                pos: [0.0, 0.0, self.z_hold],
                ..Default::default()
            },
        })
    }

    /// Like [`Self::sample`], but holds the end point for times past `end`.
    /// Used for predictive look-ahead near the end of a run.
    pub fn sample_clamped(&self, t: f64) -> ReferencePoint {
        self.sample(t.clamp(0.0, self.end))
            .expect("clamped time is in range")
    }
}

fn leg_point(
    corner: [f64; 2],
    dir: [f64; 2],
    tau: f64,
    profile: &TrapezoidProfile,
    z_hold: f64,
) -> ReferencePoint {
    let (s, v, a) = profile.sample(tau);
    ReferencePoint {
        pos: [corner[0] + dir[0] * s, corner[1] + dir[1] * s, z_hold],
        vel: [dir[0] * v, dir[1] * v, 0.0],
        acc: [dir[0] * a, dir[1] * a, 0.0],
        yaw: 0.0,
    }
}

/// Square circuit: four legs of `profile.t_leg` each, then a hold at the origin.
///
/// Times are not range-checked here; [`Trajectory::sample`] does that.
pub fn square_reference(t: f64, profile: &TrapezoidProfile, z_hold: f64) -> ReferencePoint {
    let d = profile.leg_length();
    let corners = [[0.0, 0.0], [d, 0.0], [d, d], [0.0, d]];
    let stage = (t / profile.t_leg).floor().max(0.0) as usize;
    if stage >= 4 {
        return ReferencePoint {
            pos: [0.0, 0.0, z_hold],
            ..Default::default()
        };
    }
    let tau = t - stage as f64 * profile.t_leg;
    leg_point(
        corners[stage],
        SQUARE_DIRECTIONS[stage],
        tau,
        profile,
        z_hold,
    )
}

pub fn single_leg_reference(t: f64, profile: &TrapezoidProfile, z_hold: f64) -> ReferencePoint {
    if t >= profile.t_leg {
        return ReferencePoint {
            pos: [profile.leg_length(), 0.0, z_hold],
            ..Default::default()
        };
    }
    leg_point([0.0, 0.0], [1.0, 0.0], t, profile, z_hold)
}
