//! Evaluation criteria extracted from simulation logs, and the thrust-limit
//! quantities that bound the load mass.

use crate::error::MetricsError;
use crate::sim::LogRow;

/// Default stabilization band, degrees.
pub const DEFAULT_BAND_DEG: f64 = 0.2;
/// Default time an angle must stay inside the band to count as settled, s.
pub const DEFAULT_DWELL: f64 = 1.0;
/// Horizontal distance to the final reference that counts as arrived, m.
pub const ARRIVAL_RADIUS: f64 = 0.01;

/// Second difference of the reference position above which it counts as accelerating, m.
const ACCEL_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttitudeAxis {
    Roll,
    Pitch,
}

impl AttitudeAxis {
    pub fn angle(&self, row: &LogRow) -> f64 {
        match self {
            Self::Roll => row.quad.phi,
            Self::Pitch => row.quad.theta,
        }
    }
}

/// Settling of one attitude angle after a change in the reference motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTime {
    pub axis: AttitudeAxis,
    /// Time of the reference change, s.
    pub t_event: f64,
    /// First band exit after the change; `None` if the angle never left the band.
    pub t_start: Option<f64>,
    /// Stabilization time, s.
    pub time: f64,
    /// False when the angle had not settled by the end of the stage.
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Largest horizontal tracking error over both axes, m.
    pub e_max: f64,
    pub e_max_x: f64,
    pub e_max_y: f64,
    /// Largest absolute roll and pitch, degrees.
    pub phi_max: f64,
    pub theta_max: f64,
    /// Largest stabilization time over all stages, s.
    pub t_smax: f64,
    pub stages: Vec<StageTime>,
    /// Time after which the vehicle stays within [`ARRIVAL_RADIUS`] of its
    /// final reference; `None` if it never does.
    pub arrival_time: Option<f64>,
    /// Control ticks with any limit active.
    pub saturation_count: usize,
}

impl RunMetrics {
    pub fn unsettled_stages(&self) -> usize {
        self.stages.iter().filter(|s| !s.settled).count()
    }
}

fn non_empty(rows: &[LogRow]) -> Result<(), MetricsError> {
    if rows.is_empty() {
        Err(MetricsError::EmptyLog)
    } else {
        Ok(())
    }
}

/// Largest `|err_x|`, `|err_y|` and their maximum.
pub fn max_tracking_error(rows: &[LogRow]) -> Result<(f64, f64, f64), MetricsError> {
    non_empty(rows)?;
    let ex = rows.iter().map(|r| r.error[0].abs()).fold(0.0, f64::max);
    let ey = rows.iter().map(|r| r.error[1].abs()).fold(0.0, f64::max);
    Ok((ex, ey, ex.max(ey)))
}

/// Largest absolute roll and pitch, degrees.
pub fn max_attitude(rows: &[LogRow]) -> Result<(f64, f64), MetricsError> {
    non_empty(rows)?;
    let phi = rows.iter().map(|r| r.quad.phi.abs()).fold(0.0, f64::max);
    let theta = rows.iter().map(|r| r.quad.theta.abs()).fold(0.0, f64::max);
    Ok((phi.to_degrees(), theta.to_degrees()))
}

/// Sample indices where the reference starts to accelerate along an axis,
/// either from rest or out of a constant-velocity segment.
///
/// Motion along x is produced by pitch and motion along y by roll. The
/// reference is taken to be at rest before the first sample.
pub fn stage_events(rows: &[LogRow]) -> Vec<(usize, AttitudeAxis)> {
    let mut events = Vec::new();
    for (axis, attitude) in [(0, AttitudeAxis::Pitch), (1, AttitudeAxis::Roll)] {
        let p = |k: usize| rows[k].reference[axis];
        let mut was_accelerating = false;
        for k in 1..rows.len().saturating_sub(1) {
            let accelerating = (p(k + 1) - 2.0 * p(k) + p(k - 1)).abs() > ACCEL_THRESHOLD;
            if accelerating && !was_accelerating {
                events.push((k - 1, attitude));
            }
            was_accelerating = accelerating;
        }
    }
    events.sort_by_key(|(k, axis)| (*k, *axis == AttitudeAxis::Roll));
    events
}

/// Stabilization of `angle(row)` after the event at `rows[event]`, searching
/// for the band exit and re-entry before `rows[window_end]`.
///
/// The settle point is the first sample after which the angle stays in the
/// band for `dwell` seconds (or up to the end of the log).
pub fn stabilization_time(
    rows: &[LogRow],
    axis: AttitudeAxis,
    event: usize,
    window_end: usize,
    band_deg: f64,
    dwell: f64,
) -> StageTime {
    let band = band_deg.to_radians();
    let inside = |k: usize| axis.angle(&rows[k]).abs() <= band;
    let t_event = rows[event].t;
    let last = window_end.min(rows.len() - 1);
    let Some(start) = (event..=last).find(|&k| !inside(k)) else {
        return StageTime {
            axis,
            t_event,
            t_start: None,
            time: 0.0,
            settled: true,
        };
    };
    let mut k = start;
    while k <= last {
        if inside(k) {
            let mut j = k;
            let held = |j: usize| rows[j].t - rows[k].t >= dwell - 1e-9;
            while j + 1 < rows.len() && inside(j + 1) && !held(j) {
                j += 1;
            }
            if j + 1 == rows.len() || held(j) {
                return StageTime {
                    axis,
                    t_event,
                    t_start: Some(rows[start].t),
                    time: rows[k].t - rows[start].t,
                    settled: true,
                };
            }
            k = j + 1;
        } else {
            k += 1;
        }
    }
    StageTime {
        axis,
        t_event,
        t_start: Some(rows[start].t),
        time: rows[last].t - rows[start].t,
        settled: false,
    }
}

/// Stabilization times for every stage change in the log and their maximum.
pub fn stabilization_times(
    rows: &[LogRow],
    band_deg: f64,
    dwell: f64,
) -> Result<(Vec<StageTime>, f64), MetricsError> {
    non_empty(rows)?;
    let events = stage_events(rows);
    let stages: Vec<StageTime> = events
        .iter()
        .map(|&(k, axis)| {
            let next = events
                .iter()
                .filter(|(j, a)| *a == axis && *j > k)
                .map(|(j, _)| *j)
                .min()
                .unwrap_or(rows.len() - 1);
            stabilization_time(rows, axis, k, next, band_deg, dwell)
        })
        .collect();
    let t_smax = stages.iter().map(|s| s.time).fold(0.0, f64::max);
    Ok((stages, t_smax))
}

/// First time after which the horizontal distance to the last reference
/// point stays below `radius` until the end of the log.
pub fn arrival_time(rows: &[LogRow], radius: f64) -> Result<Option<f64>, MetricsError> {
    non_empty(rows)?;
    let goal = rows[rows.len() - 1].reference;
    let near = |r: &LogRow| (r.quad.x - goal[0]).hypot(r.quad.y - goal[1]) < radius;
    let outside = rows.iter().rposition(|r| !near(r));
    Ok(match outside {
        None => Some(rows[0].t),
        Some(k) if k + 1 < rows.len() => Some(rows[k + 1].t),
        Some(_) => None,
    })
}

pub fn compute_metrics(
    rows: &[LogRow],
    band_deg: f64,
    dwell: f64,
) -> Result<RunMetrics, MetricsError> {
    let (e_max_x, e_max_y, e_max) = max_tracking_error(rows)?;
    let (phi_max, theta_max) = max_attitude(rows)?;
    let (stages, t_smax) = stabilization_times(rows, band_deg, dwell)?;
    Ok(RunMetrics {
        e_max,
        e_max_x,
        e_max_y,
        phi_max,
        theta_max,
        t_smax,
        stages,
        arrival_time: arrival_time(rows, ARRIVAL_RADIUS)?,
        saturation_count: rows.iter().filter(|r| r.flags.any()).count(),
    })
}

/// Largest load that still leaves enough thrust to tilt for `a_desired`:
/// `U1 cos(atan(a / g)) / g - m_q`.
pub fn critical_motion_mass(u1_max: f64, a_desired: f64, m_q: f64, g: f64) -> f64 {
    u1_max * (a_desired / g).atan().cos() / g - m_q
}

/// Largest horizontal acceleration reachable with load `m_l`:
/// `sqrt(U1^2 - ((m_q + m_l) g)^2) / (m_q + m_l)`.
pub fn max_feasible_accel(u1_max: f64, m_q: f64, m_l: f64, g: f64) -> Result<f64, MetricsError> {
    let total = m_q + m_l;
    let weight = total * g;
    let radicand = u1_max * u1_max - weight * weight;
    if radicand < 0.0 {
        return Err(MetricsError::Infeasible(format!(
            "weight {weight:.3} N exceeds the thrust ceiling {u1_max:.3} N"
        )));
    }
    Ok(radicand.sqrt() / total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalMassReport {
    pub m_cm: f64,
    /// Largest acceleration available when carrying `m_cm`; `None` if infeasible.
    pub a_cm: Option<f64>,
    /// False when the ceiling cannot even carry the vehicle itself.
    pub feasible: bool,
}

pub fn critical_mass_report(u1_max: f64, a_desired: f64, m_q: f64, g: f64) -> CriticalMassReport {
    let m_cm = critical_motion_mass(u1_max, a_desired, m_q, g);
    let feasible = m_cm > 0.0;
    let a_cm = if feasible {
        max_feasible_accel(u1_max, m_q, m_cm, g).ok()
    } else {
        None
    };
    CriticalMassReport {
        m_cm,
        a_cm,
        feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadState;
    use approx::assert_relative_eq;

    fn synthetic(n: usize, dt: f64, f: impl Fn(f64) -> (f64, f64, [f64; 3])) -> Vec<LogRow> {
        (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                let (phi, x, reference) = f(t);
                LogRow {
                    t,
                    quad: QuadState {
                        x,
                        phi,
                        ..Default::default()
                    },
                    reference,
                    error: [reference[0] - x, reference[1], reference[2]],
                    ..Default::default()
                }
            })
            .collect()
    }

    #[test]
    fn constant_offset_error() {
        let rows = synthetic(100, 0.01, |_| (0.0, 0.98, [1.0, 0.0, 1.5]));
        let (ex, ey, e) = max_tracking_error(&rows).unwrap();
        assert_relative_eq!(ex, 0.02, epsilon = 1e-12);
        assert_eq!(ey, 0.0);
        assert_relative_eq!(e, 0.02, epsilon = 1e-12);
        let zero = synthetic(10, 0.01, |_| (0.0, 1.0, [1.0, 0.0, 1.5]));
        assert_eq!(max_tracking_error(&zero).unwrap().2, 0.0);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert_eq!(max_tracking_error(&[]), Err(MetricsError::EmptyLog));
        assert_eq!(max_attitude(&[]), Err(MetricsError::EmptyLog));
        assert!(compute_metrics(&[], 0.2, 1.0).is_err());
    }

    #[test]
    fn sinusoidal_roll_peak() {
        let rows = synthetic(1001, 0.01, |t| (2f64.to_radians() * t.sin(), 0.0, [0.0; 3]));
        let (phi, theta) = max_attitude(&rows).unwrap();
        assert!((phi - 2.0).abs() < 1e-6);
        assert_eq!(theta, 0.0);
    }

    #[test]
    fn exponential_decay_settles_at_log_ratio() {
        let rows = synthetic(10_001, 1e-3, |t| {
            (5f64.to_radians() * (-t).exp(), 0.0, [0.0; 3])
        });
        let st = stabilization_time(&rows, AttitudeAxis::Roll, 0, rows.len() - 1, 0.2, 1.0);
        assert!(st.settled);
        assert_eq!(st.t_start, Some(0.0));
        assert!((st.time - 25f64.ln()).abs() < 2e-3, "{}", st.time);
    }

    #[test]
    fn level_flight_needs_no_settling() {
        let rows = synthetic(500, 0.01, |_| (0.0, 0.0, [0.0; 3]));
        let st = stabilization_time(&rows, AttitudeAxis::Roll, 0, 499, 0.2, 1.0);
        assert_eq!(st.time, 0.0);
        assert!(st.settled);
    }

    #[test]
    fn persistent_tilt_is_unsettled() {
        let rows = synthetic(500, 0.01, |_| (1f64.to_radians(), 0.0, [0.0; 3]));
        let st = stabilization_time(&rows, AttitudeAxis::Roll, 100, 300, 0.2, 1.0);
        assert!(!st.settled);
        assert_relative_eq!(st.time, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn events_follow_reference_accelerations() {
        use crate::trajectory::{Trajectory, TrajectoryKind, TrapezoidProfile};
        let tr = Trajectory::new(TrajectoryKind::Square, TrapezoidProfile::default(), 1.5);
        let rows = synthetic(7501, 0.01, |t| (0.0, 0.0, tr.sample(t).unwrap().pos));
        let events = stage_events(&rows);
        for (axis, expected) in [
            (AttitudeAxis::Pitch, [0.0, 12.5, 30.0, 42.5]),
            (AttitudeAxis::Roll, [15.0, 27.5, 45.0, 57.5]),
        ] {
            let times: Vec<f64> = events
                .iter()
                .filter(|(_, a)| *a == axis)
                .map(|(k, _)| rows[*k].t)
                .collect();
            assert_eq!(times.len(), expected.len(), "{times:?}");
            for (got, want) in times.iter().zip(expected) {
                assert!((got - want).abs() <= 0.011, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn arrival_after_last_excursion() {
        let rows = synthetic(1001, 0.01, |t| (0.0, (t / 5.0).min(1.0), [1.0, 0.0, 1.5]));
        let t = arrival_time(&rows, 0.01).unwrap().unwrap();
        assert!((t - 4.96).abs() < 0.011, "{t}");
        let never = synthetic(10, 0.01, |_| (0.0, 0.0, [1.0, 0.0, 1.5]));
        assert_eq!(arrival_time(&never, 0.01).unwrap(), None);
    }

    #[test]
    fn critical_mass_values() {
        assert_relative_eq!(
            critical_motion_mass(14.72, 0.0, 1.0, 9.81),
            14.72 / 9.81 - 1.0
        );
        assert_relative_eq!(
            critical_motion_mass(9.81, 0.0, 1.0, 9.81),
            0.0,
            epsilon = 1e-15
        );
        assert!((critical_motion_mass(14.72, 0.032, 1.0, 9.81) - 0.5).abs() < 0.005);
    }

    #[test]
    fn feasible_acceleration_values() {
        assert_eq!(max_feasible_accel(1.5 * 9.81, 1.0, 0.5, 9.81).unwrap(), 0.0);
        let a = max_feasible_accel(14.72, 1.0, 0.5, 9.81).unwrap();
        let expected = (14.72f64.powi(2) - (1.5f64 * 9.81).powi(2)).sqrt() / 1.5;
        assert_relative_eq!(a, expected, epsilon = 1e-12);
        assert!((a - 0.256).abs() < 0.005, "{a}");
        assert!(matches!(
            max_feasible_accel(14.72, 1.0, 0.55, 9.81),
            Err(MetricsError::Infeasible(_))
        ));
    }

    #[test]
    fn formulas_are_monotone() {
        let accels: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        for w in accels.windows(2) {
            assert!(
                critical_motion_mass(14.72, w[1], 1.0, 9.81)
                    < critical_motion_mass(14.72, w[0], 1.0, 9.81)
            );
        }
        let masses: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        for w in masses.windows(2) {
            assert!(
                max_feasible_accel(14.72, 1.0, w[1], 9.81).unwrap()
                    < max_feasible_accel(14.72, 1.0, w[0], 9.81).unwrap()
            );
        }
    }

    #[test]
    fn critical_mass_affords_its_acceleration() {
        let a = 0.032;
        let report = critical_mass_report(14.72, a, 1.0, 9.81);
        assert!(report.feasible);
        assert!(report.a_cm.unwrap() >= 0.9 * a);
        assert!(!critical_mass_report(9.0, 0.0, 1.0, 9.81).feasible);
    }
}
