//! CSV output of traces, run metrics and sweep tables, and trace re-reading.

use std::io::Write;
use std::path::Path;

use crate::controllers::SaturationFlags;
use crate::dynamics::{ControlInputs, QuadState};
use crate::error::IoError;
use crate::metrics::{RunMetrics, StageTime};
use crate::sim::{LogRow, SimLog};
use crate::sweep::RunOutcome;

pub const TRACE_COLUMNS: [&str; 27] = [
    "t",
    "x",
    "y",
    "z",
    "vx",
    "vy",
    "vz",
    "phi",
    "theta",
    "psi",
    "p",
    "q",
    "r_rate",
    "load_r",
    "load_s",
    "load_zeta",
    "U1",
    "U2",
    "U3",
    "U4",
    "ref_x",
    "ref_y",
    "ref_z",
    "err_x",
    "err_y",
    "err_z",
    "sat_flag",
];

/// Prefix of the trailing comment line written for an aborted run.
pub const FAILURE_MARKER: &str = "# failure: ";

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn row_fields(r: &LogRow) -> [f64; 26] {
    let q = &r.quad;
    [
        r.t,
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
        r.load_r,
        r.load_s,
        r.load_zeta,
        r.inputs.u1,
        r.inputs.u2,
        r.inputs.u3,
        r.inputs.u4,
        r.reference[0],
        r.reference[1],
        r.reference[2],
        r.error[0],
        r.error[1],
        r.error[2],
    ]
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the trace as CSV; a failed run gets a trailing marker comment.
pub fn write_trace<W: Write>(log: &SimLog, out: W) -> Result<W, csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in &log.rows {
        let mut record: Vec<String> = row_fields(r).iter().map(|v| num(*v)).collect();
        record.push(r.flags.0.to_string());
        w.write_record(&record)?;
    }
    let mut out = w.into_inner().map_err(|e| e.into_error())?;
    if let Some(failure) = &log.failure {
        writeln!(out, "{FAILURE_MARKER}{failure}")?;
    }
    Ok(out)
}

pub fn save_trace(log: &SimLog, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(io_error(path))?;
    let mut out = write_trace(log, std::io::BufWriter::new(file)).map_err(csv_error(path))?;
    out.flush().map_err(io_error(path))
}

/// Rows of a trace file and the failure marker text, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<LogRow>,
    pub failure: Option<String>,
}

fn parse_row(record: &csv::StringRecord) -> Result<LogRow, String> {
    if record.len() != TRACE_COLUMNS.len() {
        return Err(format!(
            "expected {} fields, found {}",
            TRACE_COLUMNS.len(),
            record.len()
        ));
    }
    let mut v = [0.0; 26];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = record[i]
            .trim()
            .parse()
            .map_err(|e| format!("column `{}`: {e}", TRACE_COLUMNS[i]))?;
    }
    let flags: u8 = record[26]
        .trim()
        .parse()
        .map_err(|e| format!("column `sat_flag`: {e}"))?;
    Ok(LogRow {
        t: v[0],
        quad: QuadState {
            x: v[1],
            y: v[2],
            z: v[3],
            vx: v[4],
            vy: v[5],
            vz: v[6],
            phi: v[7],
            theta: v[8],
            psi: v[9],
            roll_rate: v[10],
            pitch_rate: v[11],
            yaw_rate: v[12],
        },
        load_r: v[13],
        load_s: v[14],
        load_zeta: v[15],
        inputs: ControlInputs {
            u1: v[16],
            u2: v[17],
            u3: v[18],
            u4: v[19],
        },
        reference: [v[20], v[21], v[22]],
        error: [v[23], v[24], v[25]],
        flags: SaturationFlags(flags),
    })
}

/// Parses trace CSV text as written by [`write_trace`].
pub fn parse_trace(text: &str, path: &Path) -> Result<Trace, IoError> {
    let format = |message: String| IoError::Format {
        path: path.to_path_buf(),
        message,
    };
    let failure = text
        .lines()
        .find_map(|l| l.strip_prefix(FAILURE_MARKER))
        .map(str::to_string);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error(path))?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(format(format!(
            "header does not match the trace columns: {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error(path))?;
        rows.push(parse_row(&record).map_err(|m| format(format!("data row {}: {m}", i + 1)))?);
    }
    Ok(Trace { rows, failure })
}

pub fn load_trace(path: &Path) -> Result<Trace, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    parse_trace(&text, path)
}

pub const METRICS_COLUMNS: [&str; 11] = [
    "e_max",
    "e_max_x",
    "e_max_y",
    "phi_max_deg",
    "theta_max_deg",
    "t_smax",
    "unsettled_stages",
    "arrival_time",
    "saturation_count",
    "completed",
    "failure",
];

fn metrics_fields(m: &RunMetrics) -> Vec<String> {
    vec![
        num(m.e_max),
        num(m.e_max_x),
        num(m.e_max_y),
        num(m.phi_max),
        num(m.theta_max),
        num(m.t_smax),
        m.unsettled_stages().to_string(),
        opt(m.arrival_time),
        m.saturation_count.to_string(),
    ]
}

const METRIC_FIELDS: usize = 9;

/// One-row metrics table for a single run; metric cells stay empty when the
/// run produced no rows.
pub fn write_metrics<W: Write>(
    metrics: Option<&RunMetrics>,
    failure: Option<&str>,
    out: W,
) -> Result<W, csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    let mut record = match metrics {
        Some(m) => metrics_fields(m),
        None => vec![String::new(); METRIC_FIELDS],
    };
    record.push(failure.is_none().to_string());
    record.push(failure.unwrap_or_default().to_string());
    w.write_record(&record)?;
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn save_metrics(
    metrics: Option<&RunMetrics>,
    failure: Option<&str>,
    path: &Path,
) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(io_error(path))?;
    let mut out =
        write_metrics(metrics, failure, std::io::BufWriter::new(file)).map_err(csv_error(path))?;
    out.flush().map_err(io_error(path))
}

/// Per-stage stabilization table.
pub fn write_stages<W: Write>(stages: &[StageTime], out: W) -> Result<W, csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "t_event", "t_start", "time", "settled"])?;
    for s in stages {
        w.write_record([
            format!("{:?}", s.axis).to_lowercase(),
            num(s.t_event),
            opt(s.t_start),
            num(s.time),
            s.settled.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn save_stages(stages: &[StageTime], path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(io_error(path))?;
    let mut out = write_stages(stages, std::io::BufWriter::new(file)).map_err(csv_error(path))?;
    out.flush().map_err(io_error(path))
}

/// Sweep table: one row per run, sorted by controller then mass.
pub fn write_sweep<W: Write>(outcomes: &[RunOutcome], out: W) -> Result<W, csv::Error> {
    let mut sorted: Vec<&RunOutcome> = outcomes.iter().collect();
    sorted.sort_by(|a, b| {
        (a.config.controller, a.config.m_l)
            .partial_cmp(&(b.config.controller, b.config.m_l))
            .expect("masses are finite")
    });
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["controller", "m_l"];
    header.extend(METRICS_COLUMNS);
    w.write_record(&header)?;
    for o in sorted {
        let mut record = vec![o.config.controller.to_string(), num(o.config.m_l)];
        match &o.metrics {
            Some(m) => record.extend(metrics_fields(m)),
            None => record.extend(std::iter::repeat_n(String::new(), METRIC_FIELDS)),
        }
        record.push(o.completed().to_string());
        record.push(o.failure.clone().unwrap_or_default());
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn save_sweep(outcomes: &[RunOutcome], path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(io_error(path))?;
    let mut out = write_sweep(outcomes, std::io::BufWriter::new(file)).map_err(csv_error(path))?;
    out.flush().map_err(io_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, SimConfig};
    use crate::sweep::run_one;
    use proptest::prelude::*;

    fn short_log() -> SimLog {
        run(&SimConfig {
            duration: 2.0,
            ..Default::default()
        })
    }

    fn text(bytes: Vec<u8>) -> String {
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let log = short_log();
        let csv = text(write_trace(&log, Vec::new()).unwrap());
        assert!(csv.starts_with(&TRACE_COLUMNS.join(",")));
        assert_eq!(csv.lines().count(), 202);
        let back = parse_trace(&csv, Path::new("mem")).unwrap();
        assert_eq!(back.rows, log.rows);
        assert_eq!(back.failure, None);
    }

    #[test]
    fn failure_marker_survives() {
        let log = run(&SimConfig {
            duration: 76.0,
            ..Default::default()
        });
        let csv = text(write_trace(&log, Vec::new()).unwrap());
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with(FAILURE_MARKER), "{last}");
        let back = parse_trace(&csv, Path::new("mem")).unwrap();
        assert_eq!(back.rows.len(), 7501);
        assert_eq!(back.failure.unwrap(), log.failure.unwrap().to_string());
    }

    #[test]
    fn malformed_traces_are_rejected() {
        let bad_header = "t,x\n0,1\n";
        assert!(matches!(
            parse_trace(bad_header, Path::new("mem")),
            Err(IoError::Format { .. })
        ));
        let mut csv = text(write_trace(&short_log(), Vec::new()).unwrap());
        csv.push_str(&vec!["nan?"; 27].join(","));
        csv.push('\n');
        let err = parse_trace(&csv, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("data row 202"), "{err}");
    }

    #[test]
    fn sweep_rows_are_sorted_and_flag_failures() {
        let ok = run_one(&SimConfig {
            duration: 1.0,
            m_l: 0.3,
            ..Default::default()
        });
        let light = run_one(&SimConfig {
            duration: 1.0,
            m_l: 0.05,
            ..Default::default()
        });
        let failed = run_one(&SimConfig {
            controller: crate::sim::ControllerKind::Smc,
            duration: 76.0,
            ..Default::default()
        });
        let csv = text(write_sweep(&[failed, ok, light], Vec::new()).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("controller,m_l,e_max,"));
        assert!(lines[1].starts_with("PD,5.0000000000000003e-2,"));
        assert!(lines[2].starts_with("PD,2.9999999999999999e-1,"));
        assert!(lines[1].contains(",true,"));
        assert!(lines[3].starts_with("SMC,"));
        assert!(lines[3].contains(",false,"));
    }

    #[test]
    fn metrics_table_has_one_row() {
        let o = run_one(&SimConfig {
            duration: 1.0,
            ..Default::default()
        });
        let csv = text(write_metrics(o.metrics.as_ref(), None, Vec::new()).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], METRICS_COLUMNS.join(","));
        assert!(lines[1].ends_with(",true,"));
    }

    proptest! {
        #[test]
        fn numbers_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 26), flag in 0u8..8) {
            let row = LogRow {
                t: values[0],
                quad: QuadState {
                    x: values[1], y: values[2], z: values[3],
                    vx: values[4], vy: values[5], vz: values[6],
                    phi: values[7], theta: values[8], psi: values[9],
                    roll_rate: values[10], pitch_rate: values[11], yaw_rate: values[12],
                },
                load_r: values[13],
                load_s: values[14],
                load_zeta: values[15],
                inputs: ControlInputs { u1: values[16], u2: values[17], u3: values[18], u4: values[19] },
                reference: [values[20], values[21], values[22]],
                error: [values[23], values[24], values[25]],
                flags: SaturationFlags(flag),
            };
            let log = SimLog { rows: vec![row], failure: None };
            let csv = text(write_trace(&log, Vec::new()).unwrap());
            let back = parse_trace(&csv, Path::new("mem")).unwrap();
            prop_assert_eq!(back.rows, log.rows);
        }
    }
}
