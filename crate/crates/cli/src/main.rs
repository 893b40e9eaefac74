use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slungsim_core::config::{load_sim_config, load_sweep_spec, DEFAULT_MASSES};
use slungsim_core::error::{ConfigError, IoError};
use slungsim_core::metrics::{
    compute_metrics, critical_mass_report, max_feasible_accel, RunMetrics, DEFAULT_BAND_DEG,
    DEFAULT_DWELL,
};
use slungsim_core::report;
use slungsim_core::sim::run;
use slungsim_core::sweep::{run_sweep, RunOutcome};

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    version,
    about = "Quadrotor with a cable-suspended load: closed-loop runs and mass sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, metrics.csv and stages.csv.
    Simulate {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run every (controller, mass) pair of a sweep and write sweep.csv.
    Sweep {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Worker threads; defaults to the available cores.
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: Option<u16>,
    },
    /// Recompute metrics from an existing trace.csv.
    Analyze {
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        /// Attitude band for stabilization, degrees.
        #[arg(long, default_value_t = DEFAULT_BAND_DEG)]
        band: f64,
        /// Time the attitude must stay inside the band, s.
        #[arg(long, default_value_t = DEFAULT_DWELL)]
        dwell: f64,
    },
    /// Critical motion mass and the feasible acceleration per load mass.
    CriticalMass {
        /// Collective thrust ceiling, N.
        #[arg(long)]
        u1max: f64,
        /// Desired horizontal acceleration, m/s^2.
        #[arg(long)]
        accel: f64,
        /// Vehicle mass, kg.
        #[arg(long, default_value_t = 1.0)]
        mq: f64,
        #[arg(long, default_value_t = 9.81)]
        g: f64,
    },
}

enum Failure {
    Config(String),
    Abort(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Self::Io(e.to_string())
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))
}

fn print_metrics(m: &RunMetrics) {
    println!(
        "e_max          {:.6} m (x {:.6}, y {:.6})",
        m.e_max, m.e_max_x, m.e_max_y
    );
    println!("phi_max        {:.4} deg", m.phi_max);
    println!("theta_max      {:.4} deg", m.theta_max);
    println!(
        "t_smax         {:.2} s ({} unsettled stages)",
        m.t_smax,
        m.unsettled_stages()
    );
    match m.arrival_time {
        Some(t) => println!("arrival        {t:.2} s"),
        None => println!("arrival        never"),
    }
    println!("saturated      {} ticks", m.saturation_count);
}

fn simulate(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_sim_config(config)?;
    create_dir(out)?;
    let log = run(&cfg);
    let outcome = RunOutcome::from_log(cfg, &log);
    report::save_trace(&log, &out.join("trace.csv"))?;
    report::save_metrics(
        outcome.metrics.as_ref(),
        outcome.failure.as_deref(),
        &out.join("metrics.csv"),
    )?;
    if let Some(m) = &outcome.metrics {
        report::save_stages(&m.stages, &out.join("stages.csv"))?;
        print_metrics(m);
    }
    match outcome.failure {
        Some(f) => Err(Failure::Abort(format!(
            "run aborted after {} rows: {f}",
            outcome.rows
        ))),
        None => Ok(()),
    }
}

fn sweep(config: &Path, out: &Path, jobs: Option<u16>) -> Result<(), Failure> {
    let spec = load_sweep_spec(config)?;
    create_dir(out)?;
    let outcomes = run_sweep(&spec, jobs.map(usize::from));
    report::save_sweep(&outcomes, &out.join("sweep.csv"))?;
    println!(
        "{:<4} {:>6} {:>9} {:>9} {:>9} {:>7}",
        "ctrl", "m_l", "e_max", "phi_max", "theta_max", "t_smax"
    );
    for o in &outcomes {
        match &o.metrics {
            Some(m) => println!(
                "{:<4} {:>6.3} {:>9.5} {:>9.4} {:>9.4} {:>7.2}{}",
                o.config.controller.name(),
                o.config.m_l,
                m.e_max,
                m.phi_max,
                m.theta_max,
                m.t_smax,
                if o.completed() { "" } else { "  aborted" }
            ),
            None => println!(
                "{:<4} {:>6.3}  aborted",
                o.config.controller.name(),
                o.config.m_l
            ),
        }
    }
    let aborted = outcomes.iter().filter(|o| !o.completed()).count();
    if aborted > 0 {
        return Err(Failure::Abort(format!(
            "{aborted} of {} runs aborted; see the failure column of sweep.csv",
            outcomes.len()
        )));
    }
    Ok(())
}

fn analyze(trace: &Path, band: f64, dwell: f64) -> Result<(), Failure> {
    if !(band > 0.0 && dwell >= 0.0) {
        return Err(Failure::Config(
            "band must be positive and dwell non-negative".into(),
        ));
    }
    let trace = report::load_trace(trace)?;
    let metrics = compute_metrics(&trace.rows, band, dwell)
        .map_err(|e| Failure::Io(format!("cannot analyze trace: {e}")))?;
    print_metrics(&metrics);
    for s in &metrics.stages {
        let axis = format!("{:?}", s.axis).to_lowercase();
        let state = if s.settled { "" } else { "  unsettled" };
        println!(
            "stage {axis:<5} at {:>5.1} s  {:>6.2} s{state}",
            s.t_event, s.time
        );
    }
    if let Some(f) = &trace.failure {
        println!("trace ends with failure: {f}");
    }
    Ok(())
}

fn critical_mass(u1max: f64, accel: f64, mq: f64, g: f64) -> Result<(), Failure> {
    if !(u1max > 0.0 && accel >= 0.0 && mq > 0.0 && g > 0.0) {
        return Err(Failure::Config(
            "u1max, mq and g must be positive and accel non-negative".into(),
        ));
    }
    let report = critical_mass_report(u1max, accel, mq, g);
    if report.feasible {
        println!("m_cm = {:.4} kg", report.m_cm);
    } else {
        println!(
            "m_cm = {:.4} kg: the thrust ceiling cannot carry the vehicle itself",
            report.m_cm
        );
    }
    println!("{:>7} {:>12}", "m_l", "a_max");
    let masses = DEFAULT_MASSES.iter().copied().chain([0.55, 0.6]);
    for m in masses {
        match max_feasible_accel(u1max, mq, m, g) {
            Ok(a) => println!("{m:>7.3} {a:>12.6}"),
            Err(_) => println!("{m:>7.3} {:>12}", "infeasible"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Sweep { config, out, jobs } => sweep(&config, &out, jobs),
        Command::Analyze { trace, band, dwell } => analyze(&trace, band, dwell),
        Command::CriticalMass {
            u1max,
            accel,
            mq,
            g,
        } => critical_mass(u1max, accel, mq, g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Abort(m)) => {
            eprintln!("simulation aborted: {m}");
            ExitCode::from(EXIT_ABORT)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
