//! Batches of independent runs over load masses and controllers.

use crate::config::SweepSpec;
use crate::metrics::{compute_metrics, RunMetrics, DEFAULT_BAND_DEG, DEFAULT_DWELL};
use crate::sim::{run, SimConfig, SimLog};

/// Result of one run, reduced to its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config: SimConfig,
    /// Metrics over the logged rows; partial when the run failed.
    pub metrics: Option<RunMetrics>,
    /// Failure description when the run stopped early.
    pub failure: Option<String>,
    pub rows: usize,
}

impl RunOutcome {
    pub fn from_log(config: SimConfig, log: &SimLog) -> Self {
        Self {
            config,
            metrics: compute_metrics(&log.rows, DEFAULT_BAND_DEG, DEFAULT_DWELL).ok(),
            failure: log.failure.as_ref().map(ToString::to_string),
            rows: log.rows.len(),
        }
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn run_one(config: &SimConfig) -> RunOutcome {
    RunOutcome::from_log(config.clone(), &run(config))
}

/// Runs every configuration on the calling thread, in order.
pub fn run_sequential(configs: &[SimConfig]) -> Vec<RunOutcome> {
    configs.iter().map(run_one).collect()
}

/// Runs the configurations on a pool of `jobs` threads (all cores when
/// `None`). Results keep the input order.
#[cfg(feature = "parallel")]
pub fn run_parallel(
    configs: &[SimConfig],
    jobs: Option<usize>,
) -> Result<Vec<RunOutcome>, rayon::ThreadPoolBuildError> {
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    Ok(pool.install(|| configs.par_iter().map(run_one).collect()))
}

/// Runs a whole sweep, in parallel when the `parallel` feature is on.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Vec<RunOutcome> {
    let configs = spec.runs();
    #[cfg(feature = "parallel")]
    {
        if jobs != Some(1) {
            if let Ok(out) = run_parallel(&configs, jobs) {
                return out;
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    run_sequential(&configs)
}
