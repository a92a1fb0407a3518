//! Running one path of a scenario and what comes back.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::baseline::BaselineSim;
use crate::erudite::{CompletionStatus, EruditeSim};
use crate::kernel::{SimTime, TraceRecord};
use crate::metrics::MetricsReport;
use crate::scenario::{PathKind, Scenario, ScenarioError};
use crate::storage::{RequestPlanner, RequestSource, SsdAccess, Storage};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    /// A model invariant broke during the run; always a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Keep every dispatched event.
    pub trace: bool,
    /// Log SSD accesses and per-command statuses.
    pub audit: bool,
}

/// Final status of one device command, keyed by the request it served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandStatus {
    pub request: u64,
    pub status: CompletionStatus,
}

#[derive(Debug, Clone)]
pub struct PathOutcome {
    pub path: PathKind,
    pub report: MetricsReport,
    pub digest: u64,
    pub events_by_class: BTreeMap<&'static str, u64>,
    pub trace: Option<Vec<TraceRecord>>,
    pub ssd_log: Vec<SsdAccess>,
    pub statuses: Vec<CommandStatus>,
    pub storage: Storage,
}

/// Validates `scenario` and runs `path` on it with the scenario's workload.
pub fn run_path(scenario: &Scenario, path: PathKind, opts: SimOptions) -> Result<PathOutcome, SimError> {
    scenario.validate()?;
    let workload = scenario.build_workload()?;
    let storage = scenario.build_storage(workload.footprint())?;
    let planner = RequestPlanner::new(
        workload.stream(),
        &storage,
        scenario.workload.app,
        scenario.workload.file,
        scenario.granularity(),
        scenario.workload.cache_granules,
    );
    run_with_source(scenario, path, storage, Box::new(planner), opts)
}

/// Runs `path` on pre-built storage with an arbitrary request source.
pub fn run_with_source(
    scenario: &Scenario,
    path: PathKind,
    storage: Storage,
    source: Box<dyn RequestSource>,
    opts: SimOptions,
) -> Result<PathOutcome, SimError> {
    match path {
        PathKind::Erudite => EruditeSim::new(scenario, storage, source, opts).run(),
        PathKind::Baseline => BaselineSim::new(scenario, storage, source, opts).run(),
    }
}

/// Checks end-of-run bookkeeping shared by both paths. With `reuse`, data
/// already in HBM serves requests without a fetch, so useful bytes may exceed
/// fetched bytes.
pub(crate) fn check_conservation(report: &MetricsReport, quiescent: bool, reuse: bool) -> Result<(), SimError> {
    let settled = report.completions + report.rejections;
    if settled > report.injected || (quiescent && settled != report.injected) {
        return Err(SimError::Invariant(format!(
            "{} commands injected but {} completed and {} rejected",
            report.injected, report.completions, report.rejections
        )));
    }
    if !reuse && report.useful_bandwidth > report.raw_bandwidth * (1.0 + 1e-12) {
        return Err(SimError::Invariant("useful bandwidth exceeds raw bandwidth".into()));
    }
    if report.latency_p50_ns > report.latency_p99_ns {
        return Err(SimError::Invariant("p50 latency above p99".into()));
    }
    Ok(())
}

/// `start + k * interval` for the least `k` with the result `>= at`.
pub(crate) fn next_poll(start: SimTime, at: SimTime, interval: u64) -> SimTime {
    if interval == 0 || at <= start {
        return at.max(start);
    }
    let k = (at.as_ns() - start.as_ns()).div_ceil(interval);
    start + k * interval
}
