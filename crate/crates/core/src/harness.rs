//! Scenario loading, presets, expectation checks, comparisons, sweeps and CSV
//! emission. The CLI is a thin layer over this module.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::{self, AnalyticRow, RooflinePoint};
use crate::baseline::BASELINE_STEPS;
use crate::erudite::ERUDITE_STEPS;
use crate::metrics::{MetricsReport, METRIC_COLUMNS};
use crate::run::{run_path, PathOutcome, SimError, SimOptions};
use crate::scenario::{PathKind, Scenario};
use crate::units::{Bandwidth, Bytes, Rate};

/// Overrides the output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "ERUDITE_SIM_OUT";

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unreadable, unparsable or invalid input. `line` is 1-based.
    #[error("{}", fmt_config(.source_name, .line, .message))]
    Config {
        source_name: String,
        line: Option<usize>,
        message: String,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn fmt_config(source: &str, line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("{source}:{l}: {message}"),
        None => format!("{source}: {message}"),
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Invariant(_) => 3,
            HarnessError::Io { .. } => 1,
        }
    }

    fn config(message: impl Into<String>) -> Self {
        HarnessError::Config {
            source_name: "scenario".into(),
            line: None,
            message: message.into(),
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => HarnessError::config(c.to_string()),
            SimError::Invariant(m) => HarnessError::Invariant(m),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses and validates scenario text. Errors carry the line of the
/// offending key where it can be found.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<Scenario, HarnessError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| HarnessError::Config {
        source_name: source_name.to_string(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let check = scenario
        .validate()
        .and_then(|()| scenario.build_workload().map(|_| ()));
    check.map_err(|e| HarnessError::Config {
        source_name: source_name.to_string(),
        line: locate_key(text, e.field()),
        message: e.to_string(),
    })?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config {
        source_name: path.display().to_string(),
        line: None,
        message: e.to_string(),
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Canonical text form; parsing it yields an equal scenario.
pub fn scenario_to_toml(s: &Scenario) -> String {
    toml::to_string(s).expect("scenario serializes")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Finds the line defining a dotted key such as `workload.threads`: the key
/// itself, else the table header, else the closest ancestor that is present.
fn locate_key(text: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').collect();
    for depth in (1..=parts.len()).rev() {
        let (table, key) = (&parts[..depth - 1], parts[depth - 1]);
        let mut current: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(h) = line.strip_prefix('[') {
                let h = h.trim_start_matches('[');
                let name = h.split(']').next().unwrap_or("");
                current = name.split('.').map(|p| p.trim().to_string()).collect();
                if current == parts[..depth] {
                    return Some(n + 1);
                }
                continue;
            }
            let Some((k, _)) = line.split_once('=') else { continue };
            let mut path = current.clone();
            path.extend(k.trim().split('.').map(|p| p.trim().to_string()));
            let want: Vec<&str> = table.iter().copied().chain([key]).collect();
            if path == want {
                return Some(n + 1);
            }
        }
    }
    None
}

pub const PRESETS: &[(&str, &str)] = &[
    ("erudite-saturation", include_str!("../presets/erudite-saturation.toml")),
    ("baseline-finegrain", include_str!("../presets/baseline-finegrain.toml")),
    ("finegrain-random", include_str!("../presets/finegrain-random.toml")),
    ("coarse-sequential", include_str!("../presets/coarse-sequential.toml")),
];

pub fn preset(name: &str) -> Result<Scenario, HarnessError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::config(format!("unknown preset {name:?}")))?;
    parse_scenario(text, &format!("preset:{name}"))
}

/// A file path, or `preset:<name>`.
pub fn resolve_scenario(arg: &str) -> Result<Scenario, HarnessError> {
    match arg.strip_prefix("preset:") {
        Some(name) => preset(name),
        None => load_scenario(Path::new(arg)),
    }
}

/// Runs every path the scenario selects, in path order.
pub fn simulate(s: &Scenario) -> Result<Vec<PathOutcome>, HarnessError> {
    s.validate().map_err(SimError::from)?;
    let outcomes = s
        .path
        .paths()
        .into_par_iter()
        .map(|p| run_path(s, p, SimOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(outcomes)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub baseline: MetricsReport,
    pub erudite: MetricsReport,
}

impl Comparison {
    /// Erudite over baseline useful bandwidth.
    pub fn speedup(&self) -> f64 {
        if self.baseline.useful_bandwidth == 0.0 {
            return if self.erudite.useful_bandwidth == 0.0 { 1.0 } else { f64::INFINITY };
        }
        self.erudite.useful_bandwidth / self.baseline.useful_bandwidth
    }

    pub fn baseline_steps(&self) -> usize {
        BASELINE_STEPS.len()
    }

    pub fn erudite_steps(&self) -> usize {
        ERUDITE_STEPS.len()
    }
}

/// Both paths on the same devices, workload and seed.
pub fn compare(s: &Scenario) -> Result<Comparison, HarnessError> {
    s.validate().map_err(SimError::from)?;
    let (b, e) = rayon::join(
        || run_path(s, PathKind::Baseline, SimOptions::default()),
        || run_path(s, PathKind::Erudite, SimOptions::default()),
    );
    Ok(Comparison {
        baseline: b?.report,
        erudite: e?.report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Granularity,
    Threads,
    InitiationRate,
    HeaderBytes,
    SsdCount,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [
        SweepParam::Granularity,
        SweepParam::Threads,
        SweepParam::InitiationRate,
        SweepParam::HeaderBytes,
        SweepParam::SsdCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Granularity => "granularity",
            SweepParam::Threads => "threads",
            SweepParam::InitiationRate => "initiation_rate",
            SweepParam::HeaderBytes => "header_bytes",
            SweepParam::SsdCount => "ssd_count",
        }
    }

    /// One value; byte and rate units are accepted where they make sense.
    pub fn parse_value(self, s: &str) -> Result<u64, String> {
        let s = s.trim();
        match self {
            SweepParam::Granularity | SweepParam::HeaderBytes => {
                Bytes::parse(s).map(|b| b.0).or_else(|_| plain(s))
            }
            SweepParam::InitiationRate => Rate::parse(s).map(|r| r.0).map_err(|e| e.to_string()),
            SweepParam::Threads | SweepParam::SsdCount => plain(s),
        }
    }

    /// A comma list, or `start..end` doubling from `start` while `<= end`.
    pub fn parse_values(self, list: &str) -> Result<Vec<u64>, String> {
        if let Some((a, b)) = list.split_once("..") {
            let (a, b) = (self.parse_value(a)?, self.parse_value(b)?);
            if a == 0 || a > b {
                return Err(format!("range {list:?} must satisfy 0 < start <= end"));
            }
            let mut v = Vec::new();
            let mut x = a;
            while x <= b {
                v.push(x);
                x = x.checked_mul(2).ok_or("range overflows")?;
            }
            return Ok(v);
        }
        list.split(',').map(|x| self.parse_value(x)).collect()
    }

    pub fn apply(self, s: &mut Scenario, value: u64) {
        match self {
            SweepParam::Granularity => s.workload.granularity = Some(Bytes(value)),
            SweepParam::Threads => s.workload.threads = Some(value as u32),
            SweepParam::InitiationRate => s.baseline.initiation_rate = Rate(value),
            SweepParam::HeaderBytes => {
                s.link.header_bytes = Bytes(value);
                if let Some(p) = s.switch.port_link.as_mut() {
                    p.header_bytes = Bytes(value);
                }
            }
            SweepParam::SsdCount => s.ssd_count = value as u32,
        }
    }
}

fn plain(s: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|e| format!("{s:?}: {e}"))
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepParam::ALL.iter().map(|p| p.name()).collect();
                format!("unknown sweep parameter {s:?}; expected one of {}", names.join(", "))
            })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: u64,
    pub report: MetricsReport,
}

/// One run per (value, path), all sharing the scenario seed. Points may run
/// concurrently; results are ordered by value then path.
pub fn sweep(s: &Scenario, param: SweepParam, values: &[u64]) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut jobs = Vec::new();
    for &v in values {
        let mut point = s.clone();
        param.apply(&mut point, v);
        point.validate().map_err(|e| HarnessError::config(format!("{param}={v}: {e}")))?;
        for p in s.path.paths() {
            jobs.push((v, p, point.clone()));
        }
    }
    let mut points = jobs
        .into_par_iter()
        .map(|(v, p, scn)| {
            run_path(&scn, p, SimOptions::default()).map(|o| (v, p, o.report))
        })
        .collect::<Result<Vec<_>, _>>()?;
    points.sort_by_key(|(v, p, _)| (*v, *p));
    Ok(points
        .into_iter()
        .map(|(value, _, report)| SweepPoint { value, report })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationResult {
    pub metric: String,
    pub path: Option<PathKind>,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
}

impl fmt::Display for ExpectationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let who = self.path.map_or("all", PathKind::as_str);
        let value = self.value.map_or("missing".to_string(), |v| format!("{v:.6e}"));
        let bound = |b: Option<f64>| b.map_or("-".to_string(), |v| format!("{v:.6e}"));
        write!(
            f,
            "{} {}[{}] = {} in [{}, {}]",
            if self.pass { "ok  " } else { "FAIL" },
            self.metric,
            who,
            value,
            bound(self.min),
            bound(self.max)
        )
    }
}

/// Checks the scenario's `expect` entries. A pathless entry applies to every
/// report; `speedup` is only defined when both paths ran.
pub fn check_expectations(s: &Scenario, reports: &[&MetricsReport]) -> Vec<ExpectationResult> {
    let find = |p: PathKind| reports.iter().find(|r| r.path == p.as_str());
    let mut out = Vec::new();
    for e in &s.expect {
        let values: Vec<Option<f64>> = if e.metric == "speedup" {
            let v = match (find(PathKind::Baseline), find(PathKind::Erudite)) {
                (Some(b), Some(r)) => Some(
                    Comparison {
                        baseline: (*b).clone(),
                        erudite: (*r).clone(),
                    }
                    .speedup(),
                ),
                _ => None,
            };
            vec![v]
        } else {
            match e.path {
                Some(p) => vec![find(p).and_then(|r| r.get(&e.metric))],
                None => reports.iter().map(|r| r.get(&e.metric)).collect(),
            }
        };
        for value in values {
            let pass = value.is_some_and(|v| {
                e.min.is_none_or(|m| v >= m) && e.max.is_none_or(|m| v <= m)
            });
            out.push(ExpectationResult {
                metric: e.metric.clone(),
                path: e.path,
                value,
                min: e.min,
                max: e.max,
                pass,
            });
        }
    }
    out
}

/// `--out`, else the environment override, else `./erudite-out`.
pub fn output_dir(cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("erudite-out"))
}

pub const METRICS_HEADER: &[&str] = &["path", "metric", "value"];
pub const TIMELINE_HEADER: &[&str] = &["path", "time_ns", "inflight"];
pub const STEPS_HEADER: &[&str] = &["path", "step", "name", "mean_ns"];
pub const COMPARE_HEADER: &[&str] = &["metric", "baseline", "erudite", "ratio"];
pub const ANALYTIC_HEADER: &[&str] =
    &["quantity", "inputs", "value", "unit", "target", "rel_error", "tolerance", "pass"];

/// `<param>, path`, then every metric column.
pub fn sweep_header(param: SweepParam) -> Vec<&'static str> {
    let mut h = vec![param.name(), "path"];
    h.extend_from_slice(METRIC_COLUMNS);
    h
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let w = csv::Writer::from_path(&path).map_err(|e| HarnessError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    Ok((w, path))
}

fn finish_csv(
    path: &Path,
    fill: impl FnOnce(&mut dyn FnMut(Vec<String>) -> csv::Result<()>) -> csv::Result<()>,
    mut w: csv::Writer<fs::File>,
) -> Result<PathBuf, HarnessError> {
    let res = fill(&mut |rec| w.write_record(rec)).and_then(|()| w.flush().map_err(Into::into));
    res.map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    Ok(path.to_path_buf())
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn write_metrics(dir: &Path, reports: &[&MetricsReport]) -> Result<PathBuf, HarnessError> {
    let (w, path) = writer(dir, "metrics.csv")?;
    finish_csv(
        &path,
        |put| {
            put(owned(METRICS_HEADER))?;
            for r in reports {
                for (name, v) in r.scalars() {
                    put(vec![r.path.clone(), name.to_string(), v.to_string()])?;
                }
            }
            Ok(())
        },
        w,
    )
}

pub fn write_timeline(dir: &Path, reports: &[&MetricsReport]) -> Result<PathBuf, HarnessError> {
    let (w, path) = writer(dir, "timeline.csv")?;
    finish_csv(
        &path,
        |put| {
            put(owned(TIMELINE_HEADER))?;
            for r in reports {
                for (t, n) in &r.timeline {
                    put(vec![r.path.clone(), t.to_string(), n.to_string()])?;
                }
            }
            Ok(())
        },
        w,
    )
}

pub fn write_steps(dir: &Path, reports: &[&MetricsReport]) -> Result<PathBuf, HarnessError> {
    let (w, path) = writer(dir, "steps.csv")?;
    finish_csv(
        &path,
        |put| {
            put(owned(STEPS_HEADER))?;
            for r in reports {
                for (i, s) in r.steps.iter().enumerate() {
                    put(vec![r.path.clone(), (i + 1).to_string(), s.name.clone(), s.mean_ns.to_string()])?;
                }
            }
            Ok(())
        },
        w,
    )
}

/// Rows of the side-by-side table: scalar metrics, then step counts and speedup.
pub fn compare_rows(c: &Comparison) -> Vec<(String, f64, f64)> {
    let mut rows: Vec<(String, f64, f64)> = c
        .baseline
        .scalars()
        .into_iter()
        .zip(c.erudite.scalars())
        .map(|((name, b), (_, e))| (name.to_string(), b, e))
        .collect();
    rows.push(("steps".into(), c.baseline_steps() as f64, c.erudite_steps() as f64));
    rows
}

fn ratio(b: f64, e: f64) -> String {
    if b == 0.0 {
        String::new()
    } else {
        (e / b).to_string()
    }
}

pub fn write_compare(dir: &Path, c: &Comparison) -> Result<PathBuf, HarnessError> {
    let (w, path) = writer(dir, "compare.csv")?;
    finish_csv(
        &path,
        |put| {
            put(owned(COMPARE_HEADER))?;
            for (name, b, e) in compare_rows(c) {
                put(vec![name, b.to_string(), e.to_string(), ratio(b, e)])?;
            }
            put(vec!["speedup".into(), "1".into(), c.speedup().to_string(), c.speedup().to_string()])?;
            Ok(())
        },
        w,
    )
}

pub fn write_sweep(dir: &Path, param: SweepParam, points: &[SweepPoint]) -> Result<PathBuf, HarnessError> {
    let (w, path) = writer(dir, "sweep.csv")?;
    finish_csv(
        &path,
        |put| {
            put(owned(&sweep_header(param)))?;
            for p in points {
                let mut rec = vec![p.value.to_string(), p.report.path.clone()];
                rec.extend(p.report.scalars().into_iter().map(|(_, v)| v.to_string()));
                put(rec)?;
            }
            Ok(())
        },
        w,
    )
}

/// Reference rows carry a target; user-requested rows leave it blank.
pub fn write_analytic(dir: &Path, reference: &[AnalyticRow], custom: &[AnalyticRow]) -> Result<PathBuf, HarnessError> {
    let (w, path) = writer(dir, "analytic.csv")?;
    finish_csv(
        &path,
        |put| {
            put(owned(ANALYTIC_HEADER))?;
            for r in reference {
                put(vec![
                    r.quantity.clone(),
                    r.inputs.clone(),
                    r.value.to_string(),
                    r.unit.into(),
                    r.target.to_string(),
                    r.rel_error().to_string(),
                    r.tolerance.to_string(),
                    r.passes().to_string(),
                ])?;
            }
            for r in custom {
                put(vec![
                    r.quantity.clone(),
                    r.inputs.clone(),
                    r.value.to_string(),
                    r.unit.into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
            Ok(())
        },
        w,
    )
}

/// Rows for user-supplied roofline inputs. `peak` adds the reuse factor.
pub fn custom_analytic(bw: Bandwidth, elem: Bytes, peak: Option<u64>) -> Result<Vec<AnalyticRow>, HarnessError> {
    let roof = RooflinePoint::new(peak.unwrap_or(1), bw, elem).map_err(|e| HarnessError::config(e.to_string()))?;
    let mut rows = vec![AnalyticRow {
        quantity: "bw_limited_op_rate".into(),
        inputs: format!("{bw}, {elem}"),
        value: analytic::to_f64(roof.bw_limited_op_rate()),
        unit: "ops/s",
        target: 0.0,
        tolerance: 0.0,
    }];
    if let Some(p) = peak {
        rows.push(AnalyticRow {
            quantity: "required_reuse".into(),
            inputs: format!("{p} ops/s, {bw}, {elem}"),
            value: analytic::to_f64(roof.required_reuse()),
            unit: "x",
            target: 0.0,
            tolerance: 0.0,
        });
    }
    Ok(rows)
}

/// Human-readable number with an SI prefix.
pub fn si(v: f64) -> String {
    let a = v.abs();
    let (d, p) = if a >= 1e12 {
        (1e12, "T")
    } else if a >= 1e9 {
        (1e9, "G")
    } else if a >= 1e6 {
        (1e6, "M")
    } else if a >= 1e3 {
        (1e3, "K")
    } else {
        (1.0, "")
    };
    format!("{:.4}{}", v / d, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_name_the_line() {
        let text = "name = \"x\"\n\n[workload]\nthreads = \"many\"\n";
        let e = parse_scenario(text, "t.toml").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("t.toml:4:"), "{e}");
    }

    #[test]
    fn validation_errors_name_the_key_line() {
        let text = "name = \"x\"\n[link]\nbandwidth = \"16GB/s\"\n\n[workload]\nkind = \"sequential\"\nthreads = 0\n";
        let e = parse_scenario(text, "t.toml").unwrap_err();
        assert!(e.to_string().starts_with("t.toml:7:"), "{e}");
    }

    #[test]
    fn bad_units_are_config_errors() {
        let e = parse_scenario("horizon = \"10 parsecs\"\n", "t.toml").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("t.toml:1:"), "{e}");
    }

    #[test]
    fn locate_falls_back_to_the_table() {
        let text = "[baseline]\nsyscall_overhead = \"1us\"\n";
        assert_eq!(locate_key(text, "baseline.page_size"), Some(1));
        assert_eq!(locate_key(text, "baseline.syscall_overhead"), Some(2));
        assert_eq!(locate_key(text, "erudite.queues"), None);
    }

    #[test]
    fn sweep_values_parse_lists_and_doubling_ranges() {
        assert_eq!(SweepParam::Threads.parse_values("1..16").unwrap(), vec![1, 2, 4, 8, 16]);
        assert_eq!(SweepParam::Granularity.parse_values("512B,4KiB").unwrap(), vec![512, 4096]);
        assert_eq!(SweepParam::InitiationRate.parse_values("1M/s").unwrap(), vec![1_000_000]);
        assert!("bogus".parse::<SweepParam>().is_err());
    }

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            preset(name).unwrap();
        }
    }
}
