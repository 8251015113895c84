//! Experiment runners and their on-disk reports.

mod constants;
mod runners;

pub use constants::{
    b_window, beta1, eta0, poc_explicit_bound, select_kinetic_constants, selection_polynomial,
    slacks, unsplit_conditions, BoundBranch, KineticConstants, PocConstants,
};
pub use runners::{
    run, run_fixed_point, run_kinetic_constants, run_kinetic_contraction, run_kinetic_poc,
    run_overdamped_contraction, run_overdamped_poc,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::dynamics::CouplingTrace;
use crate::error::{Error, Result};
use crate::gibbs::PicardHistory;

/// One pass flag together with the number it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl TestOutcome {
    pub fn new(
        name: &str,
        passed: bool,
        value: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        TestOutcome {
            name: name.to_string(),
            passed,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    /// `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self::new(name, value >= threshold, value, threshold, detail)
    }

    /// `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self::new(name, value <= threshold, value, threshold, detail)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: value={} threshold={} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            short(self.value),
            short(self.threshold),
            self.detail
        )
    }
}

fn short(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-3..1e6).contains(&a) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrace {
    pub label: String,
    pub trace: CouplingTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PocRow {
    pub n: usize,
    pub sup_gap: f64,
    pub delta_d: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    /// Replica-mean traces.
    pub traces: Vec<NamedTrace>,
    pub fitted_rate: Option<f64>,
    pub theoretical_rate_bound: Option<f64>,
    pub poc_table: Vec<PocRow>,
    pub fitted_scaling_slope: Option<f64>,
    pub expected_scaling_slope: Option<f64>,
    pub tests: Vec<TestOutcome>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic_constants: Option<KineticConstants>,
    #[serde(skip)]
    pub picard: Option<PicardHistory>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            experiment: config.experiment,
            config: config.clone(),
            traces: Vec::new(),
            fitted_rate: None,
            theoretical_rate_bound: None,
            poc_table: Vec::new(),
            fitted_scaling_slope: None,
            expected_scaling_slope: None,
            tests: Vec::new(),
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            kinetic_constants: None,
            picard: None,
        }
    }

    /// True iff every pass flag is set.
    pub fn passed(&self) -> bool {
        self.tests.iter().all(|t| t.passed)
    }

    pub fn test(&self, name: &str) -> Option<&TestOutcome> {
        self.tests.iter().find(|t| t.name == name)
    }

    pub(crate) fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

pub const TRACE_HEADER: &str = "t,mean_sq_dist,second_moment_a,second_moment_b";
pub const POC_HEADER: &str = "n,sup_gap,delta_d,ratio";

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// CSV text of a trace: `t,mean_sq_dist,second_moment_a,second_moment_b`
/// plus `q_form` when recorded. Values use the shortest round-trip form.
pub fn trace_csv(trace: &CouplingTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    if trace.q_form.is_some() {
        out.push_str(",q_form");
    }
    out.push('\n');
    for k in 0..trace.len() {
        let _ = write!(
            out,
            "{},{},{},{}",
            trace.times[k],
            trace.mean_sq_dist[k],
            trace.second_moment_a[k],
            trace.second_moment_b[k]
        );
        if let Some(q) = &trace.q_form {
            let _ = write!(out, ",{}", q[k]);
        }
        out.push('\n');
    }
    out
}

pub fn poc_csv(rows: &[PocRow]) -> String {
    let mut out = format!("{POC_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.sup_gap, r.delta_d, r.ratio);
    }
    out
}

/// Parses a trace CSV written by [`trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<CouplingTrace> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty trace CSV".into()))?;
    let has_q = match header {
        h if h == TRACE_HEADER => false,
        h if h == format!("{TRACE_HEADER},q_form") => true,
        other => {
            return Err(Error::InvalidInput(format!(
                "unexpected trace header {other:?}"
            )))
        }
    };
    let mut trace = CouplingTrace {
        q_form: has_q.then(Vec::new),
        ..Default::default()
    };
    let width = if has_q { 5 } else { 4 };
    for (row, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("row {}: {e}", row + 1)))?;
        if vals.len() != width {
            return Err(Error::InvalidInput(format!(
                "row {}: expected {width} columns, got {}",
                row + 1,
                vals.len()
            )));
        }
        trace.times.push(vals[0]);
        trace.mean_sq_dist.push(vals[1]);
        trace.second_moment_a.push(vals[2]);
        trace.second_moment_b.push(vals[3]);
        if let Some(q) = trace.q_form.as_mut() {
            q.push(vals[4]);
        }
    }
    Ok(trace)
}

pub fn read_trace_csv(path: &Path) -> Result<CouplingTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text)
}

/// File name of a labelled trace inside a report directory.
pub fn trace_file_name(label: &str) -> String {
    format!("trace_{label}.csv")
}

/// JSON summary: rates, bounds, slopes, every pass flag and the config echo.
pub fn summary_json(report: &ExperimentReport) -> serde_json::Value {
    let tests: serde_json::Map<String, serde_json::Value> = report
        .tests
        .iter()
        .map(|t| (t.name.clone(), serde_json::to_value(t).expect("plain data")))
        .collect();
    serde_json::json!({
        "experiment": report.experiment.name(),
        "pass": report.passed(),
        "fitted_rate": report.fitted_rate,
        "bound": report.theoretical_rate_bound,
        "fitted_scaling_slope": report.fitted_scaling_slope,
        "expected_scaling_slope": report.expected_scaling_slope,
        "tests": tests,
        "metrics": report.metrics,
        "notes": report.notes,
        "kinetic_constants": report.kinetic_constants,
        "config": report.config,
    })
}

/// Writes `trace_<label>.csv` per trace (a header-only `trace.csv` when
/// there is none), `poc.csv`, `picard.csv` when present, and
/// `summary.json`. Every file is written atomically.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if report.traces.is_empty() {
        write_atomically(
            &dir.join("trace.csv"),
            format!("{TRACE_HEADER}\n").as_bytes(),
        )?;
    }
    for t in &report.traces {
        write_atomically(
            &dir.join(trace_file_name(&t.label)),
            trace_csv(&t.trace).as_bytes(),
        )?;
    }
    if !report.poc_table.is_empty() {
        write_atomically(&dir.join("poc.csv"), poc_csv(&report.poc_table).as_bytes())?;
    }
    if let Some(h) = &report.picard {
        h.write_csv(&dir.join("picard.csv"))?;
    }
    let mut json = serde_json::to_string_pretty(&summary_json(report)).expect("plain data");
    json.push('\n');
    write_atomically(&dir.join("summary.json"), json.as_bytes())
}
