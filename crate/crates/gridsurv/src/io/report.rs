//! Comma-separated run reports, one row per planning run.

use gridsurv_core::contingency::count_states;
use gridsurv_core::model::PowerSystem;
use gridsurv_core::planner::{Algorithm, PlanReport, PlannerConfig, Termination};

pub const COLUMNS: [&str; 13] = [
    "instance",
    "m",
    "k",
    "epsilon",
    "algorithm",
    "runtime_s",
    "iterations",
    "cuts",
    "rmp_s",
    "psip_s",
    "dsp_s",
    "objective",
    "status",
];

/// One report line. `None` cells are written as `x`, the mark for a phase
/// that does not apply or a value the run did not reach.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub instance: String,
    /// Number of contingency states `|S(k)|`.
    pub m: Option<u64>,
    pub k: usize,
    /// Allowance of the largest cardinality.
    pub epsilon: f64,
    pub algorithm: String,
    pub runtime_s: Option<f64>,
    pub iterations: usize,
    pub cuts: usize,
    pub rmp_s: Option<f64>,
    pub psip_s: Option<f64>,
    pub dsp_s: Option<f64>,
    pub objective: Option<f64>,
    pub status: String,
}

impl ReportRow {
    /// Summarizes a run. Runs stopped by a limit report `x` for runtime and
    /// objective; phases an algorithm does not have are `x` as well.
    pub fn from_run(instance: &str, sys: &PowerSystem, cfg: &PlannerConfig, report: &PlanReport) -> Self {
        let finished = matches!(report.termination, Termination::Optimal | Termination::Infeasible);
        let t = &report.times;
        let (rmp, psip, dsp) = match report.algorithm {
            Algorithm::Extensive => (None, None, None),
            Algorithm::Benders => (Some(t.master), None, Some(t.subproblem)),
            Algorithm::CuttingPlane => (Some(t.master), Some(t.separation), Some(t.subproblem)),
        };
        ReportRow {
            instance: instance.to_string(),
            m: count_states(sys.num_elements(), cfg.policy.k).ok(),
            k: cfg.policy.k,
            epsilon: cfg.policy.epsilon.last().copied().unwrap_or(0.0),
            algorithm: report.algorithm.short_name().to_string(),
            runtime_s: finished.then_some(report.total_time),
            iterations: report.iterations,
            cuts: report.cuts.len(),
            rmp_s: rmp,
            psip_s: psip,
            dsp_s: dsp,
            objective: (report.termination == Termination::Optimal).then(|| report.objective()).flatten(),
            status: report.termination.as_str().to_string(),
        }
    }

    fn cells(&self) -> [String; 13] {
        let num = |v: Option<f64>| v.map_or_else(|| "x".to_string(), |v| format!("{v:.3}"));
        [
            self.instance.clone(),
            self.m.map_or_else(|| "x".to_string(), |m| m.to_string()),
            self.k.to_string(),
            format!("{:.3}", self.epsilon),
            self.algorithm.clone(),
            num(self.runtime_s),
            self.iterations.to_string(),
            self.cuts.to_string(),
            num(self.rmp_s),
            num(self.psip_s),
            num(self.dsp_s),
            num(self.objective),
            self.status.clone(),
        ]
    }
}

/// Header plus one line per row.
pub fn write_report(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("writing to memory");
    for row in rows {
        w.write_record(row.cells()).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("cells are UTF-8")
}
