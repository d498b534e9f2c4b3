//! Per-iteration records shared by both solvers, their CSV form, and the
//! stopping rule.

use std::fmt::Write as _;

use crate::diagnostics::DiagnosticReport;

/// One row of a solver trace. Record `k = 0` describes the starting point, so
/// only `objective`, `rank` and `time_s` are meaningful there.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// `Φ` at the iterate the stopping rule looks at: `(Ū^k, V̄^k)` for PAMA,
    /// `(U^k, V^k)` for PALM.
    pub objective: f64,
    /// `Φ` at the half-step pair: `(Û^k, V̂^k)` for PAMA, `(U^k, V^{k-1})`
    /// for PALM.
    pub objective_mid: f64,
    /// `‖U^k − Ū^{k-1}‖_F` (PAMA) or `‖U^k − U^{k-1}‖_F` (PALM).
    pub step_u: f64,
    /// `‖V^k − V̂^k‖_F` (PAMA) or `‖V^k − V^{k-1}‖_F` (PALM).
    pub step_v: f64,
    /// Nonzero columns of the reported left factor.
    pub rank: usize,
    /// `‖X^k − X^{k-1}‖_F / ‖X^k‖_F` for the reported product.
    pub rel_change: f64,
    /// Seconds since the solver started.
    pub time_s: f64,
    pub diagnostics: Option<DiagnosticReport>,
}

impl TraceRecord {
    pub fn start(objective: f64, rank: usize, time_s: f64) -> Self {
        Self {
            k: 0,
            objective,
            objective_mid: f64::NAN,
            step_u: f64::NAN,
            step_v: f64::NAN,
            rank,
            rel_change: f64::NAN,
            time_s,
            diagnostics: None,
        }
    }
}

pub const TRACE_HEADER: &str = "k,objective,objective_mid,step_u,step_v,rank,rel_change,time_s";

/// Renders a trace as CSV. Diagnostic columns are appended when any record
/// carries a report; records without one leave them empty.
pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let with_diag = trace.iter().any(|r| r.diagnostics.is_some());
    let mut out = String::from(TRACE_HEADER);
    if with_diag {
        out.push(',');
        out.push_str(DiagnosticReport::CSV_HEADER);
    }
    out.push('\n');
    for r in trace {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k, r.objective, r.objective_mid, r.step_u, r.step_v, r.rank, r.rel_change, r.time_s
        );
        if with_diag {
            out.push(',');
            match &r.diagnostics {
                Some(d) => out.push_str(&d.csv_row()),
                None => out.push_str(&",".repeat(DiagnosticReport::CSV_HEADER.matches(',').count())),
            }
        }
        out.push('\n');
    }
    out
}

/// Stop when `k > max_iter`, when the relative change of the product is at
/// most `rel_tol`, or (from `k = 9` on) when the objective moved by at most
/// `obj_tol · max(1, Φ_k)` over each of the last nine iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingRule {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub obj_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    RelativeChange,
    ObjectiveStalled,
}

impl StoppingRule {
    pub const OBJECTIVE_LAG: usize = 9;

    /// Looks at the last record of `history`, whose index must equal its `k`.
    pub fn check(&self, history: &[TraceRecord]) -> Option<StopReason> {
        let current = history.last()?;
        let k = current.k;
        if k > self.max_iter {
            return Some(StopReason::MaxIterations);
        }
        if k >= 1 && current.rel_change <= self.rel_tol {
            return Some(StopReason::RelativeChange);
        }
        if k >= Self::OBJECTIVE_LAG && history.len() > Self::OBJECTIVE_LAG {
            let phi = current.objective;
            let spread = (1..=Self::OBJECTIVE_LAG)
                .map(|i| (phi - history[history.len() - 1 - i].objective).abs())
                .fold(0.0, f64::max);
            if spread / phi.max(1.0) <= self.obj_tol {
                return Some(StopReason::ObjectiveStalled);
            }
        }
        None
    }
}
