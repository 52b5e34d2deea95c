//! Orthogonal Matching Pursuit.
//!
//! The plain (non column-normalized) variant: at every iteration the column
//! most correlated with the current residual joins the support, the
//! coefficients are re-fit by least squares on the whole support, and the
//! residual is recomputed from the measurements.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, IndexSet, Matrix, SupportFactor};

mod diagnostics;

pub use diagnostics::{
    verify_iteration_inequalities, DiagnosticsReport, IterationDiagnostics, SelectionBounds,
    DIAGNOSTIC_RELATIVE_TOLERANCE,
};

/// Correlations within this absolute distance of the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Run exactly `K` iterations.
    FixedIterations(usize),
    /// Stop once `||r^k||_2 <= eps` (absolute).
    ResidualNorm(f64),
    /// Stop once `||Phi' r^k||_inf <= eps` (absolute).
    CorrelationNorm(f64),
}

impl StoppingRule {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        match *self {
            StoppingRule::FixedIterations(k) => {
                if k == 0 {
                    Err(Error::input("iteration count must be positive"))
                } else if k > rows || k > cols {
                    Err(Error::input(format!(
                        "cannot run {k} iterations on a {rows}x{cols} matrix"
                    )))
                } else {
                    Ok(())
                }
            }
            StoppingRule::ResidualNorm(eps) | StoppingRule::CorrelationNorm(eps) => {
                if eps.is_finite() && eps >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::input(format!("tolerance must be finite and nonnegative, got {eps}")))
                }
            }
        }
    }
}

/// Outcome of one identification step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// 1-based column index.
    pub index: usize,
    /// `|<phi_index, r>|`.
    pub correlation: f64,
    pub tie_detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub selected_index: usize,
    pub support_after: IndexSet,
    /// Least-squares coefficients, aligned with `support_after`.
    pub coefficients: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_correlation: f64,
    pub tie_detected: bool,
}

impl IterationRecord {
    pub fn residual_norm(&self) -> f64 {
        linalg::norm(&self.residual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrace {
    pub rule: StoppingRule,
    pub iterations: Vec<IterationRecord>,
    pub final_support: IndexSet,
    /// Coefficients embedded in a length-`n` vector, zero off the support.
    pub final_estimate: Vec<f64>,
    pub final_residual: Vec<f64>,
}

impl RecoveryTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.iterations.iter().map(|it| it.selected_index).collect()
    }

    /// Residual `r^k` for `k = 0..=len`, where `r^0 = y`.
    pub fn residual(&self, k: usize, y: &[f64]) -> Vec<f64> {
        if k == 0 {
            y.to_vec()
        } else {
            self.iterations[k - 1].residual.clone()
        }
    }

    /// Support `T^k` for `k = 0..=len`.
    pub fn support(&self, k: usize) -> IndexSet {
        if k == 0 {
            IndexSet::empty()
        } else {
            self.iterations[k - 1].support_after.clone()
        }
    }

    /// One line per iteration: `k t_k max_correlation residual_norm tie`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# k selected max_correlation residual_norm tie\n");
        for it in &self.iterations {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                it.k,
                it.selected_index,
                it.max_correlation,
                it.residual_norm(),
                u8::from(it.tie_detected)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Column in `[1, n] \ excluded` maximizing `|<phi_i, r>|`, lowest index
/// among ties.
pub fn identify_index(phi: &Matrix, r: &[f64], excluded: &IndexSet) -> Result<Selection> {
    if r.len() != phi.rows() {
        return Err(Error::input(format!(
            "residual length {} does not match {} rows",
            r.len(),
            phi.rows()
        )));
    }
    excluded.check_bound(phi.cols())?;
    let scores: Vec<(usize, f64)> = (1..=phi.cols())
        .filter(|i| !excluded.contains(*i))
        .map(|i| (i, linalg::dot(phi.column(i), r).abs()))
        .collect();
    let best = scores
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() {
        return Err(Error::input("every column is excluded"));
    }
    let mut near = scores.iter().filter(|&&(_, s)| s >= best - TIE_TOLERANCE);
    let &(index, correlation) = near.next().expect("maximum is attained");
    Ok(Selection { index, correlation, tie_detected: near.next().is_some() })
}

/// Runs OMP on `y = Phi x + v` until `rule` fires.
///
/// Under the residual and correlation rules at most `min(m, n)` iterations
/// are performed.
pub fn run_omp(phi: &Matrix, y: &[f64], rule: StoppingRule) -> Result<RecoveryTrace> {
    let (m, n) = (phi.rows(), phi.cols());
    if y.len() != m {
        return Err(Error::input(format!("measurement length {} does not match {m} rows", y.len())));
    }
    linalg::check_finite(y, "measurement")?;
    rule.validate(m, n)?;

    let cap = match rule {
        StoppingRule::FixedIterations(k) => k,
        _ => m.min(n),
    };
    let mut trace = RecoveryTrace {
        rule,
        iterations: Vec::new(),
        final_support: IndexSet::empty(),
        final_estimate: vec![0.0; n],
        final_residual: y.to_vec(),
    };
    let mut support = IndexSet::empty();
    let mut residual = y.to_vec();

    for k in 1..=cap {
        let stop = match rule {
            StoppingRule::FixedIterations(_) => false,
            StoppingRule::ResidualNorm(eps) => linalg::norm(&residual) <= eps,
            StoppingRule::CorrelationNorm(eps) => {
                linalg::max_abs(&phi.correlations(&residual)?) <= eps
            }
        };
        if stop {
            break;
        }
        let sel = identify_index(phi, &residual, &support)?;
        support.insert(sel.index);
        let factor = match SupportFactor::new(phi, &support) {
            Ok(f) => f,
            Err(Error::DegenerateSystem(reason)) => {
                return Err(Error::DegenerateRun { iteration: k, reason, partial: Box::new(trace) });
            }
            Err(e) => return Err(e),
        };
        let coefficients = factor.solve(y)?;
        let mut estimate = vec![0.0; n];
        for (idx, &c) in support.iter().zip(&coefficients) {
            estimate[idx - 1] = c;
        }
        residual = linalg::sub(y, &phi.mul_vec(&estimate)?);

        trace.iterations.push(IterationRecord {
            k,
            selected_index: sel.index,
            support_after: support.clone(),
            coefficients,
            residual: residual.clone(),
            max_correlation: sel.correlation,
            tie_detected: sel.tie_detected,
        });
        trace.final_support = support.clone();
        trace.final_estimate = estimate;
        trace.final_residual = residual.clone();
    }
    Ok(trace)
}
