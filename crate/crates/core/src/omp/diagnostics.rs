//! Runtime checks of the per-iteration inequalities OMP must satisfy.
//!
//! For every iteration `k -> k+1` of a trace produced from `y = Phi x + v`:
//!
//! * energy drop: `||r^k||^2 - ||r^{k+1}||^2 >= ||Phi' r^k||_inf^2 / (1 + delta_1)`
//! * residual monotonicity and orthogonality of `r^{k+1}` to the selected columns
//! * while `T^k ⊂ T`, the correlation bounds
//!   `u >= ((1 - delta_K) ||x_{T\T^k}|| - sqrt(1 + delta_K) ||v||) / sqrt(K - k)` and
//!   `v̄ <= delta_{K+1} ||x_{T\T^k}|| + sqrt(1 + delta_1) ||v||`,
//!   where `u` (`v̄`) is the largest correlation over the remaining correct
//!   (incorrect) columns.

use serde::Serialize;

use super::RecoveryTrace;
use crate::error::{Error, Result};
use crate::linalg::{self, IndexSet, Matrix, SupportFactor};
use crate::metrics::{DeltaTable, SparseSignal};

/// Slack, relative to the dominant term of each inequality.
pub const DIAGNOSTIC_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Stored residuals must match a fresh projection to this relative accuracy.
const CONSISTENCY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionBounds {
    pub u: f64,
    pub u_lower: f64,
    pub u_ok: bool,
    /// `None` when every column belongs to the true support.
    pub v_bar: Option<f64>,
    pub v_upper: f64,
    pub v_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    /// Transition `r^k -> r^{k+1}`.
    pub k: usize,
    pub energy_drop: f64,
    pub energy_bound: f64,
    pub energy_ok: bool,
    pub monotone_ok: bool,
    /// `max_{i in T^{k+1}} |<phi_i, r^{k+1}>|`.
    pub orthogonality_residual: f64,
    pub orthogonality_ok: bool,
    /// Present while the first `k` selections were all correct and the
    /// needed isometry constants are known.
    pub selection_bounds: Option<SelectionBounds>,
}

impl IterationDiagnostics {
    pub fn violations(&self) -> usize {
        let bounds = self
            .selection_bounds
            .as_ref()
            .map_or(0, |b| usize::from(!b.u_ok) + usize::from(!b.v_ok));
        usize::from(!self.energy_ok)
            + usize::from(!self.monotone_ok)
            + usize::from(!self.orthogonality_ok)
            + bounds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub iterations: Vec<IterationDiagnostics>,
}

impl DiagnosticsReport {
    pub fn violations(&self) -> usize {
        self.iterations.iter().map(IterationDiagnostics::violations).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    /// Number of iterations where the selection bounds were evaluated.
    pub fn bounds_checked(&self) -> usize {
        self.iterations.iter().filter(|d| d.selection_bounds.is_some()).count()
    }
}

/// Checks `trace` against the instance `(phi, x, noise)`.
///
/// `deltas` must hold `delta_1`; the selection bounds additionally need
/// `delta_K` and `delta_{K+1}` for `K = |supp(x)|` and are skipped otherwise.
pub fn verify_iteration_inequalities(
    phi: &Matrix,
    x: &SparseSignal,
    noise: &[f64],
    trace: &RecoveryTrace,
    deltas: &DeltaTable,
) -> Result<DiagnosticsReport> {
    if x.len() != phi.cols() || noise.len() != phi.rows() {
        return Err(Error::input("signal or noise dimension does not match the matrix"));
    }
    let delta1 = deltas
        .get(1)
        .ok_or_else(|| Error::input("delta_1 is required for iteration diagnostics"))?;
    let y = linalg::add(&phi.mul_vec(&x.to_dense())?, noise);
    let y_norm = linalg::norm(&y);
    let col_scale = phi.column_norms_sq().into_iter().fold(0.0_f64, f64::max).sqrt();
    let noise_norm = linalg::norm(noise);
    let truth = x.support();
    let big_k = truth.len();
    let rip = deltas.get(big_k).zip(deltas.get(big_k + 1));

    // consistency: every stored residual is the projection of y off its support
    for k in 1..=trace.len() {
        let fresh = SupportFactor::new(phi, &trace.support(k))?.project_out(&y)?;
        let stored = &trace.iterations[k - 1].residual;
        let diff = linalg::norm(&linalg::sub(&fresh, stored));
        if diff > CONSISTENCY_TOLERANCE * y_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Consistency(format!(
                "residual at iteration {k} differs from a fresh projection by {diff:e}"
            )));
        }
    }

    let tol = DIAGNOSTIC_RELATIVE_TOLERANCE;
    let mut out = Vec::with_capacity(trace.len());
    for k in 0..trace.len() {
        let r_k = trace.residual(k, &y);
        let r_next = &trace.iterations[k].residual;
        let support_k = trace.support(k);
        let support_next = &trace.iterations[k].support_after;
        let corr = phi.correlations(&r_k)?;

        let energy_drop = linalg::norm_sq(&r_k) - linalg::norm_sq(r_next);
        let energy_bound = linalg::max_abs(&corr).powi(2) / (1.0 + delta1);
        let energy_ok = energy_drop >= energy_bound - tol * y_norm * y_norm;

        let monotone_ok = linalg::norm(r_next) <= linalg::norm(&r_k) + 1e-12 * y_norm.max(1.0);

        let orthogonality_residual = support_next
            .iter()
            .map(|i| linalg::dot(phi.column(i), r_next).abs())
            .fold(0.0, f64::max);
        let orthogonality_ok = orthogonality_residual <= tol * y_norm * col_scale + 1e-12;

        let selection_bounds = match rip {
            Some((delta_k, delta_k1)) if k < big_k && support_k.is_subset(truth) => Some(
                selection_bounds(x, truth, &support_k, &corr, noise_norm, delta1, delta_k, delta_k1),
            ),
            _ => None,
        };

        out.push(IterationDiagnostics {
            k,
            energy_drop,
            energy_bound,
            energy_ok,
            monotone_ok,
            orthogonality_residual,
            orthogonality_ok,
            selection_bounds,
        });
    }
    Ok(DiagnosticsReport { iterations: out })
}

#[allow(clippy::too_many_arguments)]
fn selection_bounds(
    x: &SparseSignal,
    truth: &IndexSet,
    support_k: &IndexSet,
    corr: &[f64],
    noise_norm: f64,
    delta1: f64,
    delta_k: f64,
    delta_k1: f64,
) -> SelectionBounds {
    let remaining = truth.difference(support_k);
    let remaining_energy: f64 = remaining.iter().map(|i| x.value_at(i).powi(2)).sum();
    let x_rem = remaining_energy.sqrt();
    let kk = remaining.len() as f64;

    let u = remaining.iter().map(|i| corr[i - 1].abs()).fold(0.0, f64::max);
    let signal_term = (1.0 - delta_k) * x_rem;
    let noise_term = (1.0 + delta_k).sqrt() * noise_norm;
    let u_lower = (signal_term - noise_term) / kk.sqrt();
    let u_scale = signal_term.abs() + noise_term + u;
    let u_ok = u >= u_lower - DIAGNOSTIC_RELATIVE_TOLERANCE * u_scale;

    let v_bar = (1..=corr.len())
        .filter(|i| !truth.contains(*i))
        .map(|i| corr[i - 1].abs())
        .reduce(f64::max);
    let v_upper = delta_k1 * x_rem + (1.0 + delta1).sqrt() * noise_norm;
    let v_ok = match v_bar {
        Some(v) => v <= v_upper + DIAGNOSTIC_RELATIVE_TOLERANCE * (v_upper + v),
        None => true,
    };
    SelectionBounds { u, u_lower, u_ok, v_bar, v_upper, v_ok }
}
