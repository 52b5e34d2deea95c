//! Closed-form recovery thresholds and per-instance condition verdicts.
//!
//! Thresholds come in two scales: `sqrt_snr` (as the inequalities are
//! written) and `snr` (the squared value, evaluated directly from the squared
//! formula so that e.g. `K` comes out exactly at `delta = 0, MAR = 1`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{DeltaTable, InstanceMetrics, SparseSignal};

/// Strict inequalities hold when `actual - threshold` exceeds this.
pub const STRICT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub sqrt_snr: f64,
    pub snr: f64,
}

fn check_k_mar(k: usize, mar: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::input("K must be positive"));
    }
    if !(mar > 0.0 && mar <= 1.0) {
        return Err(Error::input(format!("MAR must lie in (0, 1], got {mar}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::input(format!("isometry constant must be finite and nonnegative, got {delta}")));
    }
    Ok(())
}

/// Largest `delta_{K+1}` for which the sufficient condition applies: `1/(sqrt K + 1)`.
pub fn sufficient_delta_limit(k: usize) -> f64 {
    1.0 / ((k as f64).sqrt() + 1.0)
}

/// Largest `delta_{K+1}` for which the necessary threshold is finite: `1/sqrt K`.
pub fn necessary_delta_limit(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}

/// `sqrt SNR > 2 sqrt K (1 + delta) / ((1 - (sqrt K + 1) delta) sqrt MAR)`.
pub fn sufficient_snr_threshold(k: usize, delta: f64, mar: f64) -> Result<Threshold> {
    check_k_mar(k, mar)?;
    check_delta(delta)?;
    if delta >= sufficient_delta_limit(k) {
        return Err(Error::HypothesisViolated(format!(
            "delta_{{K+1}} = {delta} >= 1/(sqrt({k}) + 1) = {}",
            sufficient_delta_limit(k)
        )));
    }
    let sk = (k as f64).sqrt();
    let den = 1.0 - (sk + 1.0) * delta;
    Ok(Threshold {
        sqrt_snr: 2.0 * sk * (1.0 + delta) / (den * mar.sqrt()),
        snr: 4.0 * k as f64 * (1.0 + delta).powi(2) / (den * den * mar),
    })
}

/// `sqrt SNR > sqrt K (1 + delta) / ((1 - sqrt K delta) sqrt MAR)`.
pub fn necessary_snr_threshold(k: usize, delta: f64, mar: f64) -> Result<Threshold> {
    check_k_mar(k, mar)?;
    check_delta(delta)?;
    if delta >= necessary_delta_limit(k) {
        return Err(Error::HypothesisViolated(format!(
            "delta_{{K+1}} = {delta} >= 1/sqrt({k}) = {}",
            necessary_delta_limit(k)
        )));
    }
    let sk = (k as f64).sqrt();
    let den = 1.0 - sk * delta;
    Ok(Threshold {
        sqrt_snr: sk * (1.0 + delta) / (den * mar.sqrt()),
        snr: k as f64 * (1.0 + delta).powi(2) / (den * den * mar),
    })
}

/// Condition for a correct first selection:
/// `sqrt SNR > (sqrt K + 1)(1 + delta) / (1 - (sqrt K + 1) delta)`.
pub fn first_iteration_threshold(k: usize, delta: f64) -> Result<Threshold> {
    check_k_mar(k, 1.0)?;
    check_delta(delta)?;
    if delta >= sufficient_delta_limit(k) {
        return Err(Error::HypothesisViolated(format!("delta_{{K+1}} = {delta} >= 1/(sqrt({k}) + 1)")));
    }
    let a = (k as f64).sqrt() + 1.0;
    let den = 1.0 - a * delta;
    let t = a * (1.0 + delta) / den;
    Ok(Threshold { sqrt_snr: t, snr: (a * (1.0 + delta)).powi(2) / (den * den) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dominance {
    pub dominates: bool,
    pub sufficient: Threshold,
    pub first_iteration: Threshold,
}

/// Whether the overall sufficient threshold is at least the first-iteration
/// one, so that it alone guarantees every selection.
pub fn sufficient_threshold_dominates(k: usize, delta: f64, mar: f64) -> Result<Dominance> {
    let sufficient = sufficient_snr_threshold(k, delta, mar)?;
    let first_iteration = first_iteration_threshold(k, delta)?;
    Ok(Dominance {
        dominates: sufficient.sqrt_snr >= first_iteration.sqrt_snr * (1.0 - 1e-15),
        sufficient,
        first_iteration,
    })
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::input(format!("kappa must be >= 1, got {kappa}")));
    }
    Ok(())
}

/// `kappa^2 delta_{2K}^{-3/2}`. A zero constant means only the noise-free
/// regime qualifies, reported as [`Error::NoiseFree`].
pub fn theorem3_snr_floor(kappa: f64, delta_2k: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if delta_2k == 0.0 {
        return Err(Error::NoiseFree("delta_2K = 0 requires infinite SNR".into()));
    }
    if !(delta_2k > 0.0 && delta_2k < 1.0) {
        return Err(Error::input(format!("delta_2K must lie in (0, 1), got {delta_2k}")));
    }
    Ok(kappa * kappa * delta_2k.powf(-1.5))
}

/// `min(1, C kappa^2 sqrt(delta_2K))`.
pub fn theorem3_error_rate_bound(kappa: f64, delta_2k: f64, c: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::input(format!("C must be positive, got {c}")));
    }
    if !(0.0..1.0).contains(&delta_2k) {
        return Err(Error::input(format!("delta_2K must lie in [0, 1), got {delta_2k}")));
    }
    Ok((c * kappa * kappa * delta_2k.sqrt()).min(1.0))
}

/// One observation for calibrating the constant in the error-rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub rho: f64,
    pub kappa: f64,
    pub delta_2k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// Smallest `C` with `rho <= C kappa^2 sqrt(delta_2K)` on every point;
    /// `None` when every point has `rho = 0`.
    pub c_star: Option<f64>,
    pub points: usize,
    pub nonzero_error_points: usize,
}

/// Empirical constant `max rho / (kappa^2 sqrt(delta_2K))`.
///
/// A point with `delta_2K = 0` and `rho > 0` would make the constant
/// infinite and is reported as an error.
pub fn calibrate_c(points: &[CalibrationPoint]) -> Result<Calibration> {
    let mut c_star: Option<f64> = None;
    let mut nonzero = 0;
    for p in points {
        check_kappa(p.kappa)?;
        if p.rho == 0.0 {
            continue;
        }
        nonzero += 1;
        if p.delta_2k <= 0.0 {
            return Err(Error::Consistency(format!(
                "error rate {} with delta_2K = {} leaves C unbounded",
                p.rho, p.delta_2k
            )));
        }
        let ratio = p.rho / (p.kappa * p.kappa * p.delta_2k.sqrt());
        c_star = Some(c_star.map_or(ratio, |c| c.max(ratio)));
    }
    Ok(Calibration { c_star, points: points.len(), nonzero_error_points: nonzero })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum ConditionId {
    THM1_SUFFICIENT,
    THM2_NECESSARY,
    REMARK_SNR_GT_K,
    THM3_SNR_FLOOR,
    RIP_SHAPE_THM1,
}

impl ConditionId {
    pub const ALL: [ConditionId; 5] = [
        ConditionId::THM1_SUFFICIENT,
        ConditionId::THM2_NECESSARY,
        ConditionId::REMARK_SNR_GT_K,
        ConditionId::THM3_SNR_FLOOR,
        ConditionId::RIP_SHAPE_THM1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionId::THM1_SUFFICIENT => "THM1_SUFFICIENT",
            ConditionId::THM2_NECESSARY => "THM2_NECESSARY",
            ConditionId::REMARK_SNR_GT_K => "REMARK_SNR_GT_K",
            ConditionId::THM3_SNR_FLOOR => "THM3_SNR_FLOOR",
            ConditionId::RIP_SHAPE_THM1 => "RIP_SHAPE_THM1",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One condition evaluated on one instance.
///
/// SNR conditions compare on the SNR scale. `RIP_SHAPE_THM1` compares
/// `delta_{K+1}` against `1/(sqrt K + 1)` and holds when the constant is
/// strictly below it, i.e. when `margin < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub id: ConditionId,
    pub holds: bool,
    pub threshold: f64,
    pub actual: f64,
    /// `actual - threshold`.
    pub margin: f64,
}

impl ConditionVerdict {
    fn strict(id: ConditionId, threshold: f64, actual: f64) -> Self {
        let margin = actual - threshold;
        let holds = actual == f64::INFINITY && threshold.is_finite() || margin > STRICT_MARGIN;
        ConditionVerdict { id, holds, threshold, actual, margin }
    }

    /// `condition_id,holds,threshold,actual,margin`.
    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.id, self.holds, self.threshold, self.actual, self.margin)
    }
}

/// Where an instance sits relative to the two SNR thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Sufficient condition (with its isometry hypothesis) holds: recovery is guaranteed.
    Guaranteed,
    /// Necessary condition fails: some instance with these parameters fails.
    BelowNecessary,
    /// Between the two, or a needed hypothesis is unmet: the theory is silent.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub metrics: InstanceMetrics,
    pub verdicts: Vec<ConditionVerdict>,
    pub region: Region,
}

impl Classification {
    pub fn verdict(&self, id: ConditionId) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    pub fn holds(&self, id: ConditionId) -> Option<bool> {
        self.verdict(id).map(|v| v.holds)
    }
}

/// Evaluates every applicable condition. Conditions whose constants are
/// missing from `deltas` or whose hypothesis fails are left out.
pub fn classify_instance(
    phi: &Matrix,
    x: &SparseSignal,
    noise: &[f64],
    deltas: &DeltaTable,
) -> Result<Classification> {
    let metrics = InstanceMetrics::compute(phi, x, noise)?;
    let k = x.sparsity();
    let snr = metrics.snr;
    let mut verdicts = Vec::new();

    let d_next = deltas.get(k + 1);
    if let Some(d) = d_next {
        let limit = sufficient_delta_limit(k);
        let margin = d - limit;
        verdicts.push(ConditionVerdict {
            id: ConditionId::RIP_SHAPE_THM1,
            holds: d < limit,
            threshold: limit,
            actual: d,
            margin,
        });
        if let Ok(t) = sufficient_snr_threshold(k, d, metrics.mar) {
            verdicts.push(ConditionVerdict::strict(ConditionId::THM1_SUFFICIENT, t.snr, snr));
        }
        if let Ok(t) = necessary_snr_threshold(k, d, metrics.mar) {
            verdicts.push(ConditionVerdict::strict(ConditionId::THM2_NECESSARY, t.snr, snr));
        }
    }
    verdicts.push(ConditionVerdict::strict(ConditionId::REMARK_SNR_GT_K, k as f64, snr));

    if let Some(d2k) = deltas.get(2 * k) {
        let floor = match theorem3_snr_floor(metrics.kappa, d2k) {
            Ok(f) => Some(f),
            Err(Error::NoiseFree(_)) => Some(f64::INFINITY),
            Err(_) => None,
        };
        if let Some(threshold) = floor {
            let margin = snr - threshold;
            let holds = if threshold.is_infinite() { snr.is_infinite() } else { snr >= threshold };
            verdicts.push(ConditionVerdict { id: ConditionId::THM3_SNR_FLOOR, holds, threshold, actual: snr, margin });
        }
    }
    verdicts.sort_by_key(|v| v.id);

    let find = |id| verdicts.iter().find(|v: &&ConditionVerdict| v.id == id).map(|v| v.holds);
    let region = match (find(ConditionId::THM1_SUFFICIENT), find(ConditionId::THM2_NECESSARY)) {
        (Some(true), _) => Region::Guaranteed,
        (_, Some(false)) => Region::BelowNecessary,
        _ => Region::Indeterminate,
    };
    Ok(Classification { metrics, verdicts, region })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::exact_delta_table;
    use crate::synth;

    #[test]
    fn sufficient_examples() {
        let t = sufficient_snr_threshold(4, 0.0, 1.0).unwrap();
        assert_eq!(t.sqrt_snr, 4.0);
        assert_eq!(t.snr, 16.0);
        let near = sufficient_snr_threshold(4, 1.0 / 3.0 - 1e-9, 1.0).unwrap();
        assert!(near.sqrt_snr > 1e8);
        assert!(matches!(sufficient_snr_threshold(4, 1.0 / 3.0, 1.0), Err(Error::HypothesisViolated(_))));
        let t = sufficient_snr_threshold(2, 0.2, 0.5).unwrap();
        let independent = 2.0 * 2f64.sqrt() * 1.2 / ((1.0 - (2f64.sqrt() + 1.0) * 0.2) * 0.5f64.sqrt());
        assert!((t.sqrt_snr - independent).abs() < 1e-12 * independent);
        assert!((t.snr - independent * independent).abs() < 1e-12 * t.snr);
    }

    #[test]
    fn necessary_examples() {
        for k in 1..=20 {
            assert_eq!(necessary_snr_threshold(k, 0.0, 1.0).unwrap().snr, k as f64);
        }
        assert_eq!(necessary_snr_threshold(1, 0.0, 1.0).unwrap().sqrt_snr, 1.0);
        let t = necessary_snr_threshold(3, 0.1, 0.8).unwrap();
        let independent = 3f64.sqrt() * 1.1 / ((1.0 - 3f64.sqrt() * 0.1) * 0.8f64.sqrt());
        assert!((t.sqrt_snr - independent).abs() < 1e-12 * independent);
        assert!(necessary_snr_threshold(4, 0.5, 1.0).is_err());
    }

    #[test]
    fn dominance_examples() {
        let d = sufficient_threshold_dominates(4, 0.0, 1.0).unwrap();
        assert!(d.dominates);
        assert_eq!(d.sufficient.sqrt_snr, 4.0);
        assert_eq!(d.first_iteration.sqrt_snr, 3.0);
        // K = 1, MAR = 1: both sides are 2(1 + delta)/(1 - 2 delta)
        let d = sufficient_threshold_dominates(1, 0.3, 1.0).unwrap();
        assert!(d.dominates);
        assert!((d.sufficient.sqrt_snr - 2.0 * 1.3 / 0.4).abs() < 1e-12);
        assert!((d.first_iteration.sqrt_snr - 2.0 * 1.3 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn theorem3_examples() {
        assert!((theorem3_snr_floor(1.0, 0.25).unwrap() - 8.0).abs() < 1e-12);
        assert!(matches!(theorem3_snr_floor(1.0, 0.0), Err(Error::NoiseFree(_))));
        let f = theorem3_snr_floor(2.0, 0.09).unwrap();
        assert!((f - 4.0 / 0.027).abs() < 1e-9);
        assert_eq!(theorem3_error_rate_bound(3.0, 0.0, 5.0).unwrap(), 0.0);
        assert!((theorem3_error_rate_bound(1.0, 0.04, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(theorem3_error_rate_bound(4.0, 0.5, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn calibration() {
        let pts = [
            CalibrationPoint { rho: 0.0, kappa: 1.0, delta_2k: 0.3 },
            CalibrationPoint { rho: 0.5, kappa: 1.0, delta_2k: 0.25 },
            CalibrationPoint { rho: 0.2, kappa: 2.0, delta_2k: 0.04 },
        ];
        let c = calibrate_c(&pts).unwrap();
        assert_eq!(c.c_star, Some(1.0));
        assert_eq!(c.nonzero_error_points, 2);
        let bad = [CalibrationPoint { rho: 0.1, kappa: 1.0, delta_2k: 0.0 }];
        assert!(calibrate_c(&bad).is_err());
        assert_eq!(calibrate_c(&pts[..1]).unwrap().c_star, None);
    }

    #[test]
    fn counterexample_fails_necessary_condition() {
        let inst = synth::appendix_a_instance(3, 8, 0.0).unwrap();
        let deltas = exact_delta_table(&inst.phi, &[1, 4, 6], 10_000).unwrap();
        let c = classify_instance(&inst.phi, &inst.x, &inst.noise, &deltas).unwrap();
        assert_eq!(c.metrics.snr, 3.0);
        assert_eq!(c.holds(ConditionId::THM2_NECESSARY), Some(false));
        assert_eq!(c.holds(ConditionId::REMARK_SNR_GT_K), Some(false));
        assert_eq!(c.holds(ConditionId::RIP_SHAPE_THM1), Some(true));
        assert_eq!(c.region, Region::BelowNecessary);
        // delta_6 = 0 puts the floor at infinity
        assert_eq!(c.holds(ConditionId::THM3_SNR_FLOOR), Some(false));
    }

    #[test]
    fn noise_free_satisfies_snr_conditions() {
        let phi = Matrix::identity(6).unwrap();
        let x = crate::metrics::SparseSignal::new(6, vec![2, 4], vec![1.0, -3.0]).unwrap();
        let deltas = exact_delta_table(&phi, &[3, 4], 1000).unwrap();
        let c = classify_instance(&phi, &x, &[0.0; 6], &deltas).unwrap();
        for id in [ConditionId::THM1_SUFFICIENT, ConditionId::THM2_NECESSARY, ConditionId::REMARK_SNR_GT_K, ConditionId::THM3_SNR_FLOOR] {
            assert_eq!(c.holds(id), Some(true), "{id}");
        }
        assert_eq!(c.region, Region::Guaranteed);
    }

    #[test]
    fn verdict_csv_row() {
        let v = ConditionVerdict::strict(ConditionId::REMARK_SNR_GT_K, 3.0, 5.0);
        assert_eq!(v.to_csv_row(), "REMARK_SNR_GT_K,true,3,5,2");
    }
}
