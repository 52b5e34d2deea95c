//! Instance quantities: SNR, MAR, dynamic range, exact isometry constants,
//! support error rate and l2 distortion.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, eigen_extremes_unchecked, IndexSet, Matrix};

mod lemmas;

pub use lemmas::{check_lemmas, LemmaCheck, LemmaId, LemmaReport, LemmaSuiteOptions};

/// Default cap on the number of subsets examined by [`exact_rip_constant`].
pub const DEFAULT_SUBSET_CAP: u64 = 2_000_000;

/// Enumerations smaller than this run on the calling thread.
const PARALLEL_THRESHOLD: u128 = 20_000;

/// A sparse vector of length `n` with explicit support and nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    n: usize,
    support: IndexSet,
    values: Vec<f64>,
}

impl SparseSignal {
    /// `support` is 1-based and may be unordered; `values[i]` belongs to
    /// `support[i]`.
    pub fn new(n: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::input(format!(
                "{} support indices but {} values",
                support.len(),
                values.len()
            )));
        }
        if n == 0 {
            return Err(Error::input("signal length must be positive"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v == 0.0) {
            return Err(Error::input(format!("support values must be finite and nonzero, got {v}")));
        }
        let mut pairs: Vec<(usize, f64)> = support.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        let set = IndexSet::within(pairs.iter().map(|p| p.0).collect(), n)?;
        Ok(SparseSignal { n, support: set, values: pairs.into_iter().map(|p| p.1).collect() })
    }

    pub fn from_dense(x: &[f64]) -> Result<Self> {
        linalg::check_finite(x, "signal")?;
        let (support, values): (Vec<usize>, Vec<f64>) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i + 1, *v))
            .unzip();
        Self::new(x.len(), support, values)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    /// Values aligned with [`SparseSignal::support`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a 1-based index, zero off the support.
    pub fn value_at(&self, index: usize) -> f64 {
        match self.support.as_slice().binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (i, v) in self.support.iter().zip(&self.values) {
            x[i - 1] = *v;
        }
        x
    }

    pub fn energy(&self) -> f64 {
        linalg::norm_sq(&self.values)
    }
}

/// `||Phi x||^2 / ||v||^2`.
///
/// Zero noise is reported as [`Error::NoiseFree`]; callers treat it as an
/// infinite SNR.
pub fn compute_snr(phi: &Matrix, x: &SparseSignal, noise: &[f64]) -> Result<f64> {
    if noise.len() != phi.rows() {
        return Err(Error::input("noise length does not match the matrix"));
    }
    let noise_energy = linalg::norm_sq(noise);
    if noise_energy == 0.0 {
        return Err(Error::NoiseFree("noise vector is zero".into()));
    }
    Ok(linalg::norm_sq(&phi.mul_vec(&x.to_dense())?) / noise_energy)
}

/// Minimum-to-average ratio `K min_j |x_j|^2 / ||x||^2`.
pub fn compute_mar(x: &SparseSignal) -> Result<f64> {
    let k = x.sparsity();
    if k == 0 {
        return Err(Error::input("MAR is undefined for an empty support"));
    }
    let min_sq = x.values().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    // clamp so that equal magnitudes give exactly 1 despite rounding in the sum
    Ok((k as f64 * min_sq / x.energy()).min(1.0))
}

/// Dynamic range `max |x_i| / min |x_j|` over the support.
pub fn compute_kappa(x: &SparseSignal) -> Result<f64> {
    if x.sparsity() == 0 {
        return Err(Error::input("kappa is undefined for an empty support"));
    }
    let (lo, hi) = x
        .values()
        .iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
    Ok(hi / lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    /// Plain ratio; infinite when there is no noise.
    pub snr: f64,
    pub mar: f64,
    pub kappa: f64,
    pub signal_energy: f64,
    pub measurement_energy: f64,
    pub noise_energy: f64,
}

impl InstanceMetrics {
    pub fn compute(phi: &Matrix, x: &SparseSignal, noise: &[f64]) -> Result<Self> {
        let snr = match compute_snr(phi, x, noise) {
            Ok(s) => s,
            Err(Error::NoiseFree(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok(InstanceMetrics {
            snr,
            mar: compute_mar(x)?,
            kappa: compute_kappa(x)?,
            signal_energy: x.energy(),
            measurement_energy: linalg::norm_sq(&phi.mul_vec(&x.to_dense())?),
            noise_energy: linalg::norm_sq(noise),
        })
    }

    pub fn is_noise_free(&self) -> bool {
        self.noise_energy == 0.0
    }
}

/// Exact isometry constant of one order with the subset attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub order: usize,
    /// `max_S max(1 - lambda_min, lambda_max - 1)` over all `|S| = order`.
    /// Values `>= 1` mean the matrix has no restricted isometry of this order.
    pub delta: f64,
    pub witness: IndexSet,
    pub subsets_examined: u64,
}

impl RipEstimate {
    /// Whether `delta < 1`.
    pub fn is_isometry(&self) -> bool {
        self.delta < 1.0
    }

    /// `order,delta,witness,subsets_examined` with witness indices joined by `;`.
    pub fn to_csv_row(&self) -> String {
        let witness: Vec<String> = self.witness.iter().map(|i| i.to_string()).collect();
        format!("{},{},{},{}", self.order, self.delta, witness.join(";"), self.subsets_examined)
    }
}

/// `C(n, k)` in u128, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances `subset` (strictly increasing, values `< bound`) to the next
/// subset in colexicographic order. Returns false after the last one.
pub(crate) fn next_colex(subset: &mut [usize], bound: usize) -> bool {
    let k = subset.len();
    for i in 0..k {
        let limit = if i + 1 < k { subset[i + 1] } else { bound };
        if subset[i] + 1 < limit {
            subset[i] += 1;
            for (j, s) in subset.iter_mut().enumerate().take(i) {
                *s = j;
            }
            return true;
        }
    }
    false
}

fn isometry_defect(gram: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let k = subset.len();
    let sub = DMatrix::from_fn(k, k, |r, c| gram[(subset[r], subset[c])]);
    let (lo, hi) = eigen_extremes_unchecked(sub);
    (1.0 - lo).max(hi - 1.0)
}

/// Best `(defect, subset)` over subsets whose largest element is `top`,
/// in colex order, first strict maximum wins.
fn scan_block(gram: &DMatrix<f64>, order: usize, top: usize) -> (f64, Vec<usize>) {
    let mut head: Vec<usize> = (0..order - 1).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    loop {
        let mut subset = head.clone();
        subset.push(top);
        let d = isometry_defect(gram, &subset);
        if d > best.0 {
            best = (d, subset);
        }
        if !next_colex(&mut head, top) {
            break;
        }
    }
    best
}

/// Exact isometry constant `delta_order` by enumerating every column subset
/// of that size.
///
/// Subsets are visited in colexicographic order and the first subset
/// attaining the maximum is the witness. Large enumerations are split by the
/// largest index in the subset and merged in that order, so the result does
/// not depend on the number of worker threads.
pub fn exact_rip_constant(phi: &Matrix, order: usize, cap: u64) -> Result<RipEstimate> {
    let n = phi.cols();
    if order == 0 || order > n {
        return Err(Error::input(format!("order {order} outside [1, {n}]")));
    }
    let total = binomial(n, order);
    if total > cap as u128 {
        return Err(Error::Capacity { required: total, cap });
    }
    let gram = phi.gram();
    let blocks = (order - 1)..n;
    let partials: Vec<(f64, Vec<usize>)> = if total >= PARALLEL_THRESHOLD {
        blocks.into_par_iter().map(|top| scan_block(&gram, order, top)).collect()
    } else {
        blocks.map(|top| scan_block(&gram, order, top)).collect()
    };
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for p in partials {
        if p.0 > best.0 {
            best = p;
        }
    }
    Ok(RipEstimate {
        order,
        delta: best.0.max(0.0),
        witness: IndexSet::new(best.1.into_iter().map(|i| i + 1).collect())?,
        subsets_examined: total as u64,
    })
}

/// Exact isometry constants keyed by order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable(BTreeMap<usize, f64>);

impl DeltaTable {
    pub fn insert(&mut self, order: usize, delta: f64) {
        self.0.insert(order, delta);
    }

    pub fn get(&self, order: usize) -> Option<f64> {
        self.0.get(&order).copied()
    }

    pub fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

/// Exact constants for each requested order (duplicates and orders above
/// `n` are ignored).
pub fn exact_delta_table(phi: &Matrix, orders: &[usize], cap: u64) -> Result<DeltaTable> {
    let mut table = DeltaTable::default();
    for &order in orders {
        if order == 0 || order > phi.cols() || table.get(order).is_some() {
            continue;
        }
        table.insert(order, exact_rip_constant(phi, order, cap)?.delta);
    }
    Ok(table)
}

/// Support comparison after a recovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub true_support: IndexSet,
    pub estimated_support: IndexSet,
    /// `T \ T^K`.
    pub missed: IndexSet,
    /// `T^K \ T`.
    pub false_alarms: IndexSet,
    /// `|T^K \ T| / |T|`.
    pub error_rate: f64,
}

impl SupportReport {
    pub fn is_exact(&self) -> bool {
        self.true_support == self.estimated_support
    }
}

pub fn support_error_rate(true_support: &IndexSet, estimated: &IndexSet) -> Result<SupportReport> {
    if true_support.is_empty() {
        return Err(Error::input("true support is empty"));
    }
    let missed = true_support.difference(estimated);
    let false_alarms = estimated.difference(true_support);
    if estimated.len() == true_support.len() {
        assert_eq!(missed.len(), false_alarms.len(), "equal-size supports differ symmetrically");
    }
    Ok(SupportReport {
        true_support: true_support.clone(),
        estimated_support: estimated.clone(),
        error_rate: false_alarms.len() as f64 / true_support.len() as f64,
        missed,
        false_alarms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    #[serde(flatten)]
    pub support: SupportReport,
    /// `||x - x^K||_2`.
    pub l2_distortion: f64,
}

pub fn recovery_report(x: &SparseSignal, estimate: &[f64], estimated: &IndexSet) -> Result<RecoveryReport> {
    if estimate.len() != x.len() {
        return Err(Error::input("estimate length does not match the signal"));
    }
    Ok(RecoveryReport {
        support: support_error_rate(x.support(), estimated)?,
        l2_distortion: linalg::norm(&linalg::sub(&x.to_dense(), estimate)),
    })
}

/// `||v|| / sqrt(1 - delta_K)`: the distortion bound once the support is
/// recovered exactly.
pub fn l2_distortion_bound(delta_k: f64, noise_norm: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta_k) {
        return Err(Error::input(format!("delta_K must lie in [0, 1), got {delta_k}")));
    }
    if noise_norm.is_nan() || noise_norm < 0.0 {
        return Err(Error::input("noise norm must be nonnegative"));
    }
    Ok(noise_norm / (1.0 - delta_k).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn pair_06() -> Matrix {
        Matrix::from_columns(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap()
    }

    #[test]
    fn snr_on_counterexample() {
        let inst = synth::appendix_a_instance(3, 8, 0.0).unwrap();
        assert_eq!(compute_snr(&inst.phi, &inst.x, &inst.noise).unwrap(), 3.0);
    }

    #[test]
    fn snr_zero_noise_is_noise_free() {
        let phi = Matrix::identity(2).unwrap();
        let x = SparseSignal::new(2, vec![1], vec![1.0]).unwrap();
        assert!(matches!(compute_snr(&phi, &x, &[0.0, 0.0]), Err(Error::NoiseFree(_))));
        let m = InstanceMetrics::compute(&phi, &x, &[0.0, 0.0]).unwrap();
        assert!(m.snr.is_infinite() && m.is_noise_free());
    }

    #[test]
    fn snr_equal_energy_is_one() {
        let phi = Matrix::identity(3).unwrap();
        let x = SparseSignal::new(3, vec![1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(compute_snr(&phi, &x, &[0.0, 0.0, 5.0]).unwrap(), 1.0);
    }

    #[test]
    fn mar_and_kappa_examples() {
        let x = SparseSignal::new(2, vec![1, 2], vec![3.0, 4.0]).unwrap();
        assert!((compute_mar(&x).unwrap() - 0.72).abs() < 1e-15);
        let eq = SparseSignal::new(9, vec![1, 4, 6, 9], vec![2.0, -2.0, 2.0, -2.0]).unwrap();
        assert_eq!(compute_mar(&eq).unwrap(), 1.0);
        assert_eq!(compute_kappa(&eq).unwrap(), 1.0);
        let x = SparseSignal::new(5, vec![2, 5], vec![-1.0, 5.0]).unwrap();
        assert_eq!(compute_kappa(&x).unwrap(), 5.0);
    }

    #[test]
    fn sparse_signal_validation() {
        assert!(SparseSignal::new(3, vec![1, 2], vec![1.0, 0.0]).is_err());
        assert!(SparseSignal::new(3, vec![4], vec![1.0]).is_err());
        assert!(SparseSignal::new(3, vec![1, 1], vec![1.0, 2.0]).is_err());
        let x = SparseSignal::new(4, vec![3, 1], vec![7.0, -2.0]).unwrap();
        assert_eq!(x.to_dense(), vec![-2.0, 0.0, 7.0, 0.0]);
        assert_eq!(SparseSignal::from_dense(&x.to_dense()).unwrap(), x);
        let empty = SparseSignal::from_dense(&[0.0, 0.0]).unwrap();
        assert!(compute_mar(&empty).is_err() && compute_kappa(&empty).is_err());
    }

    #[test]
    fn colex_order_small() {
        let mut s = vec![0, 1];
        let mut seen = vec![s.clone()];
        while next_colex(&mut s, 4) {
            seen.push(s.clone());
        }
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 3], vec![1, 3], vec![2, 3]]
        );
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(16, 2), 120);
        assert_eq!(binomial(32, 5), 201_376);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn rip_identity_is_zero() {
        let phi = Matrix::identity(6).unwrap();
        for k in 1..=6 {
            let est = exact_rip_constant(&phi, k, DEFAULT_SUBSET_CAP).unwrap();
            assert_eq!(est.delta, 0.0);
            assert_eq!(est.subsets_examined as u128, binomial(6, k));
        }
    }

    #[test]
    fn rip_correlated_pair() {
        let est = exact_rip_constant(&pair_06(), 2, 10).unwrap();
        assert!((est.delta - 0.6).abs() < 1e-12);
        assert_eq!(est.witness.as_slice(), &[1, 2]);
        assert!(est.to_csv_row().starts_with("2,0.6"));
    }

    #[test]
    fn rip_errors() {
        let phi = Matrix::identity(4).unwrap();
        assert!(matches!(exact_rip_constant(&phi, 5, 100), Err(Error::InputDomain(_))));
        assert!(matches!(exact_rip_constant(&phi, 0, 100), Err(Error::InputDomain(_))));
        assert!(matches!(exact_rip_constant(&phi, 2, 5), Err(Error::Capacity { required: 6, cap: 5 })));
    }

    #[test]
    fn rip_order_above_rows_is_flagged() {
        let phi = synth::gaussian_matrix(3, 6, 8).unwrap();
        let est = exact_rip_constant(&phi, 4, 100).unwrap();
        assert!(est.delta >= 1.0 - 1e-12);
        assert!(!est.is_isometry() || est.delta >= 1.0 - 1e-12);
    }

    #[test]
    fn rip_pairs_match_independent_scan() {
        let phi = synth::normalized_gaussian_matrix(8, 16, 12).unwrap();
        let est = exact_rip_constant(&phi, 2, DEFAULT_SUBSET_CAP).unwrap();
        // unit columns: the pair Gram is [[1, c], [c, 1]] with eigenvalues 1 ± |c|
        let mut best: f64 = 0.0;
        for i in 1..=16 {
            for j in (i + 1)..=16 {
                let c: f64 = phi.column(i).iter().zip(phi.column(j)).map(|(a, b)| a * b).sum();
                let ni: f64 = phi.column(i).iter().map(|a| a * a).sum();
                let nj: f64 = phi.column(j).iter().map(|a| a * a).sum();
                let mean = 0.5 * (ni + nj);
                let rad = (0.25 * (ni - nj).powi(2) + c * c).sqrt();
                best = best.max((1.0 - (mean - rad)).max(mean + rad - 1.0));
            }
        }
        assert!((est.delta - best).abs() < 1e-12, "{} vs {best}", est.delta);
    }

    #[test]
    fn support_error_rate_examples() {
        let t = IndexSet::new(vec![1, 2, 3, 4]).unwrap();
        let e = IndexSet::new(vec![1, 2, 3, 9]).unwrap();
        let r = support_error_rate(&t, &e).unwrap();
        assert_eq!(r.error_rate, 0.25);
        assert_eq!(r.missed.as_slice(), &[4]);
        assert_eq!(r.false_alarms.as_slice(), &[9]);
        assert!(!r.is_exact());
        let r = support_error_rate(&t, &t).unwrap();
        assert_eq!(r.error_rate, 0.0);
        assert!(r.is_exact());
        assert!(support_error_rate(&IndexSet::empty(), &t).is_err());
    }

    #[test]
    fn distortion_bound_examples() {
        assert_eq!(l2_distortion_bound(0.0, 1.5).unwrap(), 1.5);
        assert_eq!(l2_distortion_bound(0.75, 1.0).unwrap(), 2.0);
        assert!(l2_distortion_bound(1.0, 1.0).is_err());
    }
}
