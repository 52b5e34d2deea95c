//! Randomized checks of the standard isometry-constant lemmas on a concrete
//! matrix, using exact constants.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{exact_delta_table, DeltaTable};
use crate::error::{Error, Result};
use crate::linalg::{eigen_extremes_unchecked, IndexSet, Matrix, SupportFactor};
use crate::synth::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum LemmaId {
    /// `delta_{K1} <= delta_{K2}` for `K1 <= K2`.
    Monotonicity,
    /// Sandwich bounds on `||G_S u||` and `||G_S^{-1} u||`.
    GramSandwich,
    /// `||Phi_S1' Phi_S2 v|| <= delta_{|S1|+|S2|} ||v||`.
    CrossCorrelation,
    /// `||Phi_S1' P_S3^perp Phi_S2 v|| <= delta_{|S1|+|S2|+|S3|} ||v||`.
    ProjectedCrossCorrelation,
    /// `||Phi_S' u|| <= sqrt(1 + delta_|S|) ||u||`.
    AdjointNorm,
    /// Eigenvalues of `Phi_S1' P_S2^perp Phi_S1` lie inside those of the joint Gram.
    Interlacing,
}

impl LemmaId {
    pub const ALL: [LemmaId; 6] = [
        LemmaId::Monotonicity,
        LemmaId::GramSandwich,
        LemmaId::CrossCorrelation,
        LemmaId::ProjectedCrossCorrelation,
        LemmaId::AdjointNorm,
        LemmaId::Interlacing,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub lemma: LemmaId,
    pub checks: usize,
    pub violations: usize,
    /// Smallest `bound - measured` seen; negative beyond the slack is a violation.
    pub worst_margin: f64,
}

impl LemmaCheck {
    fn new(lemma: LemmaId) -> Self {
        LemmaCheck { lemma, checks: 0, violations: 0, worst_margin: f64::INFINITY }
    }

    /// Records `measured <= bound` with absolute slack `slack * max(1, |bound|)`.
    fn le(&mut self, measured: f64, bound: f64, slack: f64) {
        let margin = bound - measured;
        self.checks += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if margin < -slack * bound.abs().max(1.0) {
            self.violations += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub deltas: DeltaTable,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn get(&self, lemma: LemmaId) -> &LemmaCheck {
        self.checks.iter().find(|c| c.lemma == lemma).expect("every lemma is reported")
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSuiteOptions {
    /// Largest order for which exact constants are computed.
    pub max_order: usize,
    /// Random (subset, probe) draws per lemma.
    pub samples: usize,
    pub seed: u64,
    pub slack: f64,
    pub cap: u64,
}

impl Default for LemmaSuiteOptions {
    fn default() -> Self {
        LemmaSuiteOptions { max_order: 3, samples: 10_000, seed: 0, slack: 1e-8, cap: super::DEFAULT_SUBSET_CAP }
    }
}

fn random_subsets(rng: &mut SeededRng, n: usize, sizes: &[usize]) -> Vec<IndexSet> {
    let total: usize = sizes.iter().sum();
    let picked: Vec<usize> = sample(rng, n, total).into_iter().map(|i| i + 1).collect();
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        out.push(IndexSet::new(picked[start..start + s].to_vec()).expect("distinct indices"));
        start += s;
    }
    out
}

fn columns(phi: &Matrix, s: &IndexSet) -> DMatrix<f64> {
    let a = phi.as_nalgebra();
    DMatrix::from_fn(a.nrows(), s.len(), |r, c| a[(r, s.as_slice()[c] - 1)])
}

fn probe(rng: &mut SeededRng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| synth::standard_normal(rng))
}

/// Random split of `total` into `parts` positive sizes.
fn split(rng: &mut SeededRng, total: usize, parts: usize) -> Vec<usize> {
    let mut sizes = vec![1; parts];
    for _ in parts..total {
        sizes[rng.random_range(0..parts)] += 1;
    }
    sizes
}

/// Checks every lemma on `phi` using exact constants of orders
/// `1..=max_order` and `samples` random draws per lemma.
pub fn check_lemmas(phi: &Matrix, opts: &LemmaSuiteOptions) -> Result<LemmaReport> {
    let n = phi.cols();
    let max_order = opts.max_order.min(n);
    if max_order == 0 {
        return Err(Error::input("max_order must be positive"));
    }
    let orders: Vec<usize> = (1..=max_order).collect();
    let deltas = exact_delta_table(phi, &orders, opts.cap)?;
    let delta = |k: usize| deltas.get(k).expect("order computed");
    let slack = opts.slack;
    let mut rng = synth::seeded_rng(opts.seed);

    let mut mono = LemmaCheck::new(LemmaId::Monotonicity);
    for k in 1..max_order {
        mono.le(delta(k), delta(k + 1), slack);
    }

    let mut sandwich = LemmaCheck::new(LemmaId::GramSandwich);
    let mut adjoint = LemmaCheck::new(LemmaId::AdjointNorm);
    let mut cross = LemmaCheck::new(LemmaId::CrossCorrelation);
    let mut projected = LemmaCheck::new(LemmaId::ProjectedCrossCorrelation);
    let mut interlace = LemmaCheck::new(LemmaId::Interlacing);

    for _ in 0..opts.samples {
        // Gram sandwich and adjoint norm on a single subset
        let s = rng.random_range(1..=max_order);
        let d = delta(s);
        if d < 1.0 {
            let set = &random_subsets(&mut rng, n, &[s])[0];
            let a = columns(phi, set);
            let g = a.transpose() * &a;
            let u = probe(&mut rng, s);
            let un = u.norm();
            let gu = (&g * &u).norm();
            sandwich.le(gu, (1.0 + d) * un, slack);
            sandwich.le((1.0 - d) * un, gu, slack);
            let inv = g.clone().cholesky().map(|c| c.solve(&u).norm());
            if let Some(giu) = inv {
                sandwich.le(giu, un / (1.0 - d), slack);
                sandwich.le(un / (1.0 + d), giu, slack);
            }
            let w = probe(&mut rng, phi.rows());
            adjoint.le((a.transpose() * &w).norm(), (1.0 + d).sqrt() * w.norm(), slack);
        }

        // cross-correlation, plain form
        if max_order >= 2 {
            let total = rng.random_range(2..=max_order);
            let sizes = split(&mut rng, total, 2);
            let d = delta(total);
            if d < 1.0 {
                let sets = random_subsets(&mut rng, n, &sizes);
                let v = probe(&mut rng, sizes[1]);
                let lhs = (columns(phi, &sets[0]).transpose() * (columns(phi, &sets[1]) * &v)).norm();
                cross.le(lhs, d * v.norm(), slack);
            }
        }

        // cross-correlation, projected form
        if max_order >= 3 {
            let total = rng.random_range(3..=max_order);
            let sizes = split(&mut rng, total, 3);
            let d = delta(total);
            if d < 1.0 {
                let sets = random_subsets(&mut rng, n, &sizes);
                let v = probe(&mut rng, sizes[1]);
                let w = columns(phi, &sets[1]) * &v;
                let pw = SupportFactor::new(phi, &sets[2])?.project_out(w.as_slice())?;
                let lhs = (columns(phi, &sets[0]).transpose() * DVector::from_vec(pw)).norm();
                projected.le(lhs, d * v.norm(), slack);
            }
        }

        // interlacing: needs no constant, only disjoint sets
        if max_order >= 2 {
            let total = rng.random_range(2..=max_order);
            let sizes = split(&mut rng, total, 2);
            let sets = random_subsets(&mut rng, n, &sizes);
            let union = sets[0].union(&sets[1]);
            let b = columns(phi, &union);
            let (b_lo, b_hi) = eigen_extremes_unchecked(b.transpose() * &b);
            if b_lo > 0.0 {
                let f = SupportFactor::new(phi, &sets[1])?;
                let a1 = columns(phi, &sets[0]);
                let mut pa = a1.clone();
                for c in 0..a1.ncols() {
                    let col: Vec<f64> = a1.column(c).iter().copied().collect();
                    pa.set_column(c, &DVector::from_vec(f.project_out(&col)?));
                }
                let (a_lo, a_hi) = eigen_extremes_unchecked(a1.transpose() * pa);
                interlace.le(b_lo, a_lo, slack);
                interlace.le(a_hi, b_hi, slack);
            }
        }
    }

    Ok(LemmaReport { deltas, checks: vec![mono, sandwich, cross, projected, adjoint, interlace] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_matrix_passes_tightly() {
        let phi = Matrix::identity(8).unwrap();
        let report = check_lemmas(&phi, &LemmaSuiteOptions { samples: 300, ..Default::default() }).unwrap();
        assert_eq!(report.violations(), 0);
        // sandwiches are equalities when delta = 0
        assert!(report.get(LemmaId::GramSandwich).worst_margin.abs() < 1e-12);
        assert!(report.get(LemmaId::CrossCorrelation).checks > 0);
    }

    #[test]
    fn correlated_pair_is_extremal_for_cross_bound() {
        let phi = Matrix::from_columns(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let d2 = super::super::exact_rip_constant(&phi, 2, 10).unwrap().delta;
        let c = -2.5;
        let lhs = (crate::linalg::dot(phi.column(1), phi.column(2)) * c).abs();
        assert!((lhs - d2 * c.abs()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_matrix_has_no_violations() {
        let phi = synth::gaussian_matrix(8, 12, 3).unwrap();
        let report = check_lemmas(&phi, &LemmaSuiteOptions { samples: 500, seed: 9, ..Default::default() }).unwrap();
        assert_eq!(report.violations(), 0, "{report:?}");
        assert_eq!(report.get(LemmaId::Monotonicity).checks, 2);
    }
}
