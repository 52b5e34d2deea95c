//! Seeded instance generators.
//!
//! Every generator is a pure function of its arguments. Randomness comes
//! from ChaCha8 streams; normal variates use the inverse normal CDF applied
//! to a 53-bit uniform in the open unit interval, so output does not depend
//! on the platform or on which rand distribution code is linked.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, IndexSet, Matrix, SupportFactor};
use crate::metrics::SparseSignal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of cell `cell`: SplitMix64 applied to
/// `base`, then chained with `cell` and `trial`.
pub fn derive_seed(base: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ cell) ^ trial)
}

/// Uniform in (0, 1), never 0 or 1.
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    thread_local! {
        static UNIT: Normal = Normal::new(0.0, 1.0).expect("valid parameters");
    }
    let u = open_unit(rng);
    UNIT.with(|n| n.inverse_cdf(u))
}

pub fn gaussian_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..len).map(|_| standard_normal(&mut rng)).collect()
}

/// I.i.d. `N(0, 1/m)` entries, drawn in row-major order.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::input("matrix dimensions must be positive"));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let data: Vec<f64> = gaussian_vector(m * n, seed).into_iter().map(|g| g * scale).collect();
    Matrix::from_row_major(m, n, &data)
}

/// Gaussian matrix with every column rescaled to unit norm.
pub fn normalized_gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    let phi = gaussian_matrix(m, n, seed)?;
    let cols: Vec<Vec<f64>> = (1..=n)
        .map(|j| {
            let c = phi.column(j);
            let s = linalg::norm(c);
            c.iter().map(|v| v / s).collect()
        })
        .collect();
    Matrix::from_columns(&cols)
}

/// Haar-distributed orthogonal `m x m` matrix (QR of a Gaussian matrix with
/// the sign of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(m: usize, seed: u64) -> Result<Matrix> {
    let g = gaussian_matrix(m, m, seed)?;
    let qr = g.as_nalgebra().clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(Matrix::from_nalgebra(q))
}

/// Hadamard matrix of order `m` with `+-1` entries, when one is
/// constructible here: Sylvester for powers of two, Paley for `m - 1` a
/// prime congruent to 3 mod 4.
pub fn hadamard(m: usize) -> Option<DMatrix<f64>> {
    if m == 1 {
        return Some(DMatrix::from_element(1, 1, 1.0));
    }
    if m.is_power_of_two() {
        let h = hadamard(m / 2)?;
        let half = m / 2;
        return Some(DMatrix::from_fn(m, m, |r, c| {
            let v = h[(r % half, c % half)];
            if r >= half && c >= half {
                -v
            } else {
                v
            }
        }));
    }
    let q = m - 1;
    if q < 3 || q % 4 != 3 || !(2..q).take_while(|d| d * d <= q).all(|d| !q.is_multiple_of(d)) {
        return None;
    }
    let residue: Vec<bool> = {
        let mut r = vec![false; q];
        for x in 1..q {
            r[x * x % q] = true;
        }
        r
    };
    let chi = |a: usize| -> f64 {
        if a == 0 {
            0.0
        } else if residue[a] {
            1.0
        } else {
            -1.0
        }
    };
    // Paley I: H = I + S with S = [[0, 1'], [-1, Q]], Q_ij = chi(j - i)
    Some(DMatrix::from_fn(m, m, |r, c| {
        let s = match (r, c) {
            (0, 0) => 0.0,
            (0, _) => 1.0,
            (_, 0) => -1.0,
            _ => chi((c + q - r) % q),
        };
        s + if r == c { 1.0 } else { 0.0 }
    }))
}

/// `[I_m | H_B / sqrt(m)]` for the first `n - m` columns of a Hadamard
/// matrix, rotated by a random orthogonal matrix, with columns permuted and
/// sign-flipped at random. Rotation, permutation and signs leave every
/// isometry constant unchanged.
///
/// Returns an input error when no Hadamard matrix of order `m` is available
/// or `n` is outside `[m, 2m]`.
pub fn identity_hadamard_frame(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if n < m || n > 2 * m {
        return Err(Error::input(format!("frame needs m <= n <= 2m, got {m}x{n}")));
    }
    let h = hadamard(m).ok_or_else(|| Error::input(format!("no Hadamard matrix of order {m}")))?;
    let scale = 1.0 / (m as f64).sqrt();
    let base = DMatrix::from_fn(m, n, |r, c| {
        if c < m {
            if r == c {
                1.0
            } else {
                0.0
            }
        } else {
            h[(r, c - m)] * scale
        }
    });
    let mut rng = seeded_rng(derive_seed(seed, 1, 0));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let signs: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let q = random_orthogonal(m, derive_seed(seed, 2, 0))?;
    let rotated = q.as_nalgebra() * base;
    let out = DMatrix::from_fn(m, n, |r, c| rotated[(r, order[c])] * signs[c]);
    Ok(Matrix::from_nalgebra(out))
}

/// Gaussian matrix mapped to the nearest unit-norm-ish tight frame: the
/// singular values are set to `sqrt(n/m)`, then columns are normalized.
pub fn tight_frame(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if n < m {
        return Err(Error::input("tight frame needs n >= m"));
    }
    let g = gaussian_matrix(m, n, seed)?;
    let svd = g.as_nalgebra().clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let f = u * vt;
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let c: Vec<f64> = f.column(j).iter().copied().collect();
            let s = linalg::norm(&c);
            c.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Matrix::from_columns(&cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Magnitude {
    Equal { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    AllPositive,
    RandomSigns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalProfile {
    pub magnitude: Magnitude,
    pub signs: SignMode,
}

impl SignalProfile {
    pub fn equal(value: f64) -> Self {
        SignalProfile { magnitude: Magnitude::Equal { value }, signs: SignMode::AllPositive }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        SignalProfile { magnitude: Magnitude::Uniform { lo, hi }, signs: SignMode::RandomSigns }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.magnitude {
            Magnitude::Equal { value } => value.is_finite() && value > 0.0,
            Magnitude::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi,
            Magnitude::Gaussian { sigma } => sigma.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid signal profile {self:?}")))
        }
    }

    /// Compact name used in config files and CSV output.
    pub fn label(&self) -> String {
        let sign = match self.signs {
            SignMode::AllPositive => "",
            SignMode::RandomSigns => ":signed",
        };
        match self.magnitude {
            Magnitude::Equal { value } => format!("equal({value}){sign}"),
            Magnitude::Uniform { lo, hi } => format!("uniform({lo};{hi}){sign}"),
            Magnitude::Gaussian { sigma } => format!("gaussian({sigma}){sign}"),
        }
    }

    /// Inverse of [`SignalProfile::label`].
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad signal profile '{text}'"));
        let (body, signs) = match text.strip_suffix(":signed") {
            Some(b) => (b, SignMode::RandomSigns),
            None => (text, SignMode::AllPositive),
        };
        let open = body.find('(').ok_or_else(bad)?;
        let name = &body[..open];
        let args: Vec<f64> = body[open + 1..]
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(';')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let magnitude = match (name, args.as_slice()) {
            ("equal", [v]) => Magnitude::Equal { value: *v },
            ("uniform", [lo, hi]) => Magnitude::Uniform { lo: *lo, hi: *hi },
            ("gaussian", [s]) => Magnitude::Gaussian { sigma: *s },
            _ => return Err(bad()),
        };
        let p = SignalProfile { magnitude, signs };
        p.validate()?;
        Ok(p)
    }
}

/// K-sparse signal with a uniformly random support and values per `profile`.
pub fn sparse_signal(n: usize, k: usize, profile: &SignalProfile, seed: u64) -> Result<SparseSignal> {
    if k == 0 || k > n {
        return Err(Error::input(format!("sparsity {k} outside [1, {n}]")));
    }
    profile.validate()?;
    let mut rng = seeded_rng(seed);
    let support: Vec<usize> = sample(&mut rng, n, k).into_iter().map(|i| i + 1).collect();
    let mut values = Vec::with_capacity(k);
    for _ in 0..k {
        let mag = match profile.magnitude {
            Magnitude::Equal { value } => value,
            Magnitude::Uniform { lo, hi } => lo + (hi - lo) * open_unit(&mut rng),
            Magnitude::Gaussian { sigma } => loop {
                let g = (sigma * standard_normal(&mut rng)).abs();
                if g > 0.0 {
                    break g;
                }
            },
        };
        let sign = match profile.signs {
            SignMode::AllPositive => 1.0,
            SignMode::RandomSigns => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        values.push(sign * mag);
    }
    SparseSignal::new(n, support, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "index", rename_all = "snake_case")]
pub enum NoiseMode {
    /// Uniformly random direction.
    Isotropic,
    /// `e_index`, 1-based.
    FixedBasisVector(usize),
    /// A random off-support column projected off `span(Phi_T)`.
    AdversarialOffSupport,
}

impl NoiseMode {
    pub fn label(&self) -> String {
        match self {
            NoiseMode::Isotropic => "isotropic".into(),
            NoiseMode::FixedBasisVector(i) => format!("basis({i})"),
            NoiseMode::AdversarialOffSupport => "adversarial".into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "isotropic" => Ok(NoiseMode::Isotropic),
            "adversarial" => Ok(NoiseMode::AdversarialOffSupport),
            _ => text
                .strip_prefix("basis(")
                .and_then(|t| t.strip_suffix(')'))
                .and_then(|t| t.parse().ok())
                .filter(|i| *i > 0)
                .map(NoiseMode::FixedBasisVector)
                .ok_or_else(|| Error::Parse(format!("bad noise mode '{text}'"))),
        }
    }
}

/// Noise `v` with `||Phi x||^2 / ||v||^2 = target_snr`, direction per `mode`.
pub fn noise_at_snr(
    phi: &Matrix,
    x: &SparseSignal,
    target_snr: f64,
    mode: NoiseMode,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(target_snr.is_finite() && target_snr > 0.0) {
        return Err(Error::input(format!("target SNR must be positive and finite, got {target_snr}")));
    }
    let signal_norm = linalg::norm(&phi.mul_vec(&x.to_dense())?);
    if signal_norm == 0.0 {
        return Err(Error::input("measurement vector Phi x is zero"));
    }
    let m = phi.rows();
    let direction = match mode {
        NoiseMode::Isotropic => {
            let mut rng = seeded_rng(seed);
            loop {
                let g: Vec<f64> = (0..m).map(|_| standard_normal(&mut rng)).collect();
                if linalg::norm(&g) > 0.0 {
                    break g;
                }
            }
        }
        NoiseMode::FixedBasisVector(i) => {
            if i == 0 || i > m {
                return Err(Error::input(format!("basis index {i} outside [1, {m}]")));
            }
            let mut e = vec![0.0; m];
            e[i - 1] = 1.0;
            e
        }
        NoiseMode::AdversarialOffSupport => adversarial_direction(phi, x.support(), seed)?,
    };
    let scale = signal_norm / target_snr.sqrt() / linalg::norm(&direction);
    Ok(direction.into_iter().map(|d| d * scale).collect())
}

fn adversarial_direction(phi: &Matrix, support: &IndexSet, seed: u64) -> Result<Vec<f64>> {
    let off: Vec<usize> = (1..=phi.cols()).filter(|i| !support.contains(*i)).collect();
    if off.is_empty() {
        return Err(Error::input("adversarial noise needs a column outside the support"));
    }
    let factor = SupportFactor::new(phi, support)?;
    let start = seeded_rng(seed).random_range(0..off.len());
    let scale = phi.column_norms_sq().into_iter().fold(0.0_f64, f64::max).sqrt();
    for j in off.iter().cycle().skip(start).take(off.len()) {
        let p = factor.project_out(phi.column(*j))?;
        if linalg::norm(&p) > 1e-10 * scale {
            return Ok(p);
        }
    }
    Err(Error::input("every off-support column lies in span(Phi_T)"))
}

/// The identity-matrix instance on which OMP can fail at `SNR = K`.
#[derive(Debug, Clone)]
pub struct AppendixAInstance {
    pub phi: Matrix,
    pub x: SparseSignal,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
}

/// `Phi = I_m`, `x` = ones on `{1..K}`, `v = (1 + eps) e_m`.
///
/// With `eps = 0` every correlation in the first iteration ties at 1; any
/// `eps > 0` makes index `m` win outright while `SNR = K / (1 + eps)^2`.
pub fn appendix_a_instance(k: usize, m: usize, eps: f64) -> Result<AppendixAInstance> {
    if k == 0 || m <= k {
        return Err(Error::input(format!("need 1 <= K < m, got K={k}, m={m}")));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::input("eps must be finite and nonnegative"));
    }
    let phi = Matrix::identity(m)?;
    let x = SparseSignal::new(m, (1..=k).collect(), vec![1.0; k])?;
    let mut noise = vec![0.0; m];
    noise[m - 1] = 1.0 + eps;
    let y = linalg::add(&x.to_dense(), &noise);
    Ok(AppendixAInstance { phi, x, noise, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{compute_kappa, compute_mar, compute_snr, exact_rip_constant};

    #[test]
    fn generators_are_deterministic() {
        let a = gaussian_matrix(5, 7, 11).unwrap();
        let b = gaussian_matrix(5, 7, 11).unwrap();
        assert_eq!(a.to_row_major(), b.to_row_major());
        assert_ne!(a.to_row_major(), gaussian_matrix(5, 7, 12).unwrap().to_row_major());
        let p = SignalProfile::uniform(1.0, 5.0);
        assert_eq!(sparse_signal(20, 4, &p, 3).unwrap(), sparse_signal(20, 4, &p, 3).unwrap());
    }

    #[test]
    fn derive_seed_separates_streams() {
        let s: std::collections::HashSet<u64> =
            (0..50).flat_map(|c| (0..50).map(move |t| derive_seed(7, c, t))).collect();
        assert_eq!(s.len(), 2500);
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    }

    #[test]
    fn column_energy_concentrates() {
        for seed in 0..100 {
            let phi = gaussian_matrix(64, 128, seed).unwrap();
            let mean = phi.column_norms_sq().iter().sum::<f64>() / 128.0;
            assert!((0.8..=1.2).contains(&mean), "seed {seed}: {mean}");
        }
    }

    #[test]
    fn normal_sampler_moments() {
        let g = gaussian_vector(200_000, 1);
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / g.len() as f64;
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.02, "{mean} {var}");
    }

    #[test]
    fn equal_profile_gives_unit_mar_and_kappa() {
        let x = sparse_signal(30, 5, &SignalProfile::equal(1.0), 2).unwrap();
        assert_eq!(compute_mar(&x).unwrap(), 1.0);
        assert_eq!(compute_kappa(&x).unwrap(), 1.0);
        assert!(sparse_signal(3, 4, &SignalProfile::equal(1.0), 2).is_err());
    }

    #[test]
    fn uniform_profile_kappa_bounded() {
        for seed in 0..200 {
            let x = sparse_signal(40, 6, &SignalProfile::uniform(1.0, 5.0), seed).unwrap();
            assert!(compute_kappa(&x).unwrap() <= 5.0);
        }
    }

    #[test]
    fn support_is_uniform_over_pairs() {
        let trials = 10_000;
        let mut counts = std::collections::HashMap::new();
        for seed in 0..trials {
            let x = sparse_signal(10, 2, &SignalProfile::equal(1.0), seed).unwrap();
            *counts.entry(x.support().as_slice().to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 45);
        let p = 1.0 / 45.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for (pair, c) in counts {
            assert!((c as f64 - mean).abs() <= 4.0 * sd, "{pair:?}: {c}");
        }
    }

    #[test]
    fn noise_round_trips_through_snr() {
        let phi = gaussian_matrix(10, 20, 5).unwrap();
        let x = sparse_signal(20, 3, &SignalProfile::uniform(0.5, 2.0), 6).unwrap();
        for mode in [NoiseMode::Isotropic, NoiseMode::FixedBasisVector(4), NoiseMode::AdversarialOffSupport] {
            for snr in [0.3, 1.0, 17.0, 1e6] {
                let v = noise_at_snr(&phi, &x, snr, mode, 8).unwrap();
                let got = compute_snr(&phi, &x, &v).unwrap();
                assert!(((got - snr) / snr).abs() < 1e-12, "{mode:?} {snr} {got}");
            }
        }
    }

    #[test]
    fn adversarial_noise_is_orthogonal_to_support() {
        let phi = gaussian_matrix(10, 20, 5).unwrap();
        let x = sparse_signal(20, 3, &SignalProfile::equal(1.0), 1).unwrap();
        let v = noise_at_snr(&phi, &x, 2.0, NoiseMode::AdversarialOffSupport, 3).unwrap();
        for i in x.support().iter() {
            assert!(linalg::dot(phi.column(i), &v).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_noise_reproduces_counterexample_vector() {
        let inst = appendix_a_instance(3, 8, 0.0).unwrap();
        let v = noise_at_snr(&inst.phi, &inst.x, 3.0, NoiseMode::FixedBasisVector(8), 0).unwrap();
        assert_eq!(v, inst.noise);
        assert!(noise_at_snr(&inst.phi, &inst.x, 3.0, NoiseMode::FixedBasisVector(9), 0).is_err());
    }

    #[test]
    fn counterexample_values() {
        let inst = appendix_a_instance(3, 8, 0.0).unwrap();
        assert_eq!(compute_snr(&inst.phi, &inst.x, &inst.noise).unwrap(), 3.0);
        assert_eq!(compute_mar(&inst.x).unwrap(), 1.0);
        assert_eq!(exact_rip_constant(&inst.phi, 4, 1000).unwrap().delta, 0.0);
        assert_eq!(inst.y, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let eps = appendix_a_instance(3, 8, 0.1).unwrap();
        let snr = compute_snr(&eps.phi, &eps.x, &eps.noise).unwrap();
        assert!((snr - 3.0 / 1.21).abs() < 1e-12);
        assert!(appendix_a_instance(3, 3, 0.0).is_err());
    }

    #[test]
    fn hadamard_orders() {
        for m in [1, 2, 4, 8, 12, 20] {
            let h = hadamard(m).unwrap();
            let p = h.transpose() * &h;
            assert!((p - DMatrix::identity(m, m) * m as f64).abs().max() < 1e-12, "order {m}");
        }
        assert!(hadamard(6).is_none());
    }

    #[test]
    fn hadamard_frame_constants() {
        let phi = identity_hadamard_frame(12, 16, 4).unwrap();
        let d2 = exact_rip_constant(&phi, 2, 1000).unwrap().delta;
        let d3 = exact_rip_constant(&phi, 3, 1000).unwrap().delta;
        assert!((d2 - 12f64.sqrt().recip()).abs() < 1e-12, "{d2}");
        assert!((d3 - (2.0f64 / 12.0).sqrt()).abs() < 1e-12, "{d3}");
        assert!(d3 < 1.0 / (2f64.sqrt() + 1.0));
    }

    #[test]
    fn profile_and_noise_labels_round_trip() {
        for p in [SignalProfile::equal(1.0), SignalProfile::uniform(0.5, 1.0)] {
            assert_eq!(SignalProfile::parse(&p.label()).unwrap(), p);
        }
        for m in [NoiseMode::Isotropic, NoiseMode::FixedBasisVector(3), NoiseMode::AdversarialOffSupport] {
            assert_eq!(NoiseMode::parse(&m.label()).unwrap(), m);
        }
        assert!(SignalProfile::parse("uniform(0;1)").is_err());
    }
}
