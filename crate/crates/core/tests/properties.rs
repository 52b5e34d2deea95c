use proptest::prelude::*;

use omp_core::conditions::{
    necessary_snr_threshold, sufficient_delta_limit, sufficient_snr_threshold, necessary_delta_limit,
    theorem3_error_rate_bound,
};
use omp_core::linalg::{self, IndexSet, Matrix, SupportFactor};
use omp_core::metrics::{
    compute_kappa, compute_mar, compute_snr, exact_delta_table, exact_rip_constant, support_error_rate,
    DEFAULT_SUBSET_CAP,
};
use omp_core::omp::{run_omp, verify_iteration_inequalities, StoppingRule};
use omp_core::synth::{self, NoiseMode, SignalProfile};
use omp_core::SparseSignal;

fn support_strategy(n: usize, max: usize) -> impl Strategy<Value = IndexSet> {
    proptest::sample::subsequence((1..=n).collect::<Vec<_>>(), 1..=max).prop_map(|v| IndexSet::new(v).unwrap())
}

fn signal_strategy(n: usize, max_k: usize) -> impl Strategy<Value = SparseSignal> {
    support_strategy(n, max_k).prop_flat_map(move |s| {
        let k = s.len();
        (Just(s), proptest::collection::vec((0.01f64..10.0, any::<bool>()), k)).prop_map(move |(s, vals)| {
            let values = vals.into_iter().map(|(v, neg)| if neg { -v } else { v }).collect();
            SparseSignal::new(n, s.as_slice().to_vec(), values).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn least_squares_residual_is_orthogonal(seed in any::<u64>(), s in support_strategy(20, 6)) {
        let phi = synth::gaussian_matrix(12, 20, seed).unwrap();
        let y = synth::gaussian_vector(12, seed ^ 1);
        let f = SupportFactor::new(&phi, &s).unwrap();
        let c = f.solve(&y).unwrap();
        let mut est = vec![0.0; 20];
        for (i, v) in s.iter().zip(&c) {
            est[i - 1] = *v;
        }
        let r = linalg::sub(&y, &phi.mul_vec(&est).unwrap());
        let lhs = s.iter().map(|i| linalg::dot(phi.column(i), &r).abs()).fold(0.0, f64::max);
        let rhs = s.iter().map(|i| linalg::dot(phi.column(i), &y).abs()).fold(0.0, f64::max);
        prop_assert!(lhs <= 1e-9 * rhs + 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn projection_is_idempotent_and_symmetric(seed in any::<u64>(), s in support_strategy(16, 8)) {
        let phi = synth::gaussian_matrix(10, 16, seed).unwrap();
        let a = synth::gaussian_vector(10, seed ^ 2);
        let b = synth::gaussian_vector(10, seed ^ 3);
        let f = SupportFactor::new(&phi, &s).unwrap();
        let pa = f.project_out(&a).unwrap();
        let ppa = f.project_out(&pa).unwrap();
        prop_assert!(linalg::norm(&linalg::sub(&ppa, &pa)) <= 1e-9 * linalg::norm(&a));
        let pb = f.project_out(&b).unwrap();
        let (l, r) = (linalg::dot(&pa, &b), linalg::dot(&a, &pb));
        prop_assert!((l - r).abs() <= 1e-9 * linalg::norm(&a) * linalg::norm(&b));
    }

    #[test]
    fn eigen_extremes_bracket_rayleigh_quotients(seed in any::<u64>(), k in 1usize..7) {
        let phi = synth::gaussian_matrix(9, k, seed).unwrap();
        let g = Matrix::from_row_major(k, k, phi.gram().transpose().as_slice()).unwrap();
        let (lo, hi) = linalg::symmetric_eigen_extremes(&g).unwrap();
        for p in 0..50 {
            let u = synth::gaussian_vector(k, seed.wrapping_add(p));
            let q = linalg::norm_sq(&phi.mul_vec(&u).unwrap()) / linalg::norm_sq(&u);
            prop_assert!(q >= lo - 1e-8 && q <= hi + 1e-8);
        }
    }

    #[test]
    fn omp_trace_invariants(seed in any::<u64>(), k in 1usize..6, snr in prop_oneof![Just(f64::INFINITY), 0.5f64..1e4]) {
        let phi = synth::gaussian_matrix(16, 32, seed).unwrap();
        let x = synth::sparse_signal(32, k, &SignalProfile::uniform(0.2, 2.0), seed ^ 5).unwrap();
        let noise = if snr.is_finite() {
            synth::noise_at_snr(&phi, &x, snr, NoiseMode::Isotropic, seed ^ 6).unwrap()
        } else {
            vec![0.0; 16]
        };
        let y = linalg::add(&phi.mul_vec(&x.to_dense()).unwrap(), &noise);
        let trace = run_omp(&phi, &y, StoppingRule::FixedIterations(k)).unwrap();
        prop_assert_eq!(trace.len(), k);
        let mut prev = IndexSet::empty();
        let mut prev_norm = linalg::norm(&y);
        for it in &trace.iterations {
            prop_assert_eq!(it.support_after.len(), it.k);
            prop_assert!(prev.is_subset(&it.support_after));
            prop_assert!(it.residual_norm() <= prev_norm + 1e-12);
            for i in it.support_after.iter() {
                prop_assert!(linalg::dot(phi.column(i), &it.residual).abs() <= 1e-9 * linalg::norm(&y) * 2.0);
            }
            prev = it.support_after.clone();
            prev_norm = it.residual_norm();
        }
        let again = run_omp(&phi, &y, StoppingRule::FixedIterations(k)).unwrap();
        prop_assert_eq!(&again, &trace);

        let deltas = exact_delta_table(&phi, &[1], DEFAULT_SUBSET_CAP).unwrap();
        let report = verify_iteration_inequalities(&phi, &x, &noise, &trace, &deltas).unwrap();
        prop_assert!(report.is_clean(), "{:?}", report);
    }

    #[test]
    fn mar_and_kappa_invariants(x in signal_strategy(30, 8)) {
        let mar = compute_mar(&x).unwrap();
        let kappa = compute_kappa(&x).unwrap();
        prop_assert!(mar > 0.0 && mar <= 1.0);
        prop_assert!(kappa >= 1.0);
        let mags: Vec<f64> = x.values().iter().map(|v| v.abs()).collect();
        let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mags.iter().cloned().fold(0.0, f64::max);
        prop_assert!((kappa * lo - hi).abs() <= 1e-12 * hi);
        let all_equal = hi - lo <= 1e-12;
        prop_assert_eq!(1.0 - mar <= 1e-12, all_equal);
    }

    #[test]
    fn error_rate_in_unit_interval(t in support_strategy(20, 6), seed in any::<u64>()) {
        let k = t.len();
        let e = synth::sparse_signal(20, k, &SignalProfile::equal(1.0), seed).unwrap();
        let r = support_error_rate(&t, e.support()).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.error_rate));
        prop_assert_eq!(r.error_rate == 0.0, &t == e.support());
        prop_assert_eq!(r.missed.len(), r.false_alarms.len());
    }

    #[test]
    fn delta_is_monotone_in_order(seed in any::<u64>()) {
        let phi = synth::gaussian_matrix(6, 9, seed).unwrap();
        let t = exact_delta_table(&phi, &[1, 2, 3, 4], DEFAULT_SUBSET_CAP).unwrap();
        for k in 1..4 {
            prop_assert!(t.get(k).unwrap() <= t.get(k + 1).unwrap());
        }
    }

    #[test]
    fn thresholds_monotone_in_delta_and_mar(k in 1usize..20, a in 0.0f64..0.99, b in 0.0f64..0.99, mar in 0.05f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let ls = sufficient_delta_limit(k);
        let s1 = sufficient_snr_threshold(k, lo * ls, mar).unwrap();
        let s2 = sufficient_snr_threshold(k, hi * ls, mar).unwrap();
        prop_assert!(s2.snr > s1.snr);
        let ln = necessary_delta_limit(k);
        let n1 = necessary_snr_threshold(k, lo * ln, mar).unwrap();
        let n2 = necessary_snr_threshold(k, hi * ln, mar).unwrap();
        prop_assert!(n2.snr > n1.snr);
        let smaller_mar = mar * 0.9;
        prop_assert!(sufficient_snr_threshold(k, lo * ls, smaller_mar).unwrap().snr > s1.snr);
        prop_assert!(necessary_snr_threshold(k, lo * ln, smaller_mar).unwrap().snr > n1.snr);
    }

    #[test]
    fn sufficient_at_least_necessary(k in 1usize..40, frac in 0.0f64..0.999, mar in 0.01f64..1.0) {
        let d = frac * sufficient_delta_limit(k);
        let s = sufficient_snr_threshold(k, d, mar).unwrap();
        let n = necessary_snr_threshold(k, d, mar).unwrap();
        prop_assert!(s.sqrt_snr >= n.sqrt_snr);
        // the ratio is exactly 2 at delta = 0 and grows with delta
        prop_assert!(s.sqrt_snr / n.sqrt_snr >= 2.0 * (1.0 - 1e-12));
    }

    #[test]
    fn error_bound_monotone(kappa in 1.0f64..5.0, d in 0.0f64..0.9, c in 0.01f64..3.0, step in 0.001f64..0.09) {
        let base = theorem3_error_rate_bound(kappa, d, c).unwrap();
        prop_assert!(theorem3_error_rate_bound(kappa + step, d, c).unwrap() >= base);
        prop_assert!(theorem3_error_rate_bound(kappa, d + step, c).unwrap() >= base);
        prop_assert!(theorem3_error_rate_bound(kappa, d, c + step).unwrap() >= base);
        prop_assert!(base <= 1.0);
    }

    #[test]
    fn generators_are_pure(seed in any::<u64>(), m in 1usize..10, n in 1usize..10) {
        prop_assert_eq!(
            synth::gaussian_matrix(m, n, seed).unwrap().to_row_major(),
            synth::gaussian_matrix(m, n, seed).unwrap().to_row_major()
        );
        let p = SignalProfile { magnitude: synth::Magnitude::Gaussian { sigma: 2.0 }, signs: synth::SignMode::RandomSigns };
        prop_assert_eq!(synth::sparse_signal(n, 1, &p, seed).unwrap(), synth::sparse_signal(n, 1, &p, seed).unwrap());
    }

    #[test]
    fn noise_round_trip_all_modes(seed in any::<u64>(), snr in 1e-3f64..1e8, mode_ix in 0usize..3, k in 1usize..5) {
        let phi = synth::gaussian_matrix(10, 16, seed).unwrap();
        let x = synth::sparse_signal(16, k, &SignalProfile::uniform(0.5, 3.0), seed ^ 9).unwrap();
        let mode = [NoiseMode::Isotropic, NoiseMode::FixedBasisVector(1 + (seed % 10) as usize), NoiseMode::AdversarialOffSupport][mode_ix];
        let v = synth::noise_at_snr(&phi, &x, snr, mode, seed ^ 10).unwrap();
        let got = compute_snr(&phi, &x, &v).unwrap();
        prop_assert!(((got - snr) / snr).abs() <= 1e-12, "{got} vs {snr}");
    }

    #[test]
    fn counterexample_never_beats_k(k in 1usize..8, extra in 1usize..5, eps in 0.0f64..2.0) {
        let inst = synth::appendix_a_instance(k, k + extra, eps).unwrap();
        let snr = compute_snr(&inst.phi, &inst.x, &inst.noise).unwrap();
        prop_assert!(snr <= k as f64);
        let t = necessary_snr_threshold(k, 0.0, compute_mar(&inst.x).unwrap()).unwrap();
        prop_assert!(snr - t.snr <= 1e-12);
    }
}

#[test]
fn rip_witness_attains_extreme() {
    let phi = synth::normalized_gaussian_matrix(6, 10, 77).unwrap();
    for order in 1..=4 {
        let est = exact_rip_constant(&phi, order, DEFAULT_SUBSET_CAP).unwrap();
        let sub = linalg::submatrix(&phi, &est.witness).unwrap();
        let g = Matrix::from_row_major(order, order, sub.gram().transpose().as_slice()).unwrap();
        let (lo, hi) = linalg::symmetric_eigen_extremes(&g).unwrap();
        assert!(((1.0 - lo).max(hi - 1.0) - est.delta).abs() < 1e-8);
    }
}
