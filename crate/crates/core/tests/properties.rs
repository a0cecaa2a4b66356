//! Randomised invariants across modules.

use num_complex::Complex64;
use polygaf::geometry::{pseudo_distance, IntensityVector, MoebiusAutomorphism, PolydiskPoint};
use polygaf::hole::{wilson_interval, WILSON_Z};
use polygaf::kernel::{dilog, normalized_kernel, normalized_kernel_sq_product};
use polygaf::sampler::GafSampler;
use proptest::prelude::*;

fn disk_point() -> impl Strategy<Value = Complex64> {
    (0.0f64..0.95, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

fn point(n: usize) -> impl Strategy<Value = PolydiskPoint> {
    prop::collection::vec(disk_point(), n).prop_map(|c| PolydiskPoint::new(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn automorphisms_preserve_pseudo_distance(a in disk_point(), z in disk_point(), w in disk_point(), phase in 0.0f64..std::f64::consts::TAU) {
        let map = MoebiusAutomorphism::new(PolydiskPoint::new(vec![a]).unwrap(), vec![phase]).unwrap();
        let pz = map.apply(&PolydiskPoint::new(vec![z]).unwrap()).unwrap();
        let pw = map.apply(&PolydiskPoint::new(vec![w]).unwrap()).unwrap();
        let before = pseudo_distance(z, w).unwrap();
        let after = pseudo_distance(pz.coord(0), pw.coord(0)).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
        prop_assert!((0.0..1.0).contains(&before));
        let back = map.apply_inverse(&pz).unwrap();
        prop_assert!((back.coord(0) - z).norm() < 1e-9);
    }

    #[test]
    fn normalized_kernel_is_a_contraction(z in point(2), w in point(2), l0 in 0.5f64..20.0, l1 in 0.5f64..20.0) {
        let l = IntensityVector::new(vec![l0, l1]).unwrap();
        let theta = normalized_kernel(&z, &w, &l).unwrap();
        prop_assert!(theta.norm() <= 1.0 + 1e-12);
        let sq = normalized_kernel_sq_product(&z, &w, &l).unwrap();
        prop_assert!((sq - theta.norm_sqr()).abs() <= 1e-10 * (1.0 + sq));
        let diag = normalized_kernel(&z, &z, &l).unwrap();
        prop_assert!((diag.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dilog_is_monotone_and_bracketed(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        prop_assert!(dilog(lo).unwrap() <= dilog(hi).unwrap());
        let v = dilog(x).unwrap();
        prop_assert!(x <= v && v <= 2.0 * x);
    }

    #[test]
    fn wilson_interval_brackets_the_proportion(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as u64;
        let (lo, hi) = wilson_interval(k, n, WILSON_Z);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-15 && p <= hi + 1e-15 && hi <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn draws_depend_only_on_seed_and_trial(seed in any::<u64>(), trial in 0u64..1_000_000) {
        let l = IntensityVector::new(vec![2.0, 3.0]).unwrap();
        let small = GafSampler::with_degrees(&l, &[4, 5], &[0.5, 0.5]).unwrap();
        let large = GafSampler::with_degrees(&l, &[9, 7], &[0.5, 0.5]).unwrap();
        let a = small.draw(seed, trial);
        prop_assert_eq!(&a, &small.draw(seed, trial));
        let next = small.draw(seed, trial + 1);
        prop_assert_ne!(a.coefficients(), next.coefficients());
        // Each coefficient is keyed by its multi-index, so enlarging the
        // box keeps the shared coefficients.
        let b = large.draw(seed, trial);
        let idx = |d: &[usize], i: usize, j: usize| i * (d[1] + 1) + j;
        for i in 0..=4 {
            for j in 0..=5 {
                prop_assert_eq!(a.coefficients()[idx(&[4, 5], i, j)], b.coefficients()[idx(&[9, 7], i, j)]);
            }
        }
    }
}
