//! Closed-form covariance machinery for the hyperbolic GAF.
//!
//! Everything here is deterministic: the covariance kernel `K_L`, its power
//! series, the normalised kernel `θ_L`, the dilogarithm and the
//! log-covariance `ρ_L = Li₂(|θ_L|²)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, IntensityVector, PolydiskPoint};

/// `π²/6 = Li₂(1) = ζ(2)`.
pub const PI_SQ_OVER_6: f64 = PI * PI / 6.0;

fn check3(z: &PolydiskPoint, w: &PolydiskPoint, l: &IntensityVector) -> Result<()> {
    check_dims(z.dim(), w.dim())?;
    check_dims(z.dim(), l.dim())
}

/// `K_L(z, w) = ∏ (1 - z_j w̄_j)^{-L_j}` on the principal branch, accumulated
/// in log space.
pub fn covariance(z: &PolydiskPoint, w: &PolydiskPoint, l: &IntensityVector) -> Result<Complex64> {
    check3(z, w, l)?;
    let one = Complex64::new(1.0, 0.0);
    let log_k: Complex64 = z
        .coords()
        .iter()
        .zip(w.coords())
        .zip(l.values())
        .map(|((zj, wj), lj)| -(*lj) * (one - zj * wj.conj()).ln())
        .sum();
    Ok(log_k.exp())
}

/// Partial sum of `Σ_α ∏_j Γ(L_j+α_j)/(α_j! Γ(L_j)) (z_j w̄_j)^{α_j}` over the
/// box `α ≤ max_degree`.
pub fn covariance_series(
    z: &PolydiskPoint,
    w: &PolydiskPoint,
    l: &IntensityVector,
    max_degree: &[usize],
) -> Result<Complex64> {
    check3(z, w, l)?;
    check_dims(z.dim(), max_degree.len())?;
    // The series factors over coordinates.
    let mut total = Complex64::new(1.0, 0.0);
    for j in 0..z.dim() {
        let x = z.coord(j) * w.coord(j).conj();
        let lj = l.get(j);
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 0..max_degree[j] {
            let kf = k as f64;
            term *= x * ((lj + kf) / (kf + 1.0));
            sum += term;
        }
        total *= sum;
    }
    Ok(total)
}

/// `θ_L(z, w) = [1-|z|²]^{L/2} [1-|w|²]^{L/2} / [1 - z̄ w]^L`.
pub fn normalized_kernel(
    z: &PolydiskPoint,
    w: &PolydiskPoint,
    l: &IntensityVector,
) -> Result<Complex64> {
    check3(z, w, l)?;
    let one = Complex64::new(1.0, 0.0);
    let log_theta: Complex64 = z
        .coords()
        .iter()
        .zip(w.coords())
        .zip(l.values())
        .map(|((zj, wj), lj)| {
            let half = 0.5 * ((1.0 - zj.norm_sqr()).ln() + (1.0 - wj.norm_sqr()).ln());
            lj * (Complex64::new(half, 0.0) - (one - zj.conj() * wj).ln())
        })
        .sum();
    Ok(log_theta.exp())
}

/// `|θ_L(z,w)|²` through the pseudo-hyperbolic product formula
/// `∏ (1 - ρ²(z_j, w_j))^{L_j}`.
pub fn normalized_kernel_sq_product(
    z: &PolydiskPoint,
    w: &PolydiskPoint,
    l: &IntensityVector,
) -> Result<f64> {
    check3(z, w, l)?;
    let log: f64 = (0..z.dim())
        .map(|j| l.get(j) * crate::geometry::one_minus_rho_sq(z.coord(j), w.coord(j)).ln())
        .sum();
    Ok(log.exp())
}

/// The dilogarithm `Li₂(x) = Σ_{m≥1} x^m / m²` on `[0, 1]`.
///
/// Direct series up to `x = 1/2`, reflection
/// `Li₂(x) + Li₂(1-x) = π²/6 - log(x) log(1-x)` above.
pub fn dilog(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            value: x,
            domain: "[0, 1]",
        });
    }
    Ok(dilog_unchecked(x))
}

#[inline]
pub(crate) fn dilog_unchecked(x: f64) -> f64 {
    if x <= 0.5 {
        dilog_series(x)
    } else {
        let y = 1.0 - x;
        if y < 1e-16 {
            PI_SQ_OVER_6
        } else {
            PI_SQ_OVER_6 - x.ln() * y.ln() - dilog_series(y)
        }
    }
}

#[inline]
fn dilog_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut pow = x;
    let mut sum = x;
    let mut m = 1.0_f64;
    loop {
        m += 1.0;
        pow *= x;
        let term = pow / (m * m);
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
    }
}

/// `ρ_L(z, w) = Li₂(|θ_L(z, w)|²)`.
pub fn log_covariance(z: &PolydiskPoint, w: &PolydiskPoint, l: &IntensityVector) -> Result<f64> {
    let t = normalized_kernel(z, w, l)?.norm_sqr().min(1.0);
    Ok(dilog_unchecked(t))
}

/// Outcome of one identity in [`identity_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Degree at which the series of `(1 - x)^{-L}` has a relative tail below
/// `1e-14` for `|x| ≤ 0.81` and `L ≤ 4`.
const SUITE_SERIES_DEGREE: usize = 400;

/// Randomised checks of the kernel identities on `samples` triples
/// `(z, w, L)` with `|z_j|, |w_j| ≤ 0.9`, `L_j ∈ [1, 4]` and the dimension
/// cycling through 1, 2, 3, plus the bounds `x ≤ Li₂(x) ≤ 2x` on a grid of
/// `10⁴` points of `[0, 1]`.
pub fn identity_suite(seed: u64, samples: usize) -> Result<Vec<IdentityCheck>> {
    let rng = crate::rng::CounterRng::new(seed);
    let point = |trial: u64, base: u64, n: usize| -> Result<PolydiskPoint> {
        let coords = (0..n as u64)
            .map(|j| {
                let (u, v) = rng.uniform_pair(trial, base + j);
                Complex64::from_polar(0.9 * u.sqrt(), 2.0 * PI * v)
            })
            .collect();
        PolydiskPoint::new(coords)
    };
    let (mut series, mut product, mut moebius) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..samples {
        let n = 1 + i % 3;
        let t = i as u64;
        let z = point(t, 0, n)?;
        let w = point(t, 8, n)?;
        let l = IntensityVector::new(
            // Summing the series loses `(|1-x|/(1-|x|))^L` in relative
            // accuracy, about 8e3 at worst for L = 4.
            (0..n as u64).map(|j| 1.0 + 3.0 * rng.uniform_pair(t, 16 + j).0).collect(),
        )?;
        let closed = covariance(&z, &w, &l)?;
        let summed = covariance_series(&z, &w, &l, &vec![SUITE_SERIES_DEGREE; n])?;
        series = series.max((summed - closed).norm() / closed.norm());
        let theta_sq = normalized_kernel(&z, &w, &l)?.norm_sqr();
        let prod = normalized_kernel_sq_product(&z, &w, &l)?;
        product = product.max((theta_sq - prod).abs() / prod.max(f64::MIN_POSITIVE));
        let moved = crate::geometry::MoebiusAutomorphism::centered_at(w.clone()).apply(&z)?;
        let at_origin = normalized_kernel(&moved, &PolydiskPoint::origin(n), &l)?.norm();
        let theta = theta_sq.sqrt();
        moebius = moebius.max((theta - at_origin).abs() / theta.max(f64::MIN_POSITIVE));
    }
    let grid = 10_000;
    let mut bound_violation: f64 = 0.0;
    for k in 0..=grid {
        let x = k as f64 / grid as f64;
        let v = dilog_unchecked(x);
        bound_violation = bound_violation.max(x - v).max(v - 2.0 * x);
    }
    Ok(vec![
        IdentityCheck {
            name: "covariance_series".into(),
            samples,
            max_error: series,
            tolerance: 1e-10,
        },
        IdentityCheck {
            name: "theta_product_formula".into(),
            samples,
            max_error: product,
            tolerance: 1e-12,
        },
        IdentityCheck {
            name: "moebius_invariance".into(),
            samples,
            max_error: moebius,
            tolerance: 1e-12,
        },
        IdentityCheck {
            name: "dilog_bounds".into(),
            samples: grid + 1,
            max_error: bound_violation.max(0.0),
            tolerance: 0.0,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MoebiusAutomorphism;

    fn pt(v: &[(f64, f64)]) -> PolydiskPoint {
        PolydiskPoint::new(v.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap()
    }

    /// Li₂ by brute-force partial sums with an integral tail bound; slow but
    /// independent of the reflection formula.
    fn dilog_bruteforce(x: f64) -> f64 {
        let mut s = 0.0;
        let n = 200_000;
        for m in (1..=n).rev() {
            let mf = m as f64;
            s += x.powi(m) / (mf * mf);
        }
        // Σ_{m>N} 1/m² ≈ 1/N - 1/(2N²) for x = 1.
        if x == 1.0 {
            let nf = n as f64;
            s += 1.0 / nf - 0.5 / (nf * nf) + 1.0 / (6.0 * nf * nf * nf);
        }
        s
    }

    #[test]
    fn identity_suite_passes() {
        let checks = identity_suite(1, 300).unwrap();
        assert_eq!(checks.len(), 4);
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn dilog_examples() {
        assert_eq!(dilog(0.0).unwrap(), 0.0);
        let one = dilog(1.0).unwrap();
        assert!((one - 1.644_934_066_8).abs() < 1e-10);
        assert!((one - dilog_bruteforce(1.0)).abs() < 1e-12);
        assert!(dilog(-0.1).is_err());
        assert!(dilog(1.1).is_err());
        for &x in &[0.1, 0.3, 0.5, 0.6, 0.75, 0.9, 0.99] {
            let d = dilog(x).unwrap();
            assert!((d - dilog_bruteforce(x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn dilog_bounds_and_monotone() {
        let mut prev = -1.0;
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            let d = dilog(x).unwrap();
            assert!(x <= d + 1e-15 && d <= 2.0 * x + 1e-15, "x={x}");
            assert!(d > prev || x == 0.0);
            prev = d;
        }
        // The branch point is continuous.
        let lo = dilog(0.5).unwrap();
        let hi = dilog(0.5 + 1e-15).unwrap();
        assert!((lo - hi).abs() < 1e-14);
        assert!((lo - (PI_SQ_OVER_6 / 2.0 - 0.5 * 2f64.ln().powi(2))).abs() < 1e-15);
    }

    #[test]
    fn covariance_examples() {
        let l = IntensityVector::new(vec![2.0]).unwrap();
        let w = pt(&[(0.3, 0.4)]);
        let k0 = covariance(&PolydiskPoint::origin(1), &w, &l).unwrap();
        assert!((k0 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let h = pt(&[(0.5, 0.0)]);
        let k = covariance(&h, &h, &l).unwrap();
        assert!((k.re - 1.0 / 0.5625).abs() < 1e-14 && k.im.abs() < 1e-15);
        let ks = covariance_series(&h, &h, &l, &[60]).unwrap();
        assert!((ks - k).norm() / k.norm() < 1e-12);
        assert!(covariance(&h, &PolydiskPoint::origin(2), &l).is_err());
    }

    #[test]
    fn covariance_hermitian_and_series_box() {
        let l = IntensityVector::new(vec![1.0, 3.0]).unwrap();
        let z = pt(&[(0.5, -0.3), (0.1, 0.62)]);
        let w = pt(&[(-0.2, 0.6), (0.55, 0.2)]);
        let a = covariance(&z, &w, &l).unwrap();
        let b = covariance(&w, &z, &l).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
        let s = covariance_series(&z, &w, &l, &[80, 80]).unwrap();
        assert!((s - a).norm() / a.norm() < 1e-10);
        let c0 = covariance_series(&z, &w, &l, &[0, 0]).unwrap();
        assert_eq!(c0, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn normalized_kernel_examples() {
        let l = IntensityVector::new(vec![2.5, 7.0]).unwrap();
        let z = pt(&[(0.5, -0.3), (0.1, 0.62)]);
        let w = pt(&[(-0.2, 0.6), (0.55, 0.2)]);
        let diag = normalized_kernel(&z, &z, &l).unwrap();
        assert!((diag - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        let theta = normalized_kernel(&z, &w, &l).unwrap();
        assert!(theta.norm() <= 1.0);
        let prod = normalized_kernel_sq_product(&z, &w, &l).unwrap();
        assert!((theta.norm_sqr() - prod).abs() / prod < 1e-12);
        let phi = MoebiusAutomorphism::centered_at(w.clone());
        let moved = normalized_kernel(&phi.apply(&z).unwrap(), &PolydiskPoint::origin(2), &l).unwrap();
        assert!((moved.norm() - theta.norm()).abs() / theta.norm() < 1e-12);
    }

    #[test]
    fn log_covariance_examples() {
        let l = IntensityVector::new(vec![3.0]).unwrap();
        let z = pt(&[(0.2, 0.1)]);
        let w = pt(&[(-0.1, 0.35)]);
        assert!((log_covariance(&z, &z, &l).unwrap() - PI_SQ_OVER_6).abs() < 1e-15);
        let t = normalized_kernel(&z, &w, &l).unwrap().norm_sqr();
        let r = log_covariance(&z, &w, &l).unwrap();
        assert!(t <= r && r <= 2.0 * t);
        let u = PolydiskPoint::new(vec![Complex64::new(0.4, -0.5)]).unwrap();
        let phi = MoebiusAutomorphism::centered_at(u);
        let moved = log_covariance(&phi.apply(&z).unwrap(), &phi.apply(&w).unwrap(), &l).unwrap();
        assert!((moved - r).abs() < 1e-12);
    }
}
