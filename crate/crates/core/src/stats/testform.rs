//! Compactly supported weights `ψ` and their mixed second derivatives
//! `∂²ψ/∂z_j∂z̄_j`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{MoebiusAutomorphism, PolydiskPoint};
use crate::rng::CounterRng;

/// Step of the central differences used when no analytic derivative exists.
pub const FD_STEP: f64 = 1e-4;

/// `g(|z|²)` profiles with support `|z| < radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    /// `exp(1 - 1/(1 - |z|²/R²))`, smooth with all derivatives vanishing on
    /// the rim.
    SmoothBump { radius: f64 },
    /// `(1 - |z|²/R²)²`, only `C¹` across the rim.
    PolyBump { radius: f64 },
    /// Indicator of the disk; only meaningful for mean computations.
    Indicator { radius: f64 },
}

impl RadialProfile {
    pub fn radius(&self) -> f64 {
        match *self {
            Self::SmoothBump { radius } | Self::PolyBump { radius } | Self::Indicator { radius } => {
                radius
            }
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Indicator { .. })
    }

    /// `g(s)` at `s = |z|²`.
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        let r2 = self.radius() * self.radius();
        if s >= r2 {
            return 0.0;
        }
        let q = 1.0 - s / r2;
        match self {
            Self::SmoothBump { .. } => (1.0 - 1.0 / q).exp(),
            Self::PolyBump { .. } => q * q,
            Self::Indicator { .. } => 1.0,
        }
    }

    /// `∂²/∂z∂z̄ g(|z|²) = g'(s) + s g''(s)`.
    #[inline]
    pub fn mixed(&self, s: f64) -> f64 {
        let r2 = self.radius() * self.radius();
        if s >= r2 {
            return 0.0;
        }
        let q = 1.0 - s / r2;
        match self {
            Self::SmoothBump { .. } => {
                let g = (1.0 - 1.0 / q).exp();
                let d1 = -g / (r2 * q * q);
                let d2 = g / (r2 * r2 * q.powi(4)) - 2.0 * g / (r2 * r2 * q.powi(3));
                d1 + s * d2
            }
            Self::PolyBump { .. } => -2.0 * q / r2 + s * 2.0 / (r2 * r2),
            Self::Indicator { .. } => 0.0,
        }
    }
}

pub type PsiFn = Arc<dyn Fn(&[Complex64]) -> f64 + Send + Sync>;
pub type MixedFn = Arc<dyn Fn(&[Complex64], usize) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Product(Vec<RadialProfile>),
    Composed {
        base: Box<TestForm>,
        map: MoebiusAutomorphism,
    },
    Permuted {
        base: Box<TestForm>,
        perm: Vec<usize>,
    },
    Custom {
        psi: PsiFn,
        mixed: Option<MixedFn>,
    },
}

/// A weight `ψ` on `𝔻ⁿ` supported in the box `{|z_j| < support_j}`.
#[derive(Clone)]
pub struct TestForm {
    shape: Shape,
    support: Vec<f64>,
}

impl fmt::Debug for TestForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.shape {
            Shape::Product(p) => format!("Product({p:?})"),
            Shape::Composed { base, map } => format!("Composed({base:?}, {map:?})"),
            Shape::Permuted { base, perm } => format!("Permuted({base:?}, {perm:?})"),
            Shape::Custom { mixed, .. } => format!("Custom(analytic={})", mixed.is_some()),
        };
        f.debug_struct("TestForm")
            .field("shape", &kind)
            .field("support", &self.support)
            .finish()
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "support radius must lie in (0, 1), got {r}"
        )))
    }
}

impl TestForm {
    /// `∏_j g_j(|z_j|²)`.
    pub fn product(profiles: Vec<RadialProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::InvalidParameter("test form needs n >= 1".into()));
        }
        for p in &profiles {
            check_radius(p.radius())?;
        }
        let support = profiles.iter().map(|p| p.radius()).collect();
        Ok(Self {
            shape: Shape::Product(profiles),
            support,
        })
    }

    pub fn smooth_bump(radii: &[f64]) -> Result<Self> {
        Self::product(radii.iter().map(|&radius| RadialProfile::SmoothBump { radius }).collect())
    }

    pub fn poly_bump(radii: &[f64]) -> Result<Self> {
        Self::product(radii.iter().map(|&radius| RadialProfile::PolyBump { radius }).collect())
    }

    pub fn indicator(radii: &[f64]) -> Result<Self> {
        Self::product(radii.iter().map(|&radius| RadialProfile::Indicator { radius }).collect())
    }

    /// User-supplied `ψ`. Without `mixed`, derivatives come from central
    /// differences with step [`FD_STEP`].
    pub fn custom(support: Vec<f64>, psi: PsiFn, mixed: Option<MixedFn>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidParameter("test form needs n >= 1".into()));
        }
        for &r in &support {
            check_radius(r)?;
        }
        Ok(Self {
            shape: Shape::Custom { psi, mixed },
            support,
        })
    }

    /// `z ↦ ψ(map(z))`.
    pub fn composed_with(&self, map: MoebiusAutomorphism) -> Result<Self> {
        crate::geometry::check_dims(self.dim(), map.dim())?;
        // The preimage of {|ζ| < R} is the pseudo-hyperbolic disk of radius R
        // about the preimage of 0.
        let support = (0..self.dim())
            .map(|j| {
                let c = map.apply_inverse_coord(j, Complex64::new(0.0, 0.0)).norm();
                let r = self.support[j];
                (c + r) / (1.0 + c * r)
            })
            .collect();
        Ok(Self {
            shape: Shape::Composed {
                base: Box::new(self.clone()),
                map,
            },
            support,
        })
    }

    /// `z ↦ ψ(z_{perm[0]}, …, z_{perm[n-1]})`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::geometry::check_dims(self.dim(), perm.len())?;
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let mut support = vec![0.0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            support[p] = self.support[k];
        }
        if let Shape::Product(profiles) = &self.shape {
            let mut moved = profiles.clone();
            for (k, &p) in perm.iter().enumerate() {
                moved[p] = profiles[k];
            }
            return Self::product(moved);
        }
        Ok(Self {
            shape: Shape::Permuted {
                base: Box::new(self.clone()),
                perm: perm.to_vec(),
            },
            support,
        })
    }

    /// Exchange the two coordinates of an `n = 2` form.
    pub fn swapped(&self) -> Result<Self> {
        crate::geometry::check_dims(2, self.dim())?;
        self.permuted(&[1, 0])
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// Per-coordinate radii `r_ψ` of the support box.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Radial factors when `ψ = ∏ g_j(|z_j|²)`.
    pub fn product_profiles(&self) -> Option<&[RadialProfile]> {
        match &self.shape {
            Shape::Product(p) => Some(p),
            _ => None,
        }
    }

    /// The form with automorphism compositions stripped. Quantities that
    /// are invariant under disk automorphisms can be computed on it.
    pub(crate) fn automorphism_base(&self) -> &TestForm {
        match &self.shape {
            Shape::Composed { base, .. } => base.automorphism_base(),
            _ => self,
        }
    }

    /// Whether second derivatives exist everywhere (indicators do not).
    pub fn is_smooth(&self) -> bool {
        match &self.shape {
            Shape::Product(p) => p.iter().all(RadialProfile::is_smooth),
            Shape::Composed { base, .. } | Shape::Permuted { base, .. } => base.is_smooth(),
            Shape::Custom { .. } => true,
        }
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        match &self.shape {
            Shape::Product(_) => true,
            Shape::Composed { base, .. } | Shape::Permuted { base, .. } => {
                base.has_analytic_derivatives()
            }
            Shape::Custom { mixed, .. } => mixed.is_some(),
        }
    }

    /// `ψ(z)`.
    pub fn psi(&self, z: &PolydiskPoint) -> Result<f64> {
        crate::geometry::check_dims(self.dim(), z.dim())?;
        Ok(self.psi_at(z.coords()))
    }

    /// `∂²ψ/∂z_j∂z̄_j (z)`.
    pub fn mixed_second(&self, z: &PolydiskPoint, j: usize) -> Result<f64> {
        crate::geometry::check_dims(self.dim(), z.dim())?;
        if j >= self.dim() {
            return Err(Error::InvalidParameter(format!("coordinate {j} out of range")));
        }
        Ok(self.mixed_at(z.coords(), j))
    }

    pub(crate) fn psi_at(&self, z: &[Complex64]) -> f64 {
        match &self.shape {
            Shape::Product(p) => {
                let mut v = 1.0;
                for (g, zj) in p.iter().zip(z) {
                    v *= g.value(zj.norm_sqr());
                    if v == 0.0 {
                        break;
                    }
                }
                v
            }
            Shape::Composed { base, map } => {
                let w: Vec<Complex64> =
                    z.iter().enumerate().map(|(j, zj)| map.apply_coord(j, *zj)).collect();
                base.psi_at(&w)
            }
            Shape::Permuted { base, perm } => {
                let w: Vec<Complex64> = perm.iter().map(|&p| z[p]).collect();
                base.psi_at(&w)
            }
            Shape::Custom { psi, .. } => psi(z),
        }
    }

    pub(crate) fn mixed_at(&self, z: &[Complex64], j: usize) -> f64 {
        match &self.shape {
            Shape::Product(p) => {
                let mut v = p[j].mixed(z[j].norm_sqr());
                for (k, (g, zk)) in p.iter().zip(z).enumerate() {
                    if v == 0.0 {
                        break;
                    }
                    if k != j {
                        v *= g.value(zk.norm_sqr());
                    }
                }
                v
            }
            Shape::Composed { base, map } => {
                let w: Vec<Complex64> =
                    z.iter().enumerate().map(|(k, zk)| map.apply_coord(k, *zk)).collect();
                base.mixed_at(&w, j) * map.coord_derivative(j, z[j]).norm_sqr()
            }
            Shape::Permuted { base, perm } => {
                let w: Vec<Complex64> = perm.iter().map(|&p| z[p]).collect();
                let k = perm.iter().position(|&p| p == j).expect("valid permutation");
                base.mixed_at(&w, k)
            }
            Shape::Custom { mixed: Some(m), .. } => m(z, j),
            Shape::Custom { mixed: None, .. } => self.mixed_fd(z, j),
        }
    }

    /// `Δ_j ψ / 4` by the five-point stencil in coordinate `j`.
    pub(crate) fn mixed_fd(&self, z: &[Complex64], j: usize) -> f64 {
        self.stencil(z, j, FD_STEP)
    }

    fn stencil(&self, z: &[Complex64], j: usize, h: f64) -> f64 {
        let mut w = z.to_vec();
        let center = self.psi_at(z);
        let mut acc = -4.0 * center;
        for d in [
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(0.0, h),
            Complex64::new(0.0, -h),
        ] {
            w[j] = z[j] + d;
            acc += self.psi_at(&w);
        }
        acc / (4.0 * h * h)
    }

    /// Richardson combination of the stencil at `h` and `h/2`, accurate to
    /// fourth order in the step.
    pub(crate) fn mixed_fd_extrapolated(&self, z: &[Complex64], j: usize) -> f64 {
        let coarse = self.stencil(z, j, FD_STEP);
        let fine = self.stencil(z, j, 0.5 * FD_STEP);
        (4.0 * fine - coarse) / 3.0
    }

    /// Checks that `ψ` vanishes outside its support box and that analytic
    /// derivatives agree with central differences to `1e-6`.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let rng = CounterRng::new(0x7E57_F0A3);
        let mut index = 0u64;
        let mut next = || {
            index += 1;
            rng.uniform_pair(0, index)
        };
        let point = |scale: &dyn Fn(usize) -> f64, next: &mut dyn FnMut() -> (f64, f64)| {
            (0..n)
                .map(|k| {
                    let (a, b) = next();
                    Complex64::from_polar(scale(k) * a.sqrt(), std::f64::consts::TAU * b)
                })
                .collect::<Vec<_>>()
        };
        for j in 0..n {
            for _ in 0..64 {
                let mut z = point(&|k| self.support[k], &mut next);
                let (a, b) = next();
                let r = self.support[j] + (1.0 - self.support[j]) * (1e-9 + 0.999 * a);
                z[j] = Complex64::from_polar(r.min(1.0 - 1e-9), std::f64::consts::TAU * b);
                let v = self.psi_at(&z);
                if v.abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "psi = {v} outside its support box at {z:?}"
                    )));
                }
            }
        }
        if self.has_analytic_derivatives() && self.is_smooth() {
            for _ in 0..64 {
                let z = point(&|k| 0.8 * self.support[k], &mut next);
                for j in 0..n {
                    let exact = self.mixed_at(&z, j);
                    let fd = self.mixed_fd_extrapolated(&z, j);
                    if (exact - fd).abs() > 1e-6 * exact.abs().max(1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "analytic mixed derivative {exact} disagrees with finite differences {fd}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_values() {
        let p = RadialProfile::PolyBump { radius: 0.5 };
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(0.25), 0.0);
        assert!((p.mixed(0.0) + 2.0 / 0.25).abs() < 1e-14);
        let s = RadialProfile::SmoothBump { radius: 0.5 };
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.value(0.3), 0.0);
        assert!((s.mixed(0.0) + 1.0 / 0.25).abs() < 1e-14);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        TestForm::smooth_bump(&[0.5]).unwrap().validate().unwrap();
        TestForm::smooth_bump(&[0.95, 0.6]).unwrap().validate().unwrap();
        TestForm::poly_bump(&[0.7, 0.4]).unwrap().validate().unwrap();
        let w = PolydiskPoint::new(vec![Complex64::new(0.2, -0.3)]).unwrap();
        let moved = TestForm::smooth_bump(&[0.5])
            .unwrap()
            .composed_with(MoebiusAutomorphism::centered_at(w))
            .unwrap();
        moved.validate().unwrap();
    }

    #[test]
    fn separable_mixed_derivative() {
        let f = TestForm::poly_bump(&[0.6, 0.8]).unwrap();
        let g1 = RadialProfile::PolyBump { radius: 0.6 };
        let g2 = RadialProfile::PolyBump { radius: 0.8 };
        let z = PolydiskPoint::new(vec![Complex64::new(0.1, 0.3), Complex64::new(-0.4, 0.2)]).unwrap();
        let (s1, s2) = (z.coord(0).norm_sqr(), z.coord(1).norm_sqr());
        assert!((f.mixed_second(&z, 0).unwrap() - g1.mixed(s1) * g2.value(s2)).abs() < 1e-15);
        assert!((f.mixed_second(&z, 1).unwrap() - g2.mixed(s2) * g1.value(s1)).abs() < 1e-15);
    }

    #[test]
    fn custom_without_derivative_uses_differences() {
        let psi: PsiFn = Arc::new(|z: &[Complex64]| {
            let s = z[0].norm_sqr();
            if s < 0.25 {
                (0.25 - s).powi(3)
            } else {
                0.0
            }
        });
        let f = TestForm::custom(vec![0.5], psi, None).unwrap();
        f.validate().unwrap();
        let z = PolydiskPoint::new(vec![Complex64::new(0.2, 0.1)]).unwrap();
        // (c - s)^3: g' = -3(c-s)^2, g'' = 6(c-s)
        let s: f64 = 0.05;
        let exact = -3.0 * (0.25 - s).powi(2) + s * 6.0 * (0.25 - s);
        assert!((f.mixed_second(&z, 0).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn leaking_support_is_rejected() {
        let psi: PsiFn = Arc::new(|z: &[Complex64]| 1.0 - z[0].norm_sqr());
        let f = TestForm::custom(vec![0.5], psi, None).unwrap();
        assert!(f.validate().is_err());
    }

    #[test]
    fn swap_exchanges_coordinates() {
        let f = TestForm::smooth_bump(&[0.3, 0.7]).unwrap();
        let g = f.swapped().unwrap();
        assert_eq!(g.support(), &[0.7, 0.3]);
        let z = PolydiskPoint::new(vec![Complex64::new(0.1, 0.0), Complex64::new(0.5, 0.1)]).unwrap();
        let zs = PolydiskPoint::new(vec![z.coord(1), z.coord(0)]).unwrap();
        assert_eq!(f.psi(&z).unwrap(), g.psi(&zs).unwrap());
    }
}
