//! Geometry of the unit polydisk: pseudo-hyperbolic distance, the Möbius
//! automorphisms `φ_w^θ`, the invariant measure `ν` and the intensity form.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coordinates must satisfy `|z_j| <= 1 - BOUNDARY_MARGIN`.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// A point of the unit polydisk `𝔻ⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolydiskPoint {
    coords: Vec<Complex64>,
}

impl PolydiskPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        for (index, z) in coords.iter().enumerate() {
            let modulus = z.norm();
            if !modulus.is_finite() || modulus > 1.0 - BOUNDARY_MARGIN {
                return Err(Error::OutsideDisk { index, modulus });
            }
        }
        Ok(Self { coords })
    }

    /// Point with real coordinates.
    pub fn from_real(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn origin(n: usize) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        Self {
            coords: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn coord(&self, j: usize) -> Complex64 {
        self.coords[j]
    }

    /// Coordinatewise `|z_j|`.
    pub fn moduli(&self) -> Vec<f64> {
        self.coords.iter().map(|z| z.norm()).collect()
    }

    /// `[1 - |z|^2] = ∏ (1 - |z_j|^2)`.
    pub fn boundary_defect(&self) -> f64 {
        self.coords.iter().map(|z| 1.0 - z.norm_sqr()).product()
    }
}

/// Directional intensity `L = (L_1, ..., L_n)` with every `L_j > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector {
    values: Vec<f64>,
}

impl IntensityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("intensity vector is empty".into()));
        }
        if let Some(bad) = values.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "intensities must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { values })
    }

    /// `L_j = value` for every coordinate.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn product(&self) -> f64 {
        self.values.iter().product()
    }

    /// The large-deviation exponent scale `(Σ L_j)(∏ L_j)`.
    pub fn exponent_scale(&self) -> f64 {
        self.sum() * self.product()
    }

    /// Every intensity multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|l| l * t).collect())
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

fn check_unit(z: Complex64) -> Result<()> {
    if z.norm() < 1.0 && z.norm().is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            value: z.norm(),
            domain: "open unit disk",
        })
    }
}

/// Pseudo-hyperbolic distance `|ζ - ξ| / |1 - ζ̄ ξ|` on the unit disk.
pub fn pseudo_distance(zeta: Complex64, xi: Complex64) -> Result<f64> {
    check_unit(zeta)?;
    check_unit(xi)?;
    Ok(pseudo_distance_unchecked(zeta, xi))
}

#[inline]
pub(crate) fn pseudo_distance_unchecked(zeta: Complex64, xi: Complex64) -> f64 {
    (zeta - xi).norm() / (Complex64::new(1.0, 0.0) - zeta.conj() * xi).norm()
}

/// `1 - ρ(ζ, ξ)^2`, computed as `(1-|ζ|²)(1-|ξ|²)/|1-ζ̄ξ|²` so that it keeps
/// full relative accuracy when the two points are far apart.
#[inline]
pub(crate) fn one_minus_rho_sq(zeta: Complex64, xi: Complex64) -> f64 {
    let d = (Complex64::new(1.0, 0.0) - zeta.conj() * xi).norm_sqr();
    (1.0 - zeta.norm_sqr()) * (1.0 - xi.norm_sqr()) / d
}

/// Element `φ_w^θ` of the automorphism subgroup:
/// `z ↦ (e^{iθ_j} (z_j - w_j) / (1 - w̄_j z_j))_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoebiusAutomorphism {
    center: PolydiskPoint,
    phases: Vec<f64>,
}

impl MoebiusAutomorphism {
    pub fn new(center: PolydiskPoint, phases: Vec<f64>) -> Result<Self> {
        check_dims(center.dim(), phases.len())?;
        if phases.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        let phases = phases.into_iter().map(|t| t.rem_euclid(2.0 * PI)).collect();
        Ok(Self { center, phases })
    }

    /// `φ_w` (all phases zero).
    pub fn centered_at(center: PolydiskPoint) -> Self {
        let n = center.dim();
        Self {
            center,
            phases: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::centered_at(PolydiskPoint::origin(n))
    }

    pub fn center(&self) -> &PolydiskPoint {
        &self.center
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    #[inline]
    pub(crate) fn apply_coord(&self, j: usize, z: Complex64) -> Complex64 {
        let w = self.center.coords[j];
        let rot = Complex64::from_polar(1.0, self.phases[j]);
        rot * (z - w) / (Complex64::new(1.0, 0.0) - w.conj() * z)
    }

    #[inline]
    pub(crate) fn apply_inverse_coord(&self, j: usize, zeta: Complex64) -> Complex64 {
        let w = self.center.coords[j];
        let u = Complex64::from_polar(1.0, -self.phases[j]) * zeta;
        (u + w) / (Complex64::new(1.0, 0.0) + w.conj() * u)
    }

    pub fn apply(&self, z: &PolydiskPoint) -> Result<PolydiskPoint> {
        check_dims(self.dim(), z.dim())?;
        let coords = (0..self.dim()).map(|j| self.apply_coord(j, z.coords[j])).collect();
        // The image of an interior point stays interior; clamping guards the
        // last ulp when z sits on the construction margin.
        Ok(PolydiskPoint {
            coords: clamp_into_disk(coords),
        })
    }

    pub fn apply_inverse(&self, zeta: &PolydiskPoint) -> Result<PolydiskPoint> {
        check_dims(self.dim(), zeta.dim())?;
        let coords = (0..self.dim())
            .map(|j| self.apply_inverse_coord(j, zeta.coords[j]))
            .collect();
        Ok(PolydiskPoint {
            coords: clamp_into_disk(coords),
        })
    }

    /// Complex derivative of coordinate `j` of the map at `z_j`.
    pub fn coord_derivative(&self, j: usize, z: Complex64) -> Complex64 {
        let w = self.center.coords[j];
        let denom = Complex64::new(1.0, 0.0) - w.conj() * z;
        Complex64::from_polar(1.0, self.phases[j]) * (1.0 - w.norm_sqr()) / (denom * denom)
    }

    /// Real Jacobian determinant of the map at `z`, i.e. `∏ |φ_j'(z_j)|²`.
    pub fn jacobian(&self, z: &PolydiskPoint) -> Result<f64> {
        check_dims(self.dim(), z.dim())?;
        Ok((0..self.dim())
            .map(|j| self.coord_derivative(j, z.coords[j]).norm_sqr())
            .product())
    }
}

fn clamp_into_disk(mut coords: Vec<Complex64>) -> Vec<Complex64> {
    let bound = 1.0 - BOUNDARY_MARGIN;
    for z in coords.iter_mut() {
        let m = z.norm();
        if m > bound {
            *z *= bound / m;
        }
    }
    coords
}

/// Density of `ν` against Lebesgue measure: `1 / (πⁿ ∏ (1 - |z_j|²)²)`.
pub fn invariant_density(z: &PolydiskPoint) -> f64 {
    let defect = z.boundary_defect();
    1.0 / (PI.powi(z.dim() as i32) * defect * defect)
}

/// Pseudo-hyperbolic polydisk `E(w, r) = {z : ρ(z_j, w_j) < r_j for all j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoHyperbolicPolydisk {
    center: PolydiskPoint,
    radii: Vec<f64>,
}

impl PseudoHyperbolicPolydisk {
    pub fn new(center: PolydiskPoint, radii: Vec<f64>) -> Result<Self> {
        check_dims(center.dim(), radii.len())?;
        if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "polyradius entries must lie in (0,1), got {r}"
            )));
        }
        Ok(Self { center, radii })
    }

    pub fn centered_at_origin(radii: Vec<f64>) -> Result<Self> {
        let n = radii.len().max(1);
        Self::new(PolydiskPoint::origin(n), radii)
    }

    pub fn center(&self) -> &PolydiskPoint {
        &self.center
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn dim(&self) -> usize {
        self.radii.len()
    }

    pub fn contains(&self, z: &PolydiskPoint) -> bool {
        z.dim() == self.dim()
            && (0..self.dim()).all(|j| {
                pseudo_distance_unchecked(z.coord(j), self.center.coord(j)) < self.radii[j]
            })
    }

    /// Euclidean radius of a disk centred at the origin that contains the
    /// projection of `E(w, r)` onto coordinate `j`.
    pub fn euclidean_bound(&self, j: usize) -> f64 {
        let a = self.center.coord(j).norm();
        let r = self.radii[j];
        (a + r) / (1.0 + a * r)
    }
}

/// `ν(E(w, r)) = ∏ r_j² / (1 - r_j²)`; independent of the centre.
pub fn nu_volume(e: &PseudoHyperbolicPolydisk) -> f64 {
    e.radii.iter().map(|r| r * r / (1.0 - r * r)).product()
}

/// Coefficients `L_j / (1 - |z_j|²)²` of the intensity form `ω_L`.
pub fn intensity_form_coefficients(z: &PolydiskPoint, l: &IntensityVector) -> Result<Vec<f64>> {
    check_dims(z.dim(), l.dim())?;
    Ok(z
        .coords
        .iter()
        .zip(l.values())
        .map(|(zj, lj)| {
            let d = 1.0 - zj.norm_sqr();
            lj / (d * d)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pseudo_distance_examples() {
        let xi = c(0.3, -0.4);
        assert!((pseudo_distance(c(0.0, 0.0), xi).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pseudo_distance(xi, xi).unwrap(), 0.0);
        assert!((pseudo_distance(c(0.5, 0.0), c(-0.5, 0.0)).unwrap() - 0.8).abs() < 1e-15);
        assert!(pseudo_distance(c(1.0, 0.0), xi).is_err());
        assert!(pseudo_distance(xi, c(0.0, 1.5)).is_err());
    }

    #[test]
    fn point_construction_rejects_boundary() {
        assert!(PolydiskPoint::from_real(&[0.5, 1.0]).is_err());
        assert!(PolydiskPoint::from_real(&[1.0 - 1e-13]).is_err());
        assert!(PolydiskPoint::from_real(&[1.0 - 1e-11]).is_ok());
        assert!(PolydiskPoint::new(vec![]).is_err());
        assert!(IntensityVector::new(vec![1.0, 0.0]).is_err());
        assert!(IntensityVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn automorphism_maps_center_to_origin_and_identity() {
        let w = PolydiskPoint::new(vec![c(0.3, 0.2), c(-0.5, 0.1)]).unwrap();
        let phi = MoebiusAutomorphism::centered_at(w.clone());
        let image = phi.apply(&w).unwrap();
        assert!(image.coords().iter().all(|z| z.norm() < 1e-15));

        let z = PolydiskPoint::new(vec![c(0.1, -0.7), c(0.4, 0.4)]).unwrap();
        let id = MoebiusAutomorphism::identity(2);
        assert_eq!(id.apply(&z).unwrap(), z);

        let rotated = MoebiusAutomorphism::new(w.clone(), vec![1.0, -2.0]).unwrap();
        let back = rotated.apply_inverse(&rotated.apply(&z).unwrap()).unwrap();
        for (a, b) in back.coords().iter().zip(z.coords()) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!(phi.apply(&PolydiskPoint::origin(3)).is_err());
    }

    #[test]
    fn invariant_density_examples() {
        let o = PolydiskPoint::origin(2);
        assert!((invariant_density(&o) - 1.0 / (PI * PI)).abs() < 1e-16);
        let z = PolydiskPoint::from_real(&[0.5]).unwrap();
        assert!((invariant_density(&z) - 1.0 / (PI * 0.5625)).abs() < 1e-15);
        assert!((invariant_density(&z) - 0.565884).abs() < 1e-6);
    }

    #[test]
    fn intensity_form_examples() {
        let l = IntensityVector::new(vec![2.0, 3.5]).unwrap();
        let v = intensity_form_coefficients(&PolydiskPoint::origin(2), &l).unwrap();
        assert_eq!(v, vec![2.0, 3.5]);
        let l1 = IntensityVector::new(vec![2.0]).unwrap();
        let z = PolydiskPoint::from_real(&[0.5]).unwrap();
        let v = intensity_form_coefficients(&z, &l1).unwrap();
        assert!((v[0] - 2.0 / 0.5625).abs() < 1e-14);
        let doubled = intensity_form_coefficients(&z, &l1.scaled(2.0).unwrap()).unwrap();
        assert!((doubled[0] - 2.0 * v[0]).abs() < 1e-14);
        assert!(intensity_form_coefficients(&PolydiskPoint::origin(2), &l1).is_err());
    }

    #[test]
    fn nu_volume_examples() {
        let e = PseudoHyperbolicPolydisk::centered_at_origin(vec![0.5]).unwrap();
        assert!((nu_volume(&e) - 1.0 / 3.0).abs() < 1e-15);
        let tiny = PseudoHyperbolicPolydisk::centered_at_origin(vec![1e-8, 0.5]).unwrap();
        assert!(nu_volume(&tiny) < 1e-16);
        assert!(PseudoHyperbolicPolydisk::centered_at_origin(vec![1.0]).is_err());
    }
}
