//! Linear statistics `I_L(ψ)` of the zero set and their mean.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, IntensityVector, PolydiskPoint};
use crate::sampler::GafSample;
use crate::zeros1d::polynomial_roots;

use super::quadrature::{quadrature, radial_nu_integral, CompositeRule, QuadratureOptions};
use super::testform::TestForm;

/// `Dφ(z) = Σ_j (1 - |z_j|²)² ∂²ψ/∂z_j∂z̄_j (z)`.
pub fn dphi(psi: &TestForm, z: &PolydiskPoint) -> Result<f64> {
    check_dims(psi.dim(), z.dim())?;
    Ok(dphi_at(psi, z.coords()))
}

pub(crate) fn dphi_at(psi: &TestForm, z: &[Complex64]) -> f64 {
    z.iter()
        .enumerate()
        .map(|(j, zj)| {
            let d = 1.0 - zj.norm_sqr();
            d * d * psi.mixed_at(z, j)
        })
        .sum()
}

/// `∫ ψ dν`, factorised over coordinates for product forms.
pub fn psi_integral(psi: &TestForm, rtol: f64) -> Result<f64> {
    if let Some(profiles) = psi.product_profiles() {
        let mut total = 1.0;
        for g in profiles {
            let r2 = g.radius() * g.radius();
            total *= radial_nu_integral(|s| g.value(s), r2, rtol)?;
        }
        return Ok(total);
    }
    quadrature(
        |z| psi.psi_at(z),
        psi.support(),
        QuadratureOptions {
            rtol,
            ..Default::default()
        },
    )
}

/// `E[I_L(ψ)] = (Σ_j L_j) ∫ ψ dν`.
pub fn expected_statistic(psi: &TestForm, l: &IntensityVector, rtol: f64) -> Result<f64> {
    check_dims(psi.dim(), l.dim())?;
    Ok(l.sum() * psi_integral(psi, rtol)?)
}

/// Resolution of the polar torus grid used by the Stokes route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StokesOptions {
    /// Gauss–Legendre panels in `s = |z_j|²` per coordinate.
    pub panels: usize,
    /// Points per panel.
    pub order: usize,
    /// Angular nodes per coordinate.
    pub angular: usize,
}

impl StokesOptions {
    /// Grids tuned for one and for several variables.
    pub fn default_for(n: usize) -> Self {
        if n == 1 {
            Self {
                panels: 16,
                order: 8,
                angular: 256,
            }
        } else {
            Self {
                panels: 4,
                order: 6,
                angular: 48,
            }
        }
    }
}

#[derive(Debug, Clone)]
enum TorusWeights {
    /// Same weight at every angular node.
    Uniform(f64),
    Full(Vec<f64>),
}

/// Precomputed nodes and `Dφ`-weights for evaluating
/// `I_L(ψ) = E + ∫ log|f̂_L|² Dφ dν` sample after sample.
#[derive(Debug, Clone)]
pub struct StokesPlan {
    dim: usize,
    l: IntensityVector,
    angular: Vec<usize>,
    radii: Vec<Vec<f64>>,
    /// Active radial combinations as per-coordinate node indices.
    combos: Vec<Vec<usize>>,
    weights: Vec<TorusWeights>,
    /// `E[I_L] + Σ_nodes w Σ_j L_j log(1 - |z_j|²)`.
    offset: f64,
    expected: f64,
    outer_radius: Vec<f64>,
}

impl StokesPlan {
    pub fn new(psi: &TestForm, l: &IntensityVector, opts: StokesOptions, rtol: f64) -> Result<Self> {
        check_dims(psi.dim(), l.dim())?;
        if !psi.is_smooth() {
            return Err(Error::InvalidParameter(
                "the Stokes route needs a twice differentiable test form".into(),
            ));
        }
        let n = psi.dim();
        let expected = expected_statistic(psi, l, rtol)?;
        let rules: Vec<CompositeRule> = psi
            .support()
            .iter()
            .map(|&r| {
                let mut rule = CompositeRule::new(0.0, r * r, opts.panels, opts.order);
                for (s, w) in rule.nodes.iter().zip(rule.weights.iter_mut()) {
                    *w /= (1.0 - s) * (1.0 - s) * opts.angular as f64;
                }
                rule
            })
            .collect();
        let radii: Vec<Vec<f64>> = rules.iter().map(|r| r.nodes.iter().map(|s| s.sqrt()).collect()).collect();
        let angular = vec![opts.angular; n];
        let product = psi.product_profiles().is_some();
        let torus: usize = angular.iter().product();
        let mut combos = Vec::new();
        let mut weights = Vec::new();
        let mut offset = expected;
        let mut idx = vec![0usize; n];
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        let mut grid_idx = vec![0usize; n];
        'outer: loop {
            let base_w: f64 = (0..n).map(|j| rules[j].weights[idx[j]]).product();
            let log_defect: f64 = (0..n)
                .map(|j| l.get(j) * (1.0 - rules[j].nodes[idx[j]]).ln())
                .sum();
            let entry = if product {
                for j in 0..n {
                    z[j] = Complex64::new(radii[j][idx[j]], 0.0);
                }
                let w = base_w * dphi_at(psi, &z);
                offset += w * torus as f64 * log_defect;
                (w != 0.0).then_some(TorusWeights::Uniform(w))
            } else {
                let mut full = Vec::with_capacity(torus);
                let mut any = false;
                grid_idx.iter_mut().for_each(|g| *g = 0);
                for _ in 0..torus {
                    for j in 0..n {
                        z[j] = Complex64::from_polar(
                            radii[j][idx[j]],
                            std::f64::consts::TAU * grid_idx[j] as f64 / angular[j] as f64,
                        );
                    }
                    let w = base_w * dphi_at(psi, &z);
                    any |= w != 0.0;
                    offset += w * log_defect;
                    full.push(w);
                    for j in (0..n).rev() {
                        grid_idx[j] += 1;
                        if grid_idx[j] < angular[j] {
                            break;
                        }
                        grid_idx[j] = 0;
                    }
                }
                any.then_some(TorusWeights::Full(full))
            };
            if let Some(e) = entry {
                combos.push(idx.clone());
                weights.push(e);
            }
            let mut j = n;
            loop {
                if j == 0 {
                    break 'outer;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < rules[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(Self {
            dim: n,
            l: l.clone(),
            angular,
            radii,
            combos,
            weights,
            offset,
            expected,
            outer_radius: psi.support().to_vec(),
        })
    }

    pub fn expected(&self) -> f64 {
        self.expected
    }

    /// Radii that a sample must be certified on.
    pub fn support(&self) -> &[f64] {
        &self.outer_radius
    }

    /// Value of the statistic for the sample with `f ≡ 1`, i.e.
    /// `E + ∫ Σ L_j log(1-|z_j|²) Dφ dν`.
    pub fn constant_sample_value(&self) -> f64 {
        self.offset
    }

    pub fn node_count(&self) -> usize {
        self.combos.len() * self.angular.iter().product::<usize>()
    }

    /// `I_L(ψ)` for one sample.
    pub fn statistic(&self, s: &GafSample) -> Result<f64> {
        check_dims(self.dim, s.dim())?;
        check_dims(self.dim, self.l.dim())?;
        if s.intensity() != &self.l {
            return Err(Error::InvalidParameter(
                "sample intensity differs from the plan's".into(),
            ));
        }
        let n = self.dim;
        let mut acc = 0.0;
        let mut r = vec![0.0; n];
        for (combo, w) in self.combos.iter().zip(&self.weights) {
            for j in 0..n {
                r[j] = self.radii[j][combo[j]];
            }
            let values = s.evaluate_on_torus(&r, &self.angular)?;
            match w {
                TorusWeights::Uniform(w) => {
                    let mut sum = 0.0;
                    for (k, v) in values.iter().enumerate() {
                        sum += self.log_abs_sq(s, *v, &r, k);
                    }
                    acc += w * sum;
                }
                TorusWeights::Full(ws) => {
                    for (k, (v, w)) in values.iter().zip(ws).enumerate() {
                        if *w != 0.0 {
                            acc += w * self.log_abs_sq(s, *v, &r, k);
                        }
                    }
                }
            }
        }
        Ok(self.offset + acc)
    }

    /// `log|f|²` at torus node `k`, nudging the node if it hits a zero.
    fn log_abs_sq(&self, s: &GafSample, v: Complex64, r: &[f64], k: usize) -> f64 {
        let m = v.norm_sqr();
        if m > 0.0 && m.is_finite() {
            return m.ln();
        }
        let mut rest = k;
        let mut z = vec![Complex64::new(0.0, 0.0); self.dim];
        for j in (0..self.dim).rev() {
            let a = rest % self.angular[j];
            rest /= self.angular[j];
            let theta = std::f64::consts::TAU * a as f64 / self.angular[j] as f64 + 1e-9;
            z[j] = Complex64::from_polar(r[j] * (1.0 - 1e-12), theta);
        }
        s.evaluate_unchecked(&z).norm_sqr().max(f64::MIN_POSITIVE).ln()
    }
}

/// `I_L(ψ)` through `E + ∫ log|f̂_L|² Dφ dν`, building a one-off plan.
pub fn statistic_stokes(s: &GafSample, psi: &TestForm, opts: StokesOptions, rtol: f64) -> Result<f64> {
    StokesPlan::new(psi, s.intensity(), opts, rtol)?.statistic(s)
}

/// `Σ ψ(a)` over the zeros `a` of an `n = 1` sample inside the support.
pub fn statistic_zeros(s: &GafSample, psi: &TestForm) -> Result<f64> {
    check_dims(1, s.dim())?;
    check_dims(1, psi.dim())?;
    if psi.support()[0] > s.eval_radius()[0] * (1.0 + 1e-12) {
        return Err(Error::OutsideCertifiedRegion { coordinate: 0 });
    }
    let roots = polynomial_roots(s)?;
    Ok(roots
        .iter()
        .filter(|a| a.norm() < psi.support()[0])
        .map(|a| psi.psi_at(std::slice::from_ref(a)))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MoebiusAutomorphism, PseudoHyperbolicPolydisk};
    use crate::sampler::GafSampler;
    use crate::stats::quadrature::DEFAULT_QUAD_RTOL;

    fn lv(v: &[f64]) -> IntensityVector {
        IntensityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dphi_examples() {
        let psi = TestForm::poly_bump(&[0.5]).unwrap();
        let v = dphi(&psi, &PolydiskPoint::origin(1)).unwrap();
        assert!((v + 2.0 / 0.25).abs() < 1e-14);

        let zero = TestForm::custom(vec![0.5], std::sync::Arc::new(|_: &[Complex64]| 0.0), None).unwrap();
        let z = PolydiskPoint::new(vec![Complex64::new(0.2, 0.1)]).unwrap();
        assert_eq!(dphi(&zero, &z).unwrap(), 0.0);
    }

    #[test]
    fn dphi_equals_differences_of_invariant_laplacian() {
        // Dφ is the invariant Laplacian: (1-|z|²)² ∂∂̄ψ computed by a
        // five-point stencil on ψ alone.
        let psi = TestForm::smooth_bump(&[0.6, 0.8]).unwrap();
        let z = PolydiskPoint::new(vec![Complex64::new(0.2, -0.1), Complex64::new(0.1, 0.4)]).unwrap();
        let mut fd = 0.0;
        for j in 0..2 {
            let d = 1.0 - z.coord(j).norm_sqr();
            fd += d * d * psi.mixed_fd(z.coords(), j);
        }
        assert!((dphi(&psi, &z).unwrap() - fd).abs() < 1e-6);
        // 1-D case
        let p1 = TestForm::smooth_bump(&[0.7]).unwrap();
        let z1 = PolydiskPoint::new(vec![Complex64::new(0.3, 0.2)]).unwrap();
        let d = 1.0 - z1.coord(0).norm_sqr();
        assert!((dphi(&p1, &z1).unwrap() - d * d * p1.mixed_fd(z1.coords(), 0)).abs() < 1e-6);
    }

    #[test]
    fn dphi_is_automorphism_invariant() {
        let psi = TestForm::smooth_bump(&[0.5, 0.6]).unwrap();
        let w = PolydiskPoint::new(vec![Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.4)]).unwrap();
        let map = MoebiusAutomorphism::new(w, vec![0.3, 1.1]).unwrap();
        let moved = psi.composed_with(map.clone()).unwrap();
        let z = PolydiskPoint::new(vec![Complex64::new(0.25, 0.2), Complex64::new(-0.1, 0.5)]).unwrap();
        let a = dphi(&moved, &z).unwrap();
        let b = dphi(&psi, &map.apply(&z).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn expected_statistic_examples() {
        let l = lv(&[3.0, 2.0]);
        let ind = TestForm::indicator(&[0.5, 0.3]).unwrap();
        let e = expected_statistic(&ind, &l, DEFAULT_QUAD_RTOL).unwrap();
        let vol = crate::geometry::nu_volume(&PseudoHyperbolicPolydisk::centered_at_origin(vec![0.5, 0.3]).unwrap());
        assert!((e - 5.0 * vol).abs() < 1e-10);
        let psi = TestForm::smooth_bump(&[0.5, 0.7]).unwrap();
        let a = expected_statistic(&psi, &l, DEFAULT_QUAD_RTOL).unwrap();
        let b = expected_statistic(&psi, &l.scaled(2.0).unwrap(), DEFAULT_QUAD_RTOL).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * a);
        // the product shortcut agrees with the generic tensor rule
        let opts = QuadratureOptions { rtol: 1e-6, ..Default::default() };
        let generic = quadrature(|z| psi.psi_at(z), psi.support(), opts).unwrap();
        assert!((a / 5.0 - generic).abs() < 1e-5 * generic);
    }

    #[test]
    fn constant_sample_matches_radial_integral() {
        let l = lv(&[6.0]);
        let psi = TestForm::smooth_bump(&[0.5]).unwrap();
        let plan = StokesPlan::new(&psi, &l, StokesOptions::default_for(1), 1e-12).unwrap();
        let g = psi.product_profiles().unwrap()[0];
        let e = expected_statistic(&psi, &l, 1e-12).unwrap();
        let extra = radial_nu_integral(|s| 6.0 * (1.0 - s).ln() * (1.0 - s).powi(2) * g.mixed(s), 0.25, 1e-12)
            .unwrap();
        assert!((plan.constant_sample_value() - (e + extra)).abs() < 1e-9);
        let mut a = vec![Complex64::new(0.0, 0.0); 11];
        a[0] = Complex64::new(1.0, 0.0);
        let one = GafSample::from_coefficients(&l, &[10], a, &[0.51]).unwrap();
        assert!((plan.statistic(&one).unwrap() - plan.constant_sample_value()).abs() < 1e-12);
    }

    #[test]
    fn single_zero_statistic() {
        let l = lv(&[2.0]);
        let psi = TestForm::smooth_bump(&[0.5]).unwrap();
        let mut poly = vec![Complex64::new(0.0, 0.0); 200];
        let root = Complex64::from_polar(0.3, 0.1234);
        poly[0] = -root;
        poly[1] = Complex64::new(1.0, 0.0);
        let s = GafSample::from_polynomial(&l, &[199], poly, &[0.51]).unwrap();
        let expect = psi.psi(&PolydiskPoint::new(vec![root]).unwrap()).unwrap();
        assert!((statistic_zeros(&s, &psi).unwrap() - expect).abs() < 1e-12);
        let stokes = statistic_stokes(&s, &psi, StokesOptions::default_for(1), 1e-12).unwrap();
        assert!((stokes - expect).abs() < 1e-3, "{stokes} vs {expect}");
    }

    #[test]
    fn routes_agree_on_random_samples() {
        let l = lv(&[10.0]);
        let psi = TestForm::smooth_bump(&[0.5]).unwrap();
        let sampler = GafSampler::certified(&l, &[0.51], 1e-18).unwrap();
        let plan = StokesPlan::new(&psi, &l, StokesOptions::default_for(1), 1e-12).unwrap();
        let mut bad = 0;
        for trial in 0..100 {
            let s = sampler.draw(1, trial);
            let a = statistic_zeros(&s, &psi).unwrap();
            let b = plan.statistic(&s).unwrap();
            if (a - b).abs() > 1e-3 * (1.0 + a.abs()) {
                bad += 1;
            }
        }
        assert!(bad <= 2, "{bad} disagreements");
    }

    #[test]
    fn non_product_plan_matches_product_plan() {
        // A rotation about the origin changes nothing but forces the
        // generic weight layout.
        let l = lv(&[4.0]);
        let psi = TestForm::smooth_bump(&[0.5]).unwrap();
        let rot = MoebiusAutomorphism::new(PolydiskPoint::origin(1), vec![0.7]).unwrap();
        let turned = psi.composed_with(rot).unwrap();
        let opts = StokesOptions { panels: 8, order: 8, angular: 64 };
        let p1 = StokesPlan::new(&psi, &l, opts, 1e-12).unwrap();
        let p2 = StokesPlan::new(&turned, &l, opts, 1e-12).unwrap();
        let sampler = GafSampler::certified(&l, &[0.51], 1e-18).unwrap();
        for trial in 0..5 {
            let s = sampler.draw(2, trial);
            let (a, b) = (p1.statistic(&s).unwrap(), p2.statistic(&s).unwrap());
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
}
