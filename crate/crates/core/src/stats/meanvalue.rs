//! Sub-mean-value property of `log|f̂_L|²` on pseudo-hyperbolic polydisks.
//!
//! In one variable the zeros of `f` inside the recentred disk make
//! `log|f̂|²` singular. Their contribution `∫ log|ζ - a|² dν` has a closed
//! form, so it is taken out analytically and only the smooth remainder goes
//! through the polar quadrature.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, MoebiusAutomorphism, PolydiskPoint, PseudoHyperbolicPolydisk};
use crate::sampler::GafSample;
use crate::zeros1d::polynomial_roots;

use super::quadrature::{quadrature, QuadratureOptions};

/// Slack allowed when comparing the two sides.
pub const MEAN_VALUE_TOL: f64 = 1e-6;

const REMAINDER_RTOL: f64 = 1e-10;

/// `ε(t) = ((1+u) log(1+u) - u)/u` with `u = t²/(1-t²)`.
pub fn epsilon_mean_value(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain {
            value: t,
            domain: "(0, 1)",
        });
    }
    let u = t * t / (1.0 - t * t);
    if u < 1e-2 {
        // Σ_{k≥2} (-1)^k u^{k-1} / (k(k-1))
        let mut acc = 0.0;
        let mut p = 1.0;
        for k in 2..14 {
            p *= if k == 2 { u } else { -u };
            acc += p / (k * (k - 1)) as f64;
        }
        return Ok(acc);
    }
    Ok(((1.0 + u) * u.ln_1p() - u) / u)
}

/// `log|f̂(λ)|²` and the mean over `E(λ, s)` plus `Σ L_j ε(s_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValueSides {
    pub lhs: f64,
    pub rhs: f64,
}

impl MeanValueSides {
    pub fn gap(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.gap() >= -MEAN_VALUE_TOL * (1.0 + self.lhs.abs())
    }
}

/// `∫_0^{s_max} log max(t, b) dt/(1-t)²`.
fn log_max_integral(b: f64, s_max: f64) -> f64 {
    let vol = s_max / (1.0 - s_max);
    if b >= s_max {
        return b.ln() * vol;
    }
    // d/dt [t log t/(1-t) + log(1-t)] = log t/(1-t)²
    let g = |t: f64| {
        if t == 0.0 {
            0.0
        } else {
            t * t.ln() / (1.0 - t) + (-t).ln_1p()
        }
    };
    b.ln() * (b / (1.0 - b)) + g(s_max) - g(b)
}

fn check_region(s: &GafSample, e: &PseudoHyperbolicPolydisk) -> Result<()> {
    for j in 0..e.dim() {
        if e.euclidean_bound(j) > s.eval_radius()[j] * (1.0 + 1e-12) {
            return Err(Error::OutsideCertifiedRegion { coordinate: j });
        }
    }
    Ok(())
}

/// Both sides of the inequality. The left side is a point evaluation; the
/// right side is a quadrature over `E(λ, radii)` in recentred coordinates.
pub fn mean_value_sides(s: &GafSample, lambda: &PolydiskPoint, radii: &[f64]) -> Result<MeanValueSides> {
    check_dims(s.dim(), lambda.dim())?;
    let e = PseudoHyperbolicPolydisk::new(lambda.clone(), radii.to_vec())?;
    check_region(s, &e)?;
    let lhs = s.log_normalized_sq(lambda)?;
    if lhs == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(
            "f vanishes at the centre of the region".into(),
        ));
    }
    let map = MoebiusAutomorphism::centered_at(lambda.clone());
    let l = s.intensity();
    let mut correction = 0.0;
    for (j, r) in radii.iter().enumerate() {
        correction += l.get(j) * epsilon_mean_value(*r)?;
    }
    let vol: f64 = radii.iter().map(|r| r * r / (1.0 - r * r)).product();
    let opts = QuadratureOptions {
        rtol: REMAINDER_RTOL,
        ..Default::default()
    };
    let pulled = |zeta: &[Complex64], buf: &mut Vec<Complex64>| {
        buf.clear();
        buf.extend(zeta.iter().enumerate().map(|(j, z)| map.apply_inverse_coord(j, *z)));
    };

    let integral = if s.dim() == 1 {
        let r = radii[0];
        let reach = 0.5 * (1.0 + r);
        let zeros: Vec<Complex64> = polynomial_roots(s)?
            .into_iter()
            .map(|z| map.apply_coord(0, z))
            .filter(|a| a.norm() < reach)
            .collect();
        let singular: f64 = zeros.iter().map(|a| log_max_integral(a.norm_sqr(), r * r)).sum();
        let remainder = quadrature(
            |zeta| {
                let mut w = Vec::with_capacity(1);
                pulled(zeta, &mut w);
                let f = s.evaluate_unchecked(&w);
                s.log_normalized_from_value(f, &w)
                    - zeros.iter().map(|a| (zeta[0] - a).norm_sqr().ln()).sum::<f64>()
            },
            radii,
            opts,
        )?;
        remainder + singular
    } else {
        // No subtraction in several variables: the zero set is a
        // hypersurface and the log singularity is left to the quadrature.
        quadrature(
            |zeta| {
                let mut w = Vec::with_capacity(zeta.len());
                pulled(zeta, &mut w);
                let f = s.evaluate_unchecked(&w);
                s.log_normalized_from_value(f, &w)
            },
            radii,
            QuadratureOptions {
                rtol: MEAN_VALUE_TOL,
                ..Default::default()
            },
        )?
    };
    Ok(MeanValueSides {
        lhs,
        rhs: integral / vol + correction,
    })
}

/// Whether `log|f̂(λ)|² ≤ mean_{E(λ,s)} log|f̂|² + Σ L_j ε(s_j)` holds up to
/// [`MEAN_VALUE_TOL`].
pub fn mean_value_inequality_check(s: &GafSample, lambda: &PolydiskPoint, radii: &[f64]) -> Result<bool> {
    Ok(mean_value_sides(s, lambda, radii)?.holds())
}
