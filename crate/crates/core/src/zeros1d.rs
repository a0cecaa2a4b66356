//! Zeros of one-variable truncated GAFs: all roots by Aberth–Ehrlich
//! iteration, zero counts by the argument principle, and hole decisions
//! guarded against truncation error.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sampler::GafSample;

/// Safety factor on `sqrt(tail_variance_bound)` in the hole guard.
pub const DEFAULT_KAPPA: f64 = 10.0;
/// Largest number of contour nodes tried by [`count_zeros_in_disk`].
pub const MAX_CONTOUR_NODES: usize = 1 << 16;
/// Backward-error bound every returned root must satisfy.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-8;

const INITIAL_CONTOUR_NODES: usize = 64;
const CONTOUR_CLEARANCE: f64 = 1e-9;
const CONTOUR_SHIFT: f64 = 1e-6;
const CONTOUR_RETRIES: usize = 3;
const ABERTH_MAX_ITER: usize = 500;

/// Outcome of [`hole_test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HoleOutcome {
    Hole,
    NoHole,
    Uncertain,
}

/// Relative backward error `|p(z)| / Σ |p_k| |z|^k`, computed on the
/// reversed polynomial outside the unit circle so nothing overflows.
pub fn relative_residual(coeffs: &[Complex64], z: Complex64) -> f64 {
    let (value, scale) = if z.norm() <= 1.0 {
        let mut v = Complex64::new(0.0, 0.0);
        let mut s = 0.0;
        let a = z.norm();
        for c in coeffs.iter().rev() {
            v = v * z + c;
            s = s * a + c.norm();
        }
        (v.norm(), s)
    } else {
        let w = z.inv();
        let a = w.norm();
        let mut v = Complex64::new(0.0, 0.0);
        let mut s = 0.0;
        for c in coeffs {
            v = v * w + c;
            s = s * a + c.norm();
        }
        (v.norm(), s)
    };
    if scale == 0.0 {
        0.0
    } else {
        value / scale
    }
}

/// Newton correction `p(z)/p'(z)`, evaluated through `z^m p̃(1/z)` when
/// `|z| > 1`.
fn newton_ratio(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let m = coeffs.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = coeffs[m];
        let mut dp = Complex64::new(0.0, 0.0);
        for c in coeffs[..m].iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        p / dp
    } else {
        let w = z.inv();
        let mut q = coeffs[0];
        let mut dq = Complex64::new(0.0, 0.0);
        for c in &coeffs[1..] {
            dq = dq * w + q;
            q = q * w + c;
        }
        // p'/p = m/z - w² q'(w)/q(w)
        let logder = m as f64 * w - w * w * dq / q;
        logder.inv()
    }
}

/// Starting points on circles whose radii come from the upper convex hull
/// of `(k, log|p_k|)`.
fn initial_guesses(coeffs: &[Complex64]) -> Vec<Complex64> {
    let m = coeffs.len() - 1;
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (k, c.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 as f64 - a.0 as f64) * (p.1 - a.1) - (b.1 - a.1) * (p.0 as f64 - a.0 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(m);
    for seg in hull.windows(2) {
        let (i, li) = seg[0];
        let (j, lj) = seg[1];
        let count = j - i;
        let radius = ((li - lj) / count as f64).exp();
        for q in 0..count {
            let angle = TAU * q as f64 / count as f64 + TAU * i as f64 / m as f64 + 0.4;
            out.push(Complex64::from_polar(radius, angle));
        }
    }
    out
}

/// All roots of `Σ p_k z^k` (lowest degree first). Exact zero coefficients
/// at either end are split off first.
pub fn roots_of(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    let top = match coeffs.iter().rposition(|c| *c != zero) {
        Some(t) => t,
        None => return Err(Error::DegeneratePolynomial),
    };
    let low = coeffs.iter().position(|c| *c != zero).unwrap_or(0);
    let mut roots = vec![zero; low];
    let poly = &coeffs[low..=top];
    let m = poly.len() - 1;
    if m == 0 {
        return Ok(roots);
    }
    if m == 1 {
        roots.push(-poly[0] / poly[1]);
        return Ok(roots);
    }
    let mut z = initial_guesses(poly);
    let mut done = vec![false; m];
    for _ in 0..ABERTH_MAX_ITER {
        let mut all_done = true;
        for i in 0..m {
            if done[i] {
                continue;
            }
            let ratio = newton_ratio(poly, z[i]);
            let repulsion: Complex64 = (0..m)
                .filter(|&k| k != i)
                .map(|k| (z[i] - z[k]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
            }
            if !step.is_finite() || step.norm() <= 4.0 * f64::EPSILON * z[i].norm() {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    for &r in &z {
        let res = relative_residual(poly, r);
        if !(res <= ROOT_RESIDUAL_TOL) {
            return Err(Error::NonConvergence(format!(
                "root {r} has relative residual {res:e}"
            )));
        }
    }
    roots.extend(z);
    Ok(roots)
}

/// All roots of an `n = 1` truncated sample.
pub fn polynomial_roots(s: &GafSample) -> Result<Vec<Complex64>> {
    roots_of(s.univariate_polynomial()?)
}

/// Winding number of `f` on `|z| = radius` together with the smallest
/// `|f|` seen on the final contour grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourCount {
    pub count: usize,
    pub radius: f64,
    pub min_modulus: f64,
    pub nodes: usize,
}

fn winding_at(s: &GafSample, radius: f64) -> Result<Option<ContourCount>> {
    let mut nodes = INITIAL_CONTOUR_NODES;
    let mut previous: Option<f64> = None;
    while nodes <= MAX_CONTOUR_NODES {
        let (f, zf) = s.evaluate_on_circle_with_derivative(radius, nodes)?;
        let mut min_modulus = f64::INFINITY;
        let mut max_deriv: f64 = 0.0;
        let mut sum = 0.0;
        let mut phase = 0.0;
        // Angular step times |z f'| bounds how far f moves between nodes.
        let step = TAU / nodes as f64;
        let mut resolved = true;
        for k in 0..nodes {
            let (fv, zfv) = (f[k], zf[k]);
            let next = (k + 1) % nodes;
            min_modulus = min_modulus.min(fv.norm());
            max_deriv = max_deriv.max(zfv.norm());
            sum += (zfv / fv).re;
            phase += (f[next] / fv).arg();
            let drift = step * zfv.norm().max(zf[next].norm());
            if fv.norm() <= 2.0 * drift {
                resolved = false;
            }
        }
        // A zero this close to the contour makes the count ill-posed.
        if min_modulus <= CONTOUR_CLEARANCE * max_deriv || !sum.is_finite() {
            return Ok(None);
        }
        let value = sum / nodes as f64;
        let winding = (phase / TAU).round();
        if let Some(prev) = previous {
            if resolved
                && winding >= 0.0
                && (prev - winding).abs() < 0.25
                && (value - winding).abs() < 0.25
            {
                return Ok(Some(ContourCount {
                    count: winding as usize,
                    radius,
                    min_modulus,
                    nodes,
                }));
            }
        }
        previous = Some(value);
        nodes *= 2;
    }
    Ok(None)
}

/// Argument-principle count with the contour detail; the radius is nudged
/// by `±1e-6` up to three times when a zero sits on the contour.
pub fn count_zeros_on_contour(s: &GafSample, radius: f64) -> Result<ContourCount> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "contour radius must be positive, got {radius}"
        )));
    }
    let shifts = [0.0, CONTOUR_SHIFT, -CONTOUR_SHIFT, 2.0 * CONTOUR_SHIFT];
    for shift in shifts.iter().take(CONTOUR_RETRIES + 1) {
        if let Some(c) = winding_at(s, radius + shift)? {
            return Ok(c);
        }
    }
    Err(Error::NonConvergence(format!(
        "argument principle on |z| = {radius} did not settle"
    )))
}

/// Number of zeros of the truncated sample inside `|z| < radius`.
pub fn count_zeros_in_disk(s: &GafSample, radius: f64) -> Result<usize> {
    Ok(count_zeros_on_contour(s, radius)?.count)
}

/// Whether the disk `|z| < r` is free of zeros. A verdict is only issued
/// when `min |f|` on the contour exceeds `kappa · sqrt(tail variance)`.
pub fn hole_test(s: &GafSample, r: f64, kappa: f64) -> Result<HoleOutcome> {
    let c = count_zeros_on_contour(s, r)?;
    let guard = kappa * s.tail_variance_bound().sqrt();
    Ok(if c.min_modulus <= guard {
        HoleOutcome::Uncertain
    } else if c.count == 0 {
        HoleOutcome::Hole
    } else {
        HoleOutcome::NoHole
    })
}
