//! Variance of linear statistics: the leading asymptotic term
//! `ζ(n+2)/∏L_j · ∫ (Dφ)² dν` and the exact double integral
//! `∬ ρ_L(z,w) Dφ(z) Dφ(w) dν(z) dν(w)`.
//!
//! The double integral is computed after recentring the inner variable,
//! `w = φ_z⁻¹(ζ)`, so the kernel depends on `t = |ζ_j|²` only. With
//! `x_j = (1-t_j)^{L_j}` the inner weight `(1-t)^{λ-2} dt` becomes
//! `e^{-v} dv/(λ-1)` under `v = -(λ-1) log(1-t)`, which follows the `1/L`
//! concentration of the kernel without extra nodes.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, IntensityVector};
use crate::kernel::dilog_unchecked;

use super::linear::dphi_at;
use super::quadrature::{quadrature, radial_nu_integral, CompositeRule, QuadratureOptions};
use super::testform::{RadialProfile, TestForm};

/// `ζ(s) = Σ_{m≥1} m^{-s}` for integer `s ≥ 2`.
pub fn zeta_constant(s: u32) -> Result<f64> {
    if s < 2 {
        return Err(Error::Domain {
            value: s as f64,
            domain: "integers >= 2",
        });
    }
    let sf = s as f64;
    let n = 100u32;
    let nf = n as f64;
    // Euler–Maclaurin for Σ_{m≥N}.
    let tail = nf.powf(1.0 - sf) / (sf - 1.0) + 0.5 * nf.powf(-sf) + sf * nf.powf(-sf - 1.0) / 12.0
        - sf * (sf + 1.0) * (sf + 2.0) * nf.powf(-sf - 3.0) / 720.0
        + sf * (sf + 1.0) * (sf + 2.0) * (sf + 3.0) * (sf + 4.0) * nf.powf(-sf - 5.0) / 30240.0;
    let head: f64 = (1..n).rev().map(|m| (m as f64).powf(-sf)).sum();
    Ok(head + tail)
}

fn one_d_pieces(g: &RadialProfile) -> [Box<dyn Fn(f64) -> f64 + '_>; 2] {
    [
        Box::new(move |s: f64| (1.0 - s) * (1.0 - s) * g.mixed(s)),
        Box::new(move |s: f64| g.value(s)),
    ]
}

/// `∫ (Dφ)² dν`.
pub fn dphi_energy(psi: &TestForm, rtol: f64) -> Result<f64> {
    if !psi.is_smooth() {
        return Err(Error::InvalidParameter("test form must be smooth".into()));
    }
    if let Some(profiles) = psi.product_profiles() {
        // Dφ = Σ_a A_a ∏_{k≠a} B_k, so ∫(Dφ)² factorises term by term.
        let n = profiles.len();
        let mut gram = Vec::with_capacity(n);
        for g in profiles {
            let f = one_d_pieces(g);
            let r2 = g.radius() * g.radius();
            let mut m = [[0.0; 2]; 2];
            for x in 0..2 {
                for y in x..2 {
                    let v = radial_nu_integral(|s| f[x](s) * f[y](s), r2, rtol)?;
                    m[x][y] = v;
                    m[y][x] = v;
                }
            }
            gram.push(m);
        }
        let mut total = 0.0;
        for a in 0..n {
            for b in 0..n {
                total += (0..n)
                    .map(|k| gram[k][usize::from(k != a)][usize::from(k != b)])
                    .product::<f64>();
            }
        }
        return Ok(total);
    }
    quadrature(
        |z| dphi_at(psi, z).powi(2),
        psi.support(),
        QuadratureOptions {
            rtol,
            ..Default::default()
        },
    )
}

/// Leading term of the variance asymptotics.
pub fn predicted_variance(psi: &TestForm, l: &IntensityVector, rtol: f64) -> Result<f64> {
    check_dims(psi.dim(), l.dim())?;
    let zeta = zeta_constant(psi.dim() as u32 + 2)?;
    Ok(zeta / l.product() * dphi_energy(psi, rtol)?)
}

/// How the double integral is organised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BipotentialRoute {
    /// Tensor quadrature of `Li₂(|θ|²) Dφ Dφ` after recentring.
    Direct,
    /// `Li₂(∏x_j) = Σ_m ∏ x_j^m / m²` splits into one-variable pair
    /// integrals; product forms only.
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BipotentialOptions {
    /// Relative change between refinement levels that counts as converged.
    pub rtol: f64,
    /// Number of refinement levels tried before giving up.
    pub max_level: usize,
    /// Dilogarithm terms summed exactly by the series route.
    pub series_terms: usize,
    /// Coarsest grid: panels per radial variable and angular nodes.
    pub base_panels: usize,
    pub base_angular: usize,
}

impl Default for BipotentialOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            max_level: 4,
            series_terms: 12,
            base_panels: 4,
            base_angular: 32,
        }
    }
}

const ORDER: usize = 8;

/// Dyadic panels packed toward `t = 0`, where `Li₂((1-t)^L)` has a
/// `t log t` term. In several variables the singular set shrinks to a
/// point and fewer are needed.
fn graded_panels(n: usize) -> usize {
    if n == 1 {
        20
    } else {
        6
    }
}

/// Beyond `v = 45` the weight `e^{-v}` is below `3e-20`.
const V_CUTOFF: f64 = 45.0;

/// Nodes `t` and weights `w` with `Σ w h(t) ≈ ∫_0^{t_max} (1-t)^{λ-2} h(t) dt`.
fn inner_rule(lambda: f64, t_max: f64, panels: usize, graded: usize) -> (Vec<f64>, Vec<f64>) {
    let breaks_on = |end: f64| -> Vec<f64> {
        let mut b: Vec<f64> = (0..=panels).map(|i| end * i as f64 / panels as f64).collect();
        if graded > 0 {
            let first = b[1];
            let mut g: Vec<f64> = (1..=graded)
                .rev()
                .map(|k| first * 0.5f64.powi(k as i32))
                .collect();
            g.insert(0, 0.0);
            b.splice(0..1, g);
        }
        b
    };
    if lambda > 1.5 {
        // v = -(λ-1) log(1-t) turns the weight into e^{-v} dv/(λ-1).
        let p = lambda - 1.0;
        let v_max = (-p * (-t_max).ln_1p()).min(V_CUTOFF);
        let rule = CompositeRule::with_breaks(&breaks_on(v_max), ORDER);
        let t = rule.nodes.iter().map(|v| -(-v / p).exp_m1()).collect();
        let w = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(v, w)| w * (-v).exp() / p)
            .collect();
        (t, w)
    } else {
        let rule = CompositeRule::with_breaks(&breaks_on(t_max), ORDER);
        let w = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(t, w)| w * (1.0 - t).powf(lambda - 2.0))
            .collect();
        (rule.nodes, w)
    }
}

/// Square of the largest modulus of `ζ = φ_z(w)` with `|w| < b`.
fn recentred_reach(z_abs: f64, b: f64) -> f64 {
    let r = (z_abs + b) / (1.0 + z_abs * b);
    (r * r).min(1.0 - 1e-15)
}

/// Angular rule for the circle `|ζ|² = t`, restricted to the arc whose
/// image `φ_z⁻¹(ζ)` lands in `|w| < b`. Pushes `(e^{iα}, weight)` with the
/// weights summing to the arc's share of the full turn.
fn circle_rule(z: Complex64, t: f64, b: f64, angular: usize, out: &mut Vec<(Complex64, f64)>) {
    out.clear();
    let za = z.norm();
    // |ζ+z|² < b²|1+z̄ζ|²  ⇔  cos(α - arg z) < c
    let lhs = b * b * (1.0 + za * za * t) - t - za * za;
    let denom = 2.0 * za * t.sqrt() * (1.0 - b * b);
    let c = if denom > 0.0 {
        lhs / denom
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    if c >= 1.0 {
        for a in 0..angular {
            out.push((
                Complex64::from_polar(1.0, TAU * a as f64 / angular as f64),
                1.0 / angular as f64,
            ));
        }
        return;
    }
    if c <= -1.0 {
        return;
    }
    let half = PI - c.acos();
    let centre = z.arg() + PI;
    let rule = CompositeRule::new(centre - half, centre + half, (angular / ORDER).max(1), ORDER);
    for (a, w) in rule.nodes.iter().zip(&rule.weights) {
        out.push((Complex64::from_polar(1.0, *a), w / TAU));
    }
}

/// Outer nodes `(z, weight)`; only radii are needed for product forms.
fn outer_nodes(psi: &TestForm, panels: usize, angular: usize) -> Result<Vec<(Vec<Complex64>, f64)>> {
    let n = psi.dim();
    let radial = psi.product_profiles().is_some();
    if !radial && n > 1 {
        return Err(Error::InvalidParameter(
            "the double integral in several variables needs a product test form".into(),
        ));
    }
    let rules: Vec<CompositeRule> = psi
        .support()
        .iter()
        .map(|&b| CompositeRule::new(0.0, b * b, panels, ORDER))
        .collect();
    let mut out = Vec::new();
    if radial {
        let mut idx = vec![0usize; n];
        'outer: loop {
            let mut w = 1.0;
            let mut z = Vec::with_capacity(n);
            for j in 0..n {
                let s = rules[j].nodes[idx[j]];
                w *= rules[j].weights[idx[j]] / ((1.0 - s) * (1.0 - s));
                z.push(Complex64::new(s.sqrt(), 0.0));
            }
            out.push((z, w));
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
    } else {
        for (s, ws) in rules[0].nodes.iter().zip(&rules[0].weights) {
            let w = ws / ((1.0 - s) * (1.0 - s) * angular as f64);
            for a in 0..angular {
                let d = Complex64::from_polar(s.sqrt(), TAU * a as f64 / angular as f64);
                out.push((vec![d], w));
            }
        }
    }
    Ok(out)
}

/// Inner nodes of one coordinate: `(w, weight, log(1-t))`.
fn inner_nodes(
    z: Complex64,
    b: f64,
    lambda: f64,
    panels: usize,
    angular: usize,
    graded: usize,
) -> Vec<(Complex64, f64, f64)> {
    let (ts, tw) = inner_rule(lambda, recentred_reach(z.norm(), b), panels, graded);
    let mut arc = Vec::new();
    let mut out = Vec::new();
    let one = Complex64::new(1.0, 0.0);
    for (t, wt) in ts.iter().zip(&tw) {
        circle_rule(z, *t, b, angular, &mut arc);
        let rt = t.sqrt();
        let log1mt = (-t).ln_1p();
        for (d, wa) in &arc {
            let zeta = d * rt;
            out.push(((zeta + z) / (one + z.conj() * zeta), wt * wa, log1mt));
        }
    }
    out
}

fn direct_level(psi: &TestForm, l: &IntensityVector, panels: usize, angular: usize) -> Result<f64> {
    let n = psi.dim();
    let mut total = 0.0;
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    for (z, wz) in outer_nodes(psi, panels, angular)? {
        let d0 = dphi_at(psi, &z);
        if d0 == 0.0 {
            continue;
        }
        let per: Vec<Vec<(Complex64, f64, f64)>> = (0..n)
            .map(|j| inner_nodes(z[j], psi.support()[j], l.get(j), panels, angular, graded_panels(n)))
            .collect();
        if per.iter().any(|p| p.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; n];
        let mut inner = 0.0;
        'inner: loop {
            let mut weight = 1.0;
            let mut log_x = 0.0;
            for j in 0..n {
                let (wj, wt, log1mt) = per[j][idx[j]];
                w[j] = wj;
                weight *= wt;
                log_x += l.get(j) * log1mt;
            }
            let d = dphi_at(psi, &w);
            if d != 0.0 {
                let x = log_x.exp();
                let ratio = if x > 0.0 { dilog_unchecked(x) / x } else { 1.0 };
                inner += weight * ratio * d;
            }
            let mut j = n;
            loop {
                if j == 0 {
                    break 'inner;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < per[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        total += wz * d0 * inner;
    }
    Ok(total)
}

/// `M[x][y] = ∫ dν(z) X_x(|z|²) ∫ dν(ζ) (1-t)^λ Y_y(|φ_z⁻¹(ζ)|²)` for the
/// pieces `(1-s)² g_zz̄` (index 0) and `g` (index 1) of one profile.
fn pair_matrix(g: &RadialProfile, lambda: f64, panels: usize, angular: usize) -> [[f64; 2]; 2] {
    // The mixed-derivative piece is steep along the recentred radius.
    pair_matrix_with(g, lambda, panels, 4 * panels, angular)
}

fn pair_matrix_with(g: &RadialProfile, lambda: f64, opanels: usize, panels: usize, angular: usize) -> [[f64; 2]; 2] {
    let b = g.radius();
    let pieces = one_d_pieces(g);
    let outer = CompositeRule::new(0.0, b * b, opanels, ORDER);
    let mut m = [[0.0; 2]; 2];
    for (s, ws) in outer.nodes.iter().zip(&outer.weights) {
        let wz = ws / ((1.0 - s) * (1.0 - s));
        let mut inner = [0.0; 2];
        for (w, wt, _) in inner_nodes(Complex64::new(s.sqrt(), 0.0), b, lambda, panels, angular, 0) {
            let sw = w.norm_sqr();
            inner[0] += wt * pieces[0](sw);
            inner[1] += wt * pieces[1](sw);
        }
        let outer_vals = [pieces[0](*s), pieces[1](*s)];
        for x in 0..2 {
            for y in 0..2 {
                m[x][y] += wz * outer_vals[x] * inner[y];
            }
        }
    }
    m
}

fn series_level(
    profiles: &[RadialProfile],
    l: &IntensityVector,
    terms: usize,
    panels: usize,
    angular: usize,
) -> f64 {
    let n = profiles.len();
    let terms = terms.max(4);
    let mats: Vec<Vec<[[f64; 2]; 2]>> = (1..=terms)
        .map(|m| {
            (0..n)
                .map(|k| pair_matrix(&profiles[k], m as f64 * l.get(k), panels, angular))
                .collect()
        })
        .collect();
    let combine = |per: &dyn Fn(usize, usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += (0..n)
                    .map(|k| per(k, usize::from(k != a), usize::from(k != b)))
                    .product::<f64>();
            }
        }
        acc
    };
    let mut total = 0.0;
    for (mi, mat) in mats.iter().enumerate() {
        let m = (mi + 1) as f64;
        total += combine(&|k, x, y| mat[k][x][y]) / (m * m);
    }
    // Tail: each entry behaves like c1/(λ-1) + c2/(λ-1)² for large λ.
    let fits: Vec<[[(f64, f64); 2]; 2]> = (0..n)
        .map(|k| {
            let (m1, m2) = ((terms - 1) as f64, terms as f64);
            let (a1, a2) = (1.0 / (m1 * l.get(k) - 1.0), 1.0 / (m2 * l.get(k) - 1.0));
            let mut f = [[(0.0, 0.0); 2]; 2];
            for x in 0..2 {
                for y in 0..2 {
                    let (v1, v2) = (mats[terms - 2][k][x][y], mats[terms - 1][k][x][y]);
                    // v = c1 a + c2 a²
                    let det = a1 * a2 * a2 - a2 * a1 * a1;
                    let c1 = (v1 * a2 * a2 - v2 * a1 * a1) / det;
                    let c2 = (a1 * v2 - a2 * v1) / det;
                    f[x][y] = (c1, c2);
                }
            }
            f
        })
        .collect();
    let mut m = terms + 1;
    loop {
        let mf = m as f64;
        let term = combine(&|k, x, y| {
            let a = 1.0 / (mf * l.get(k) - 1.0);
            let (c1, c2) = fits[k][x][y];
            c1 * a + c2 * a * a
        }) / (mf * mf);
        total += term;
        if term.abs() <= 1e-17 * total.abs() || m > 10_000_000 {
            break;
        }
        m += 1;
    }
    total
}

pub(crate) fn level_value(
    psi: &TestForm,
    l: &IntensityVector,
    route: BipotentialRoute,
    opts: &BipotentialOptions,
    level: usize,
) -> Result<f64> {
    let panels = opts.base_panels << level;
    let angular = opts.base_angular << level;
    match route {
        BipotentialRoute::Direct => direct_level(psi, l, panels, angular),
        BipotentialRoute::Series => match psi.product_profiles() {
            Some(p) => Ok(series_level(p, l, opts.series_terms, panels, angular)),
            None => Err(Error::InvalidParameter(
                "the series route needs a product test form".into(),
            )),
        },
    }
}

/// `∬ ρ_L Dφ Dφ dν dν` by the given route, refining until two levels agree.
pub fn bipotential_variance_with(
    psi: &TestForm,
    l: &IntensityVector,
    route: BipotentialRoute,
    opts: BipotentialOptions,
) -> Result<f64> {
    check_dims(psi.dim(), l.dim())?;
    if !psi.is_smooth() {
        return Err(Error::InvalidParameter("test form must be smooth".into()));
    }
    let level_value = |level: usize| level_value(psi, l, route, &opts, level);
    let mut prev = level_value(0)?;
    for level in 1..=opts.max_level {
        let next = level_value(level)?;
        if (next - prev).abs() <= opts.rtol * next.abs() || next == prev {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!(
        "double integral did not settle to rtol {} within {} refinements",
        opts.rtol, opts.max_level
    )))
}

/// Exact variance of `I_L(ψ)`: the direct route in one variable, the
/// series route for product forms in several.
pub fn bipotential_variance(psi: &TestForm, l: &IntensityVector, opts: BipotentialOptions) -> Result<f64> {
    // ρ_L, ν and D all commute with automorphisms.
    let psi = psi.automorphism_base();
    let route = if psi.dim() == 1 {
        BipotentialRoute::Direct
    } else {
        BipotentialRoute::Series
    };
    bipotential_variance_with(psi, l, route, opts)
}
