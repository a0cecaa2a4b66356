//! Gauss–Legendre rules and ν-weighted integration over polydisk boxes.
//!
//! Each complex coordinate is parametrised by `s = |z|²` and an angle, so
//! `dν = ∏ ds dα / (2π (1-s)²)`. Radial integrals use composite
//! Gauss–Legendre panels in `s`; angles use the periodic trapezoid rule.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default relative tolerance of the adaptive integrators.
pub const DEFAULT_QUAD_RTOL: f64 = 1e-8;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule: `panels` equal panels of `order` points on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        Self::with_breaks(&linspace(a, b, panels + 1), order)
    }

    /// Panels between consecutive (sorted) breakpoints.
    pub fn with_breaks(breaks: &[f64], order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in breaks.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (hi + lo);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * xi);
                weights.push(half * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `∫_a^b f` by composite Gauss–Legendre, doubling the panel count until
/// two successive estimates agree to `rtol`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> Result<f64> {
    let mut panels = 2;
    let mut prev = CompositeRule::new(a, b, panels, 10).integrate(&f);
    while panels <= 1 << 12 {
        panels *= 2;
        let next = CompositeRule::new(a, b, panels, 10).integrate(&f);
        if (next - prev).abs() <= rtol * next.abs().max(1e-300) || next == prev {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!(
        "adaptive Gauss-Legendre on [{a}, {b}] did not reach rtol {rtol}"
    )))
}

/// `∫_{|z| < √s_max} F(|z|²) dν(z) = ∫_0^{s_max} F(s) ds / (1-s)²`.
pub fn radial_nu_integral(f: impl Fn(f64) -> f64, s_max: f64, rtol: f64) -> Result<f64> {
    integrate_adaptive(|s| f(s) / ((1.0 - s) * (1.0 - s)), 0.0, s_max, rtol)
}

/// Options for [`quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub rtol: f64,
    /// Cap on the number of integrand evaluations of a single level.
    pub max_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_QUAD_RTOL,
            max_nodes: 1 << 24,
        }
    }
}

/// Polar tensor grid over `{|z_j| < radius_j}` carrying ν-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    /// Per-coordinate `(s, weight)` radial nodes; the weight includes
    /// `1/(1-s)²` and the angular factor `1/K_j`.
    pub radial: Vec<CompositeRule>,
    pub angular: Vec<usize>,
}

impl PolarGrid {
    pub fn new(radius: &[f64], panels: usize, order: usize, angular: &[usize]) -> Self {
        let radial = radius
            .iter()
            .zip(angular)
            .map(|(&r, &k)| {
                let mut rule = CompositeRule::new(0.0, (r * r).min(1.0), panels, order);
                for (s, w) in rule.nodes.iter().zip(rule.weights.iter_mut()) {
                    *w /= (1.0 - s) * (1.0 - s) * k as f64;
                }
                rule
            })
            .collect();
        Self {
            radial,
            angular: angular.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.angular.len()
    }

    pub fn len(&self) -> usize {
        self.radial
            .iter()
            .zip(&self.angular)
            .map(|(r, k)| r.len() * k)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visit every node as `(point, weight)`.
    pub fn for_each(&self, mut visit: impl FnMut(&[Complex64], f64)) {
        let n = self.dim();
        let per: Vec<Vec<(Complex64, f64)>> = (0..n)
            .map(|j| {
                let k = self.angular[j];
                let mut v = Vec::with_capacity(self.radial[j].len() * k);
                for (s, w) in self.radial[j].nodes.iter().zip(&self.radial[j].weights) {
                    let r = s.sqrt();
                    for a in 0..k {
                        v.push((Complex64::from_polar(r, TAU * a as f64 / k as f64), *w));
                    }
                }
                v
            })
            .collect();
        let mut idx = vec![0usize; n];
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        loop {
            let mut w = 1.0;
            for j in 0..n {
                let (p, wj) = per[j][idx[j]];
                z[j] = p;
                w *= wj;
            }
            visit(&z, w);
            let mut j = n;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < per[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
}

/// `∫ f dν` over the box `{|z_j| < radius_j}` by tensor polar quadrature,
/// doubling radial panels and angular nodes until two levels agree.
pub fn quadrature(
    f: impl Fn(&[Complex64]) -> f64,
    radius: &[f64],
    opts: QuadratureOptions,
) -> Result<f64> {
    if radius.is_empty() {
        return Err(Error::InvalidParameter("empty quadrature box".into()));
    }
    if let Some(r) = radius.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "quadrature radius must lie in (0, 1], got {r}"
        )));
    }
    let n = radius.len();
    let eval = |panels: usize, k: usize| {
        let grid = PolarGrid::new(radius, panels, 8, &vec![k; n]);
        let mut acc = 0.0;
        grid.for_each(|z, w| acc += w * f(z));
        (acc, grid.len())
    };
    let (mut panels, mut k) = (2usize, 16usize);
    let (mut prev, _) = eval(panels, k);
    loop {
        panels *= 2;
        k *= 2;
        let size = (panels * 8 * k).pow(n as u32);
        if size > opts.max_nodes {
            return Err(Error::NonConvergence(format!(
                "polar quadrature reached {size} nodes without rtol {}",
                opts.rtol
            )));
        }
        let (next, _) = eval(panels, k);
        if (next - prev).abs() <= opts.rtol * next.abs().max(1e-300) || next == prev {
            return Ok(next);
        }
        // Integrals that vanish by symmetry only settle in absolute terms.
        if next.abs() < 1e-14 && prev.abs() < 1e-14 {
            return Ok(next);
        }
        prev = next;
    }
}
