//! Truncated GAF realisations with a certified tail variance.
//!
//! `f_L(z) = Σ_α a_α c_α z^α` with `c_α² = ∏_j Γ(L_j+α_j)/(α_j! Γ(L_j))` and
//! i.i.d. `a_α ~ N_ℂ(0,1)`. The series is truncated to a box `α ≤ M` chosen
//! so that the discarded variance at the evaluation radius is below a
//! tolerance.

use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fft::inverse_dft_nd;
use crate::geometry::{check_dims, IntensityVector, PolydiskPoint};
use crate::rng::{multi_index_code, CounterRng};

/// Hard cap on any per-coordinate truncation degree.
pub const DEFAULT_DEGREE_CAP: usize = 5000;
/// Default tail-variance tolerance at the evaluation radius.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-18;
/// Tighter tolerance used by hole experiments.
pub const HOLE_TRUNCATION_TOL: f64 = 1e-24;
/// Margin added to the largest radius an experiment evaluates at.
pub const EVAL_RADIUS_MARGIN: f64 = 0.01;

const UNDERFLOW_LOG: f64 = -745.0;

/// `log c_α² = Σ_j [log Γ(L_j+α_j) - log Γ(α_j+1) - log Γ(L_j)]`.
pub fn basis_logsq(alpha: &[usize], l: &IntensityVector) -> Result<f64> {
    check_dims(l.dim(), alpha.len())?;
    Ok(alpha
        .iter()
        .zip(l.values())
        .map(|(&a, &lj)| {
            if a == 0 {
                0.0
            } else {
                ln_gamma(lj + a as f64) - ln_gamma(a as f64 + 1.0) - ln_gamma(lj)
            }
        })
        .sum())
}

fn logsq_1d(lj: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..degree {
        let kf = k as f64;
        acc += ((lj + kf) / (kf + 1.0)).ln();
        out.push(acc);
    }
    out
}

/// `log c_α²` over a truncation box, stored per coordinate since the
/// coefficients factor.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisCoefficientTable {
    l: IntensityVector,
    degrees: Vec<usize>,
    logsq: Vec<Vec<f64>>,
}

impl BasisCoefficientTable {
    pub fn new(l: &IntensityVector, degrees: &[usize]) -> Result<Self> {
        check_dims(l.dim(), degrees.len())?;
        let logsq = degrees
            .iter()
            .zip(l.values())
            .map(|(&m, &lj)| logsq_1d(lj, m))
            .collect();
        Ok(Self {
            l: l.clone(),
            degrees: degrees.to_vec(),
            logsq,
        })
    }

    pub fn intensity(&self) -> &IntensityVector {
        &self.l
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Number of multi-indices in the box.
    pub fn len(&self) -> usize {
        self.degrees.iter().map(|m| m + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn logsq(&self, alpha: &[usize]) -> f64 {
        alpha
            .iter()
            .enumerate()
            .map(|(j, &a)| self.logsq[j][a])
            .sum()
    }

    pub fn coordinate_logsq(&self, j: usize) -> &[f64] {
        &self.logsq[j]
    }

    /// `c_α` in linear scale, zero when `c_α²` underflows.
    pub fn coefficient(&self, alpha: &[usize]) -> f64 {
        let ls = self.logsq(alpha);
        if ls < UNDERFLOW_LOG {
            0.0
        } else {
            (0.5 * ls).exp()
        }
    }

    /// Multi-index of a row-major flat position (last coordinate fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut alpha = vec![0; self.degrees.len()];
        for j in (0..self.degrees.len()).rev() {
            let size = self.degrees[j] + 1;
            alpha[j] = flat % size;
            flat /= size;
        }
        alpha
    }
}

/// Per-coordinate terms `c_k² r^{2k}` up to `k_max` inclusive.
fn variance_terms(lj: f64, r: f64, k_max: usize) -> Vec<f64> {
    let lr = (r * r).ln();
    let mut out = Vec::with_capacity(k_max + 1);
    let mut acc = 0.0;
    out.push(1.0);
    for k in 0..k_max {
        let kf = k as f64;
        acc += ((lj + kf) / (kf + 1.0)).ln() + lr;
        out.push(acc.exp());
    }
    out
}

/// Tail `Σ_{k>M} c_k² r^{2k}` for a single coordinate, summed directly so it
/// keeps relative accuracy far below machine epsilon of `K_L(r,r)`.
fn tail_1d(lj: f64, r: f64, m: usize) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let lr = (r * r).ln();
    // log of the (m+1)-th term
    let mut log_term = logsq_1d_at(lj, m + 1) + (m as f64 + 1.0) * lr;
    let mut k = m + 1;
    let mut sum = 0.0;
    loop {
        let t = log_term.exp();
        sum += t;
        let kf = k as f64;
        let ratio = (lj + kf) / (kf + 1.0) * r * r;
        // Past the peak the remainder is bounded by a geometric series.
        if ratio < 1.0 && t * ratio / (1.0 - ratio) <= 1e-17 * sum {
            return sum;
        }
        if t == 0.0 && ratio < 1.0 {
            return sum;
        }
        log_term += ratio.ln();
        k += 1;
    }
}

fn logsq_1d_at(lj: f64, k: usize) -> f64 {
    // Recurrence keeps consecutive differences exact to rounding.
    (0..k)
        .map(|i| {
            let f = i as f64;
            ((lj + f) / (f + 1.0)).ln()
        })
        .sum()
}

/// `(1 - r²)^{-L}` for one coordinate.
fn diagonal_1d(lj: f64, r: f64) -> f64 {
    (-lj * (1.0 - r * r).ln()).exp()
}

fn partial_1d(lj: f64, r: f64, m: usize) -> f64 {
    // Summed from the small end of the geometric tail for stability.
    variance_terms(lj, r, m).iter().rev().sum()
}

/// Exact discarded variance `K_L(r,r) - Σ_{α≤M} c_α² r^{2α}` for a box,
/// written as a telescoping sum of per-coordinate tails.
pub fn tail_variance(l: &IntensityVector, radius: &[f64], degrees: &[usize]) -> Result<f64> {
    check_dims(l.dim(), radius.len())?;
    check_dims(l.dim(), degrees.len())?;
    let n = l.dim();
    let mut total = 0.0;
    for j in 0..n {
        let mut term = tail_1d(l.get(j), radius[j], degrees[j]);
        for k in 0..n {
            if k < j {
                term *= partial_1d(l.get(k), radius[k], degrees[k]);
            } else if k > j {
                term *= diagonal_1d(l.get(k), radius[k]);
            }
        }
        total += term;
    }
    Ok(total)
}

/// Smallest per-coordinate degrees whose discarded variance at `radius` is at
/// most `tol`. Each coordinate gets the budget `tol / (n ∏_{k≠j} K_k)`.
pub fn truncation_degree(
    l: &IntensityVector,
    radius: &[f64],
    tol: f64,
    cap: usize,
) -> Result<Vec<usize>> {
    check_dims(l.dim(), radius.len())?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if let Some(r) = radius.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(Error::InvalidParameter(format!("radius must lie in [0,1), got {r}")));
    }
    let n = l.dim();
    let diag: Vec<f64> = (0..n).map(|j| diagonal_1d(l.get(j), radius[j])).collect();
    let mut degrees = Vec::with_capacity(n);
    for j in 0..n {
        let others: f64 = (0..n).filter(|&k| k != j).map(|k| diag[k]).product();
        let budget = tol / (n as f64 * others);
        let (lj, r) = (l.get(j), radius[j]);
        if r == 0.0 {
            degrees.push(0);
            continue;
        }
        // The tail is decreasing in M: bracket by doubling, then bisect.
        if tail_1d(lj, r, 0) <= budget {
            degrees.push(0);
            continue;
        }
        let mut hi = 1usize;
        while tail_1d(lj, r, hi) > budget {
            if hi >= cap {
                return Err(Error::TruncationCap { coordinate: j, cap });
            }
            hi = (hi * 2).min(cap);
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if tail_1d(lj, r, mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = hi;
        degrees.push(m);
    }
    Ok(degrees)
}

/// One realisation of the truncated GAF.
#[derive(Debug, Clone, PartialEq)]
pub struct GafSample {
    l: IntensityVector,
    degrees: Vec<usize>,
    /// `a_α`, row-major over the box (last coordinate fastest).
    coefficients: Vec<Complex64>,
    /// `a_α c_α`.
    scaled: Vec<Complex64>,
    seed: u64,
    trial_index: u64,
    tail_variance_bound: f64,
    eval_radius: Vec<f64>,
}

impl GafSample {
    /// Sample with explicit `a_α` (seed and trial are recorded as zero).
    pub fn from_coefficients(
        l: &IntensityVector,
        degrees: &[usize],
        coefficients: Vec<Complex64>,
        eval_radius: &[f64],
    ) -> Result<Self> {
        let table = BasisCoefficientTable::new(l, degrees)?;
        if coefficients.len() != table.len() {
            return Err(Error::DimensionMismatch {
                expected: table.len(),
                got: coefficients.len(),
            });
        }
        let scaled = (0..table.len())
            .map(|i| coefficients[i] * table.coefficient(&table.multi_index(i)))
            .collect();
        Self::assemble(l, degrees, coefficients, scaled, eval_radius, 0, 0)
    }

    /// Sample whose polynomial `Σ a_α c_α z^α` has the given coefficients.
    pub fn from_polynomial(
        l: &IntensityVector,
        degrees: &[usize],
        poly: Vec<Complex64>,
        eval_radius: &[f64],
    ) -> Result<Self> {
        let table = BasisCoefficientTable::new(l, degrees)?;
        if poly.len() != table.len() {
            return Err(Error::DimensionMismatch {
                expected: table.len(),
                got: poly.len(),
            });
        }
        let coefficients = (0..table.len())
            .map(|i| {
                let c = table.coefficient(&table.multi_index(i));
                if c == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    poly[i] / c
                }
            })
            .collect();
        Self::assemble(l, degrees, coefficients, poly, eval_radius, 0, 0)
    }

    fn assemble(
        l: &IntensityVector,
        degrees: &[usize],
        coefficients: Vec<Complex64>,
        scaled: Vec<Complex64>,
        eval_radius: &[f64],
        seed: u64,
        trial_index: u64,
    ) -> Result<Self> {
        check_dims(l.dim(), eval_radius.len())?;
        if let Some(r) = eval_radius.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "evaluation radius must lie in (0,1), got {r}"
            )));
        }
        let tail_variance_bound = tail_variance(l, eval_radius, degrees)?;
        Ok(Self {
            l: l.clone(),
            degrees: degrees.to_vec(),
            coefficients,
            scaled,
            seed,
            trial_index,
            tail_variance_bound,
            eval_radius: eval_radius.to_vec(),
        })
    }

    pub fn intensity(&self) -> &IntensityVector {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Polynomial coefficients `a_α c_α`.
    pub fn scaled_coefficients(&self) -> &[Complex64] {
        &self.scaled
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial_index(&self) -> u64 {
        self.trial_index
    }

    pub fn tail_variance_bound(&self) -> f64 {
        self.tail_variance_bound
    }

    pub fn eval_radius(&self) -> &[f64] {
        &self.eval_radius
    }

    fn check_point(&self, z: &[Complex64]) -> Result<()> {
        check_dims(self.dim(), z.len())?;
        for (j, zj) in z.iter().enumerate() {
            if zj.norm() > self.eval_radius[j] * (1.0 + 1e-12) {
                return Err(Error::OutsideCertifiedRegion { coordinate: j });
            }
        }
        Ok(())
    }

    /// `f_L(z)` by nested Horner accumulation.
    pub fn evaluate(&self, z: &PolydiskPoint) -> Result<Complex64> {
        self.check_point(z.coords())?;
        Ok(self.evaluate_unchecked(z.coords()))
    }

    pub(crate) fn evaluate_unchecked(&self, z: &[Complex64]) -> Complex64 {
        horner(&self.scaled, &self.degrees, z)
    }

    /// `log|f̂_L(z)|² = log|f_L(z)|² + Σ L_j log(1 - |z_j|²)`; `-∞` when
    /// `f_L(z) = 0` exactly.
    pub fn log_normalized_sq(&self, z: &PolydiskPoint) -> Result<f64> {
        let f = self.evaluate(z)?;
        Ok(self.log_normalized_from_value(f, z.coords()))
    }

    pub(crate) fn log_normalized_from_value(&self, f: Complex64, z: &[Complex64]) -> f64 {
        let m = f.norm_sqr();
        if m == 0.0 {
            return f64::NEG_INFINITY;
        }
        m.ln()
            + z.iter()
                .zip(self.l.values())
                .map(|(zj, lj)| lj * (1.0 - zj.norm_sqr()).ln())
                .sum::<f64>()
    }

    /// Values on the torus grid `z_j = r_j e^{2πi k_j / K_j}` (row-major in
    /// `k`), by folding the coefficients modulo `K_j` and one inverse DFT.
    pub fn evaluate_on_torus(&self, radii: &[f64], angular: &[usize]) -> Result<Vec<Complex64>> {
        check_dims(self.dim(), radii.len())?;
        check_dims(self.dim(), angular.len())?;
        for (j, &r) in radii.iter().enumerate() {
            if r > self.eval_radius[j] * (1.0 + 1e-12) {
                return Err(Error::OutsideCertifiedRegion { coordinate: j });
            }
        }
        let mut grid = vec![Complex64::new(0.0, 0.0); angular.iter().product()];
        self.fold_into(&mut grid, radii, angular, |_alpha| 1.0);
        inverse_dft_nd(&mut grid, angular);
        Ok(grid)
    }

    /// For `n = 1`: `f(z)` and `z f'(z)` on the circle `|z| = r`.
    pub fn evaluate_on_circle_with_derivative(
        &self,
        r: f64,
        nodes: usize,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        check_dims(1, self.dim())?;
        if r > self.eval_radius[0] * (1.0 + 1e-12) {
            return Err(Error::OutsideCertifiedRegion { coordinate: 0 });
        }
        let mut f = vec![Complex64::new(0.0, 0.0); nodes];
        let mut zf = vec![Complex64::new(0.0, 0.0); nodes];
        let mut pow = 1.0;
        for (k, b) in self.scaled.iter().enumerate() {
            let v = b * pow;
            f[k % nodes] += v;
            zf[k % nodes] += v * k as f64;
            pow *= r;
        }
        inverse_dft_nd(&mut f, &[nodes]);
        inverse_dft_nd(&mut zf, &[nodes]);
        Ok((f, zf))
    }

    fn fold_into(
        &self,
        grid: &mut [Complex64],
        radii: &[f64],
        angular: &[usize],
        weight: impl Fn(&[usize]) -> f64,
    ) {
        let n = self.dim();
        // Powers r_j^k per coordinate.
        let pows: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut v = Vec::with_capacity(self.degrees[j] + 1);
                let mut p = 1.0;
                for _ in 0..=self.degrees[j] {
                    v.push(p);
                    p *= radii[j];
                }
                v
            })
            .collect();
        let mut alpha = vec![0usize; n];
        for b in &self.scaled {
            let mut scale = weight(&alpha);
            let mut pos = 0usize;
            for j in 0..n {
                scale *= pows[j][alpha[j]];
                pos = pos * angular[j] + alpha[j] % angular[j];
            }
            grid[pos] += b * scale;
            // advance the multi-index (last coordinate fastest)
            for j in (0..n).rev() {
                alpha[j] += 1;
                if alpha[j] <= self.degrees[j] {
                    break;
                }
                alpha[j] = 0;
            }
        }
    }

    /// Coefficients of the one-variable polynomial (in the single coordinate
    /// of an `n = 1` sample), lowest degree first.
    pub fn univariate_polynomial(&self) -> Result<&[Complex64]> {
        check_dims(1, self.dim())?;
        Ok(&self.scaled)
    }
}

fn horner(coeffs: &[Complex64], degrees: &[usize], z: &[Complex64]) -> Complex64 {
    match degrees.len() {
        1 => coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z[0] + c),
        _ => {
            let inner: usize = degrees[1..].iter().map(|m| m + 1).product();
            coeffs
                .chunks_exact(inner)
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, chunk| {
                    acc * z[0] + horner(chunk, &degrees[1..], &z[1..])
                })
        }
    }
}

/// Draws truncated GAF samples for a fixed intensity and certified box.
#[derive(Debug, Clone)]
pub struct GafSampler {
    table: BasisCoefficientTable,
    scale: Vec<f64>,
    codes: Vec<u64>,
    eval_radius: Vec<f64>,
    tail_variance_bound: f64,
}

impl GafSampler {
    /// Box from `truncation_degree(l, eval_radius, tol)`.
    pub fn certified(l: &IntensityVector, eval_radius: &[f64], tol: f64) -> Result<Self> {
        let degrees = truncation_degree(l, eval_radius, tol, DEFAULT_DEGREE_CAP)?;
        Self::with_degrees(l, &degrees, eval_radius)
    }

    pub fn with_degrees(l: &IntensityVector, degrees: &[usize], eval_radius: &[f64]) -> Result<Self> {
        let table = BasisCoefficientTable::new(l, degrees)?;
        check_dims(l.dim(), eval_radius.len())?;
        if let Some(r) = eval_radius.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "evaluation radius must lie in (0,1), got {r}"
            )));
        }
        let tail_variance_bound = tail_variance(l, eval_radius, degrees)?;
        let (scale, codes) = (0..table.len())
            .map(|i| {
                let alpha = table.multi_index(i);
                (table.coefficient(&alpha), multi_index_code(&alpha))
            })
            .unzip();
        Ok(Self {
            table,
            scale,
            codes,
            eval_radius: eval_radius.to_vec(),
            tail_variance_bound,
        })
    }

    pub fn degrees(&self) -> &[usize] {
        self.table.degrees()
    }

    pub fn table(&self) -> &BasisCoefficientTable {
        &self.table
    }

    pub fn eval_radius(&self) -> &[f64] {
        &self.eval_radius
    }

    pub fn tail_variance_bound(&self) -> f64 {
        self.tail_variance_bound
    }

    pub fn intensity(&self) -> &IntensityVector {
        self.table.intensity()
    }

    /// Realisation `trial_index` of stream `seed`.
    pub fn draw(&self, seed: u64, trial_index: u64) -> GafSample {
        let rng = CounterRng::new(seed);
        let coefficients: Vec<Complex64> = self
            .codes
            .iter()
            .map(|&code| rng.complex_normal(trial_index, code))
            .collect();
        let scaled = coefficients
            .iter()
            .zip(&self.scale)
            .map(|(a, c)| a * c)
            .collect();
        GafSample {
            l: self.table.intensity().clone(),
            degrees: self.table.degrees().to_vec(),
            coefficients,
            scaled,
            seed,
            trial_index,
            tail_variance_bound: self.tail_variance_bound,
            eval_radius: self.eval_radius.clone(),
        }
    }
}

/// Free-function form: sample `trial_index` of `seed` on box `degrees`.
pub fn draw_sample(
    l: &IntensityVector,
    degrees: &[usize],
    eval_radius: &[f64],
    seed: u64,
    trial_index: u64,
) -> Result<GafSample> {
    Ok(GafSampler::with_degrees(l, degrees, eval_radius)?.draw(seed, trial_index))
}
