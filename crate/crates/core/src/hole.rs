//! Hole and large-deviation probabilities by plain Monte Carlo, and the
//! fit of their decay in `L`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{nu_volume, IntensityVector, PseudoHyperbolicPolydisk};
use crate::sampler::{GafSample, GafSampler, DEFAULT_TRUNCATION_TOL, EVAL_RADIUS_MARGIN, HOLE_TRUNCATION_TOL};
use crate::stats::map_trials;
use crate::zeros1d::{count_zeros_in_disk, hole_test, polynomial_roots, HoleOutcome, DEFAULT_KAPPA};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Runs with a larger share of inconclusive trials are rejected.
pub const MAX_UNCERTAIN_FRACTION: f64 = 0.01;

/// Fewest trials accepted by the Monte Carlo estimators.
pub const MIN_TRIALS: u64 = 1000;

/// Binomial proportion with a Wilson score interval. Inconclusive trials
/// are counted separately and left out of both numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub successes: u64,
    pub decided: u64,
    pub uncertain: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Set when the per-trial verdict is not certified.
    pub heuristic: bool,
}

impl ProbabilityEstimate {
    pub fn from_counts(successes: u64, decided: u64, uncertain: u64, heuristic: bool) -> Result<Self> {
        if decided == 0 {
            return Err(Error::NonConvergence("every trial was inconclusive".into()));
        }
        let (ci_low, ci_high) = wilson_interval(successes, decided, WILSON_Z);
        Ok(Self {
            successes,
            decided,
            uncertain,
            estimate: successes as f64 / decided as f64,
            ci_low,
            ci_high,
            heuristic,
        })
    }

    pub fn uncertain_fraction(&self) -> f64 {
        self.uncertain as f64 / (self.uncertain + self.decided) as f64
    }

    /// Whether the two confidence intervals are disjoint.
    pub fn separated_from(&self, other: &ProbabilityEstimate) -> bool {
        self.ci_high < other.ci_low || other.ci_high < self.ci_low
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if p == 1.0 { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleOptions {
    /// Safety factor on the truncation tail in the hole verdict.
    pub kappa: f64,
    pub truncation_tol: f64,
    pub workers: usize,
}

impl Default for HoleOptions {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            truncation_tol: HOLE_TRUNCATION_TOL,
            workers: 1,
        }
    }
}

fn one_dimensional(l: &IntensityVector) -> Result<()> {
    if l.dim() != 1 {
        return Err(Error::InvalidParameter(format!(
            "this estimator is for one variable, got dimension {}",
            l.dim()
        )));
    }
    Ok(())
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r + EVAL_RADIUS_MARGIN < 1.0) {
        return Err(Error::Domain {
            value: r,
            domain: "(0, 0.99)",
        });
    }
    Ok(())
}

/// Per-trial verdict; numerical failures of the contour count are
/// inconclusive rather than fatal.
fn hole_verdict(s: &GafSample, r: f64, kappa: f64) -> Result<HoleOutcome> {
    match hole_test(s, r, kappa) {
        Ok(o) => Ok(o),
        Err(e) if e.is_numerical() => Ok(HoleOutcome::Uncertain),
        Err(e) => Err(e),
    }
}

/// `P[no zero in E(0, r)]` for `n = 1`.
pub fn hole_probability_mc(
    l: &IntensityVector,
    r: f64,
    trials: u64,
    seed: u64,
    opts: HoleOptions,
) -> Result<ProbabilityEstimate> {
    one_dimensional(l)?;
    check_trials(trials)?;
    check_radius(r)?;
    let sampler = GafSampler::certified(l, &[r + EVAL_RADIUS_MARGIN], opts.truncation_tol)?;
    let outcomes = map_trials(trials, opts.workers, |t| -> Result<HoleOutcome> {
        let s = sampler.draw(seed, t);
        let o = hole_verdict(&s, r, opts.kappa)?;
        if cfg!(debug_assertions) && o == HoleOutcome::Hole {
            // A hole at r is a hole at every smaller radius.
            debug_assert_ne!(hole_verdict(&s, 0.5 * r, opts.kappa)?, HoleOutcome::NoHole);
        }
        Ok(o)
    })?;
    let (mut holes, mut decided, mut uncertain) = (0u64, 0u64, 0u64);
    for o in outcomes {
        match o? {
            HoleOutcome::Hole => {
                holes += 1;
                decided += 1;
            }
            HoleOutcome::NoHole => decided += 1,
            HoleOutcome::Uncertain => uncertain += 1,
        }
    }
    let est = ProbabilityEstimate::from_counts(holes, decided, uncertain, false)?;
    if est.uncertain_fraction() > MAX_UNCERTAIN_FRACTION {
        return Err(Error::NonConvergence(format!(
            "{uncertain} of {trials} trials were inconclusive"
        )));
    }
    Ok(est)
}

/// Zero-free verdict on a polar grid of `E(0, r)` in several variables.
///
/// Each coordinate gets `grid_density` rings of `4·grid_density` points
/// plus the centre. A zero is declared when `min |f|` over the grid drops
/// below `τ = Σ_j d_j G_j`, with `d_j` the covering radius of the grid in
/// coordinate `j` and `G_j` the largest difference quotient of `f` between
/// neighbours along that coordinate. Not certified.
pub fn grid_hole_verdict(s: &GafSample, r: f64, grid_density: usize) -> Result<HoleOutcome> {
    let n = s.dim();
    let g = grid_density.max(1);
    let k = 4 * g;
    let rings: Vec<f64> = (0..=g).map(|i| r * i as f64 / g as f64).collect();
    // Every combination of ring indices; the centre ring collapses to one
    // point but is sampled on the same angular grid for simplicity.
    let shape: Vec<usize> = vec![k; n];
    let per_torus = k.pow(n as u32);
    let mut values: Vec<Vec<Complex64>> = Vec::with_capacity((g + 1).pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let radii: Vec<f64> = idx.iter().map(|&i| rings[i]).collect();
        values.push(s.evaluate_on_torus(&radii, &shape)?);
        let mut j = n;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] <= g {
                break;
            }
            idx[j] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }
    let min_mod = values
        .iter()
        .flat_map(|v| v.iter())
        .map(|f| f.norm())
        .fold(f64::INFINITY, f64::min);
    let ring_step = r / g as f64;
    let arc_step = r * std::f64::consts::TAU / k as f64;
    let cover = 0.5 * ring_step.hypot(arc_step);
    let ring_stride: Vec<usize> = (0..n).map(|j| (g + 1).pow((n - 1 - j) as u32)).collect();
    let angle_stride: Vec<usize> = (0..n).map(|j| k.pow((n - 1 - j) as u32)).collect();
    let mut tau = 0.0;
    for j in 0..n {
        let mut grad: f64 = 0.0;
        for (ti, torus) in values.iter().enumerate() {
            let ring = (ti / ring_stride[j]) % (g + 1);
            let rj = rings[ring];
            for (p, f) in torus.iter().enumerate() {
                let a = (p / angle_stride[j]) % k;
                // Angular neighbour.
                if rj > 0.0 {
                    let q = p - a * angle_stride[j] + ((a + 1) % k) * angle_stride[j];
                    let dist = 2.0 * rj * (std::f64::consts::PI / k as f64).sin();
                    grad = grad.max((torus[q] - f).norm() / dist);
                }
                // Radial neighbour at the same angles.
                if ring < g {
                    let other = &values[ti + ring_stride[j]];
                    grad = grad.max((other[p] - f).norm() / ring_step);
                }
            }
        }
        tau += cover * grad;
    }
    debug_assert_eq!(values.len(), (g + 1).pow(n as u32));
    debug_assert!(values.iter().all(|v| v.len() == per_torus));
    Ok(if min_mod < tau {
        HoleOutcome::NoHole
    } else {
        HoleOutcome::Hole
    })
}

/// Heuristic hole probability for `n ≥ 2`; always flagged as heuristic.
pub fn hole_probability_grid(
    l: &IntensityVector,
    r: f64,
    trials: u64,
    seed: u64,
    grid_density: usize,
    opts: HoleOptions,
) -> Result<ProbabilityEstimate> {
    if l.dim() < 2 {
        return Err(Error::InvalidParameter(
            "the grid estimator is for two or more variables".into(),
        ));
    }
    check_radius(r)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let sampler = GafSampler::certified(l, &vec![r + EVAL_RADIUS_MARGIN; l.dim()], DEFAULT_TRUNCATION_TOL)?;
    let outcomes = map_trials(trials, opts.workers, |t| grid_hole_verdict(&sampler.draw(seed, t), r, grid_density))?;
    let mut holes = 0u64;
    for o in outcomes {
        if o? == HoleOutcome::Hole {
            holes += 1;
        }
    }
    ProbabilityEstimate::from_counts(holes, trials, 0, true)
}

/// Zero count in `|z| < r` by the argument principle, falling back to the
/// roots when the contour does not settle.
pub fn zero_count(s: &GafSample, r: f64) -> Result<Option<usize>> {
    match count_zeros_in_disk(s, r) {
        Ok(c) => Ok(Some(c)),
        Err(e) if e.is_numerical() => match polynomial_roots(s) {
            Ok(roots) => Ok(Some(roots.iter().filter(|z| z.norm() < r).count())),
            Err(e) if e.is_numerical() => Ok(None),
            Err(e) => Err(e),
        },
        Err(e) => Err(e),
    }
}

/// `P[|N(U)/L - ν(U)| > δ]` for `U = E(0, r)` and `n = 1`.
pub fn deviation_probability_mc(
    u: &PseudoHyperbolicPolydisk,
    delta: f64,
    l: &IntensityVector,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<ProbabilityEstimate> {
    one_dimensional(l)?;
    if u.dim() != 1 || u.center().coord(0).norm() != 0.0 {
        return Err(Error::InvalidParameter(
            "the region must be a disk centred at the origin".into(),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain {
            value: delta,
            domain: "(0, ∞)",
        });
    }
    check_trials(trials)?;
    let r = u.radii()[0];
    check_radius(r)?;
    let vol = nu_volume(u);
    let lsum = l.sum();
    let sampler = GafSampler::certified(l, &[r + EVAL_RADIUS_MARGIN], DEFAULT_TRUNCATION_TOL)?;
    let counts = map_trials(trials, workers, |t| zero_count(&sampler.draw(seed, t), r))?;
    let (mut hits, mut decided, mut uncertain) = (0u64, 0u64, 0u64);
    for c in counts {
        match c? {
            Some(c) => {
                decided += 1;
                if (c as f64 / lsum - vol).abs() > delta {
                    hits += 1;
                }
            }
            None => uncertain += 1,
        }
    }
    ProbabilityEstimate::from_counts(hits, decided, uncertain, false)
}

/// Least-squares fit of `log P = -c x^β` in the form
/// `log(-log P) = log c + β log x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub beta: f64,
    pub c: f64,
    /// Abscissae used: `L` in one variable, `(ΣL)(∏L)` otherwise.
    pub x: Vec<f64>,
    /// Residuals of `log(-log P)`.
    pub residuals: Vec<f64>,
}

pub fn decay_fit(pairs: &[(IntensityVector, f64)]) -> Result<DecayFit> {
    let one_var = pairs.iter().all(|(l, _)| l.dim() == 1);
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(_, lp)| lp.is_finite() && *lp < 0.0)
        .map(|(l, lp)| {
            let x = if one_var { l.get(0) } else { l.exponent_scale() };
            (x.ln(), (-lp).ln())
        })
        .collect();
    if usable.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: usable.len(),
        });
    }
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all abscissae coincide".into()));
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let log_c = my - beta * mx;
    Ok(DecayFit {
        beta,
        c: log_c.exp(),
        x: usable.iter().map(|p| p.0.exp()).collect(),
        residuals: usable.iter().map(|p| p.1 - (log_c + beta * p.0)).collect(),
    })
}
