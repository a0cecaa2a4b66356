//! Streaming moments of Monte Carlo runs and the deterministic parallel
//! trial driver.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Values are folded in chunks of this size and the chunks merged in
/// order, so the floating-point result does not depend on scheduling.
pub const MERGE_CHUNK: usize = 4096;

/// Count, mean and second central moment (Welford) of a run, with free-form
/// diagnostics and an echo of the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ExperimentResult {
    trials: u64,
    mean: f64,
    m2: f64,
    diagnostics: BTreeMap<String, f64>,
    config: BTreeMap<String, String>,
}

impl ExperimentResult {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.trials += 1;
        let delta = x - self.mean;
        self.mean += delta / self.trials as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Pairwise combination of two partial results.
    pub fn merge(&mut self, other: &ExperimentResult) {
        if other.trials == 0 {
            return;
        }
        if self.trials == 0 {
            self.trials = other.trials;
            self.mean = other.mean;
            self.m2 = other.m2;
        } else {
            let (na, nb) = (self.trials as f64, other.trials as f64);
            let n = na + nb;
            let delta = other.mean - self.mean;
            self.mean += delta * nb / n;
            self.m2 += other.m2 + delta * delta * na * nb / n;
            self.trials += other.trials;
        }
        for (k, v) in &other.diagnostics {
            *self.diagnostics.entry(k.clone()).or_insert(0.0) += v;
        }
        for (k, v) in &other.config {
            self.config.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut out = Self::new();
        for chunk in values.chunks(MERGE_CHUNK) {
            let mut part = Self::new();
            chunk.iter().for_each(|x| part.push(*x));
            out.merge(&part);
        }
        out
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Unbiased sample variance; zero below two trials.
    pub fn variance(&self) -> f64 {
        if self.trials < 2 {
            0.0
        } else {
            self.m2 / (self.trials - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        (self.variance() / self.trials as f64).sqrt()
    }

    /// Approximate standard error of the sample variance, from the normal
    /// fourth-moment formula `σ² √(2/(N-1))`.
    pub fn variance_standard_error(&self) -> f64 {
        if self.trials < 2 {
            return f64::NAN;
        }
        self.variance() * (2.0 / (self.trials - 1) as f64).sqrt()
    }

    pub fn diagnostics(&self) -> &BTreeMap<String, f64> {
        &self.diagnostics
    }

    pub fn set_diagnostic(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(key.to_owned(), value);
    }

    pub fn config(&self) -> &BTreeMap<String, String> {
        &self.config
    }

    pub fn set_config(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_owned(), value.to_string());
    }
}

/// Evaluate `f(trial)` for every trial on a pool of `workers` threads and
/// return the results in trial order.
pub fn map_trials<T, F>(trials: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..trials).into_par_iter().map(&f).collect()))
}
