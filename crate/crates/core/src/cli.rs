//! Experiment driver behind the `polygaf` binary.
//!
//! Configuration comes from four layers, highest first: command-line flags,
//! the `POLYGAF_WORKERS` environment variable (worker count only), a flat
//! `key = value` file given by `--config`, and per-subcommand defaults.
//! Every output file starts with the version string and the resolved
//! configuration, so a file alone is enough to rerun the experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::Error;
use crate::geometry::{nu_volume, IntensityVector, PolydiskPoint, PseudoHyperbolicPolydisk};
use crate::hole::{
    decay_fit, deviation_probability_mc, hole_probability_grid, hole_probability_mc, zero_count,
    HoleOptions, ProbabilityEstimate,
};
use crate::kernel::identity_suite;
use crate::sampler::{GafSampler, EVAL_RADIUS_MARGIN};
use crate::stats::{
    bipotential_variance, clt_diagnostic, epsilon_mean_value, map_trials, mean_value_sides,
    predicted_variance, statistic_zeros, BipotentialOptions, ExperimentResult, StokesOptions,
    StokesPlan, TestForm, MEAN_VALUE_TOL,
};
use crate::zeros1d::polynomial_roots;

pub const VERSION: &str = concat!("polygaf ", env!("CARGO_PKG_VERSION"));

/// Environment variable that overrides the worker count from a config file.
pub const WORKERS_ENV: &str = "POLYGAF_WORKERS";

/// Keys accepted in a config file; each has a flag of the same name.
pub const CONFIG_KEYS: [&str; 15] = [
    "n",
    "L",
    "r",
    "L-list",
    "trials",
    "seed",
    "trunc-tol",
    "quad-rtol",
    "workers",
    "output-dir",
    "bump-radius",
    "delta",
    "kappa",
    "grid-density",
    "plot",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Compute(#[from] Error),
}

impl CliError {
    /// 2 for bad input, 3 when an iterative method failed.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Compute(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "polygaf", version, about = "Monte Carlo experiments on hyperbolic GAFs of the polydisk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Randomised checks of the covariance kernel identities.
    KernelCheck,
    /// Draw samples and write their coefficients (and zeros when n = 1).
    Sample,
    /// Mean zero count or mean linear statistic against its expectation.
    Intensity,
    /// Monte Carlo variance of the smooth-bump statistic against the
    /// bipotential integral and the leading-order prediction.
    Variance,
    /// Kolmogorov-Smirnov test of the normalised statistic.
    Clt,
    /// Probability that the normalised zero count deviates by more than delta.
    Deviation,
    /// Hole probabilities across L and the fitted decay exponent.
    Hole,
    /// Sweep of the sub-mean-value inequality for log|f̂|².
    MeanValue,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Sample => "sample",
            Command::Intensity => "intensity",
            Command::Variance => "variance",
            Command::Clt => "clt",
            Command::Deviation => "deviation",
            Command::Hole => "hole",
            Command::MeanValue => "mean-value",
        }
    }
}

/// Overrides. Values stay as strings so they go through the same parser as
/// the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Number of variables.
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Intensity vector, comma separated; one value is used for every coordinate.
    #[arg(long = "L", global = true, value_name = "L")]
    pub l: Option<String>,
    /// Radii of the region, comma separated.
    #[arg(long, global = true)]
    pub r: Option<String>,
    /// Intensities swept by `hole` and `deviation`.
    #[arg(long = "L-list", global = true, value_name = "LIST")]
    pub l_list: Option<String>,
    #[arg(long, global = true)]
    pub trials: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Truncation tolerance on the tail variance.
    #[arg(long = "trunc-tol", global = true)]
    pub trunc_tol: Option<String>,
    /// Relative tolerance of deterministic quadratures.
    #[arg(long = "quad-rtol", global = true)]
    pub quad_rtol: Option<String>,
    #[arg(long, global = true)]
    pub workers: Option<String>,
    #[arg(long = "output-dir", global = true, value_name = "DIR")]
    pub output_dir: Option<String>,
    /// Support radius of the smooth bump test function.
    #[arg(long = "bump-radius", global = true)]
    pub bump_radius: Option<String>,
    #[arg(long, global = true)]
    pub delta: Option<String>,
    /// Safety factor of the certified hole test.
    #[arg(long, global = true)]
    pub kappa: Option<String>,
    /// Rings per coordinate of the heuristic hole grid.
    #[arg(long = "grid-density", global = true)]
    pub grid_density: Option<String>,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub plot: Option<String>,
}

impl Flags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 14] {
        [
            ("n", &self.n),
            ("L", &self.l),
            ("r", &self.r),
            ("L-list", &self.l_list),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("trunc-tol", &self.trunc_tol),
            ("quad-rtol", &self.quad_rtol),
            ("workers", &self.workers),
            ("output-dir", &self.output_dir),
            ("bump-radius", &self.bump_radius),
            ("delta", &self.delta),
            ("kappa", &self.kappa),
            ("grid-density", &self.grid_density),
        ]
    }
}

/// Parse a config file. Blank lines and `#` comments are skipped; unknown
/// or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(config_err(format!("line {}: unknown key `{key}`", no + 1)));
        }
        if out.insert(key.to_owned(), value.to_owned()).is_some() {
            return Err(config_err(format!("line {}: key `{key}` given twice", no + 1)));
        }
    }
    Ok(out)
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub command: Command,
    pub n: usize,
    pub l: Vec<f64>,
    pub r: Vec<f64>,
    pub l_list: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub trunc_tol: f64,
    pub quad_rtol: f64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub bump_radius: f64,
    pub delta: f64,
    pub kappa: f64,
    pub grid_density: usize,
    pub plot: bool,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| config_err(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|x| parse_num(key, x)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_err(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

/// A single value is repeated for every coordinate.
fn broadcast(key: &str, v: Vec<f64>, n: usize) -> Result<Vec<f64>, CliError> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        m if m == n => Ok(v),
        m => Err(config_err(format!("`{key}` has {m} entries but n = {n}"))),
    }
}

fn check_unit(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v + EVAL_RADIUS_MARGIN < 1.0 {
        Ok(())
    } else {
        Err(config_err(format!("`{key}` must lie in (0, {}), got {v}", 1.0 - EVAL_RADIUS_MARGIN)))
    }
}

fn check_positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("`{key}` must be positive, got {v}")))
    }
}

impl Config {
    /// Merge the layers and validate.
    pub fn resolve(command: Command, flags: &Flags, env_workers: Option<String>) -> Result<Self, CliError> {
        let mut raw = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        if let Some(w) = env_workers {
            raw.insert("workers".into(), w);
        }
        for (key, value) in flags.pairs() {
            if let Some(v) = value {
                raw.insert(key.into(), v.clone());
            }
        }
        if let Some(v) = &flags.plot {
            raw.insert("plot".into(), v.clone());
        }
        Self::from_raw(command, &raw)
    }

    pub fn from_raw(command: Command, raw: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let get = |k: &str| raw.get(k).map(String::as_str);
        let n: usize = get("n").map(|v| parse_num("n", v)).transpose()?.unwrap_or(1);
        if n == 0 {
            return Err(config_err("`n` must be at least 1"));
        }
        let default_l = match command {
            Command::Variance => 20.0,
            Command::Clt => 100.0,
            Command::MeanValue => 5.0,
            _ => 8.0,
        };
        let l = broadcast("L", get("L").map(|v| parse_list("L", v)).transpose()?.unwrap_or(vec![default_l]), n)?;
        for &x in &l {
            check_positive("L", x)?;
        }
        let default_r = if command == Command::MeanValue { 0.4 } else { 0.5 };
        let r = broadcast("r", get("r").map(|v| parse_list("r", v)).transpose()?.unwrap_or(vec![default_r]), n)?;
        for &x in &r {
            check_unit("r", x)?;
        }
        let default_list = match command {
            Command::Deviation => vec![2.0, 4.0, 8.0],
            _ => vec![1.0, 2.0, 3.0, 4.0],
        };
        let l_list = get("L-list").map(|v| parse_list("L-list", v)).transpose()?.unwrap_or(default_list);
        for &x in &l_list {
            check_positive("L-list", x)?;
        }
        let default_trials = match command {
            Command::KernelCheck => 1000,
            Command::Sample => 1,
            Command::Intensity => 20_000,
            Command::Variance | Command::Deviation => 100_000,
            Command::Clt => 2000,
            Command::Hole if n == 1 => 1_000_000,
            Command::Hole => 1000,
            Command::MeanValue => 1000,
        };
        let trials: u64 = get("trials").map(|v| parse_num("trials", v)).transpose()?.unwrap_or(default_trials);
        if trials == 0 {
            return Err(config_err("`trials` must be positive"));
        }
        let seed = get("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(42);
        let default_trunc = if command == Command::Hole {
            crate::sampler::HOLE_TRUNCATION_TOL
        } else {
            crate::sampler::DEFAULT_TRUNCATION_TOL
        };
        let trunc_tol = get("trunc-tol").map(|v| parse_num("trunc-tol", v)).transpose()?.unwrap_or(default_trunc);
        check_positive("trunc-tol", trunc_tol)?;
        let quad_rtol = get("quad-rtol")
            .map(|v| parse_num("quad-rtol", v))
            .transpose()?
            .unwrap_or(crate::stats::DEFAULT_QUAD_RTOL);
        check_positive("quad-rtol", quad_rtol)?;
        let workers = match get("workers") {
            Some(v) => parse_num("workers", v)?,
            None => std::thread::available_parallelism().map_or(1, |p| p.get()),
        };
        if workers == 0 {
            return Err(config_err("`workers` must be at least 1"));
        }
        let output_dir = PathBuf::from(get("output-dir").unwrap_or("."));
        if !output_dir.is_dir() {
            return Err(config_err(format!("output directory {} does not exist", output_dir.display())));
        }
        let bump_radius = get("bump-radius").map(|v| parse_num("bump-radius", v)).transpose()?.unwrap_or(0.5);
        check_unit("bump-radius", bump_radius)?;
        let delta = get("delta").map(|v| parse_num("delta", v)).transpose()?.unwrap_or(0.5);
        check_positive("delta", delta)?;
        let kappa = get("kappa").map(|v| parse_num("kappa", v)).transpose()?.unwrap_or(crate::zeros1d::DEFAULT_KAPPA);
        check_positive("kappa", kappa)?;
        let grid_density = get("grid-density").map(|v| parse_num("grid-density", v)).transpose()?.unwrap_or(8);
        if grid_density == 0 {
            return Err(config_err("`grid-density` must be at least 1"));
        }
        let plot = get("plot").map(|v| parse_bool("plot", v)).transpose()?.unwrap_or(false);
        if command == Command::Deviation && n != 1 {
            return Err(config_err("`deviation` is implemented for n = 1 only"));
        }
        Ok(Self {
            command,
            n,
            l,
            r,
            l_list,
            trials,
            seed,
            trunc_tol,
            quad_rtol,
            workers,
            output_dir,
            bump_radius,
            delta,
            kappa,
            grid_density,
            plot,
        })
    }

    /// Settings that determine the numbers in the outputs. The worker count
    /// and output directory are left out so that runs differing only in
    /// those produce identical files.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("command".into(), self.command.name().into());
        m.insert("n".into(), self.n.to_string());
        m.insert("L".into(), list(&self.l));
        m.insert("r".into(), list(&self.r));
        m.insert("L-list".into(), list(&self.l_list));
        m.insert("trials".into(), self.trials.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("trunc-tol".into(), fmt_f64(self.trunc_tol));
        m.insert("quad-rtol".into(), fmt_f64(self.quad_rtol));
        m.insert("bump-radius".into(), fmt_f64(self.bump_radius));
        m.insert("delta".into(), fmt_f64(self.delta));
        m.insert("kappa".into(), fmt_f64(self.kappa));
        m.insert("grid-density".into(), self.grid_density.to_string());
        m.insert("plot".into(), self.plot.to_string());
        m
    }

    fn intensity(&self) -> Result<IntensityVector, CliError> {
        Ok(IntensityVector::new(self.l.clone())?)
    }

    fn bump(&self) -> Result<TestForm, CliError> {
        Ok(TestForm::smooth_bump(&vec![self.bump_radius; self.n])?)
    }

    /// Tolerance handed to the bipotential integral, which cannot reach the
    /// generic quadrature default in reasonable time.
    fn bipotential_options(&self) -> BipotentialOptions {
        BipotentialOptions {
            rtol: self.quad_rtol.max(1e-6),
            ..Default::default()
        }
    }
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// One CSV cell.
enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::U(x) => x.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

fn header_lines(cfg: &Config) -> String {
    let mut out = format!("# {VERSION}\n");
    for (k, v) in cfg.echo() {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out
}

/// CSV text: the commented config block, a header row, then data rows.
fn csv_text(cfg: &Config, columns: &[&str], rows: &[Vec<Cell>]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_cli = |e: csv::Error| config_err(format!("csv encoding: {e}"));
    w.write_record(columns).map_err(to_cli)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(to_cli)?;
    }
    let body = w.into_inner().map_err(|e| config_err(format!("csv encoding: {e}")))?;
    Ok(header_lines(cfg) + &String::from_utf8(body).expect("csv output is UTF-8"))
}

fn json_text(cfg: &Config, results: Value) -> String {
    let doc = json!({
        "version": VERSION,
        "config": cfg.echo(),
        "results": results,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("JSON value serialises");
    s.push('\n');
    s
}

/// Collects output files and writes them in one go at the end.
struct Outputs<'a> {
    cfg: &'a Config,
    files: Vec<(String, String)>,
}

impl<'a> Outputs<'a> {
    fn new(cfg: &'a Config) -> Self {
        Self { cfg, files: Vec::new() }
    }

    fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
        let text = csv_text(self.cfg, columns, rows)?;
        self.files.push((name.into(), text));
        Ok(())
    }

    fn json(&mut self, name: &str, results: Value) {
        self.files.push((name.into(), json_text(self.cfg, results)));
    }

    /// gnuplot script, written only when plotting is enabled.
    fn plot(&mut self, name: &str, body: &str) {
        if self.cfg.plot {
            let mut text: String = header_lines(self.cfg);
            text.push_str("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n");
            text.push_str(body);
            self.files.push((name.into(), text));
        }
    }

    fn write(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        for (name, text) in self.files {
            let path = dir.join(&name);
            std::fs::write(&path, text).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Run one subcommand and return the paths written.
pub fn run(cfg: &Config) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Outputs::new(cfg);
    match cfg.command {
        Command::KernelCheck => kernel_check(cfg, &mut out)?,
        Command::Sample => sample(cfg, &mut out)?,
        Command::Intensity => intensity(cfg, &mut out)?,
        Command::Variance => variance(cfg, &mut out)?,
        Command::Clt => clt(cfg, &mut out)?,
        Command::Deviation => deviation(cfg, &mut out)?,
        Command::Hole => hole(cfg, &mut out)?,
        Command::MeanValue => mean_value(cfg, &mut out)?,
    }
    out.write(&cfg.output_dir)
}

/// Parse arguments and environment, then run.
pub fn run_cli(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::resolve(cli.command, &cli.flags, std::env::var(WORKERS_ENV).ok())?;
    run(&cfg)
}

/// Per-trial values in trial order; the first error aborts the run.
fn collect<T>(results: Vec<crate::Result<T>>) -> Result<Vec<T>, CliError> {
    Ok(results.into_iter().collect::<crate::Result<Vec<T>>>()?)
}

fn estimate_json(e: &ProbabilityEstimate) -> Value {
    json!({
        "successes": e.successes,
        "decided": e.decided,
        "uncertain": e.uncertain,
        "uncertain_fraction": e.uncertain_fraction(),
        "estimate": e.estimate,
        "ci_low": e.ci_low,
        "ci_high": e.ci_high,
        "heuristic": e.heuristic,
    })
}

fn kernel_check(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let checks = identity_suite(cfg.seed, cfg.trials as usize)?;
    let rows: Vec<Vec<Cell>> = checks
        .iter()
        .map(|c| {
            vec![
                Cell::S(c.name.clone()),
                Cell::U(c.samples as u64),
                Cell::F(c.max_error),
                Cell::F(c.tolerance),
                Cell::B(c.passed()),
            ]
        })
        .collect();
    out.csv("kernel_identities.csv", &["check", "samples", "max_error", "tolerance", "passed"], &rows)
}

fn sample(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let l = cfg.intensity()?;
    let eval: Vec<f64> = cfg.r.iter().map(|r| r + EVAL_RADIUS_MARGIN).collect();
    let sampler = GafSampler::certified(&l, &eval, cfg.trunc_tol)?;
    let samples = map_trials(cfg.trials, cfg.workers, |t| sampler.draw(cfg.seed, t))?;
    let mut rows = Vec::new();
    for s in &samples {
        for (i, (a, c)) in s.coefficients().iter().zip(s.scaled_coefficients()).enumerate() {
            let alpha = sampler
                .table()
                .multi_index(i)
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(";");
            rows.push(vec![
                Cell::U(s.trial_index()),
                Cell::U(i as u64),
                Cell::S(alpha),
                Cell::F(a.re),
                Cell::F(a.im),
                Cell::F(c.re),
                Cell::F(c.im),
            ]);
        }
    }
    out.csv(
        "samples.csv",
        &["trial", "flat_index", "alpha", "a_re", "a_im", "coef_re", "coef_im"],
        &rows,
    )?;
    if cfg.n == 1 {
        let roots = collect(map_trials(cfg.trials, cfg.workers, |t| polynomial_roots(&samples[t as usize]))?)?;
        let mut rows = Vec::new();
        for (t, zs) in roots.into_iter().enumerate() {
            let mut zs = zs;
            zs.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));
            for z in zs {
                rows.push(vec![Cell::U(t as u64), Cell::F(z.re), Cell::F(z.im), Cell::F(z.norm())]);
            }
        }
        out.csv("zeros.csv", &["trial", "re", "im", "modulus"], &rows)?;
        out.plot(
            "zeros.gp",
            "set size square\nset object 1 circle at 0,0 size 1\nplot 'zeros.csv' using 2:3 with points pt 7 ps 0.3\n",
        );
    }
    out.json(
        "sample_summary.json",
        json!({
            "degrees": sampler.degrees(),
            "coefficients_per_sample": sampler.table().len(),
            "eval_radius": sampler.eval_radius(),
            "tail_variance_bound": sampler.tail_variance_bound(),
        }),
    );
    Ok(())
}

fn value_rows(values: &[f64]) -> Vec<Vec<Cell>> {
    values
        .iter()
        .enumerate()
        .map(|(t, v)| vec![Cell::U(t as u64), Cell::F(*v)])
        .collect()
}

/// Sampler certified on the support of the bump plus the usual margin.
fn bump_sampler(cfg: &Config, l: &IntensityVector) -> Result<GafSampler, CliError> {
    let eval = vec![cfg.bump_radius + EVAL_RADIUS_MARGIN; cfg.n];
    Ok(GafSampler::certified(l, &eval, cfg.trunc_tol)?)
}

fn stokes_values(cfg: &Config, plan: &StokesPlan, sampler: &GafSampler) -> Result<Vec<f64>, CliError> {
    collect(map_trials(cfg.trials, cfg.workers, |t| plan.statistic(&sampler.draw(cfg.seed, t)))?)
}

fn intensity(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let l = cfg.intensity()?;
    let (route, expected, values, uncertain) = if cfg.n == 1 {
        let r = cfg.r[0];
        let sampler = GafSampler::certified(&l, &[r + EVAL_RADIUS_MARGIN], cfg.trunc_tol)?;
        let counts = collect(map_trials(cfg.trials, cfg.workers, |t| zero_count(&sampler.draw(cfg.seed, t), r))?)?;
        let values: Vec<f64> = counts.iter().map(|c| c.map_or(f64::NAN, |c| c as f64)).collect();
        let uncertain = counts.iter().filter(|c| c.is_none()).count() as u64;
        ("zero_count", l.get(0) * r * r / (1.0 - r * r), values, uncertain)
    } else {
        let psi = cfg.bump()?;
        let plan = StokesPlan::new(&psi, &l, StokesOptions::default_for(cfg.n), cfg.quad_rtol)?;
        let sampler = bump_sampler(cfg, &l)?;
        let values = stokes_values(cfg, &plan, &sampler)?;
        ("stokes", plan.expected(), values, 0)
    };
    let decided: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let res = ExperimentResult::from_values(&decided);
    let z = (res.mean() - expected) / res.standard_error();
    out.json(
        "intensity_report.json",
        json!({
            "route": route,
            "decided": res.trials(),
            "uncertain": uncertain,
            "mc_mean": res.mean(),
            "standard_error": res.standard_error(),
            "expected": expected,
            "z_score": z,
            "within_3se": z.abs() <= 3.0,
        }),
    );
    out.csv("intensity_trials.csv", &["trial", "value"], &value_rows(&values))
}

fn variance(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let l = cfg.intensity()?;
    let psi = cfg.bump()?;
    let plan = StokesPlan::new(&psi, &l, StokesOptions::default_for(cfg.n), cfg.quad_rtol)?;
    let sampler = bump_sampler(cfg, &l)?;
    let values = stokes_values(cfg, &plan, &sampler)?;
    let res = ExperimentResult::from_values(&values);
    let bip = bipotential_variance(&psi, &l, cfg.bipotential_options())?;
    let pred = predicted_variance(&psi, &l, cfg.quad_rtol)?;
    out.json(
        "variance_report.json",
        json!({
            "route": "stokes",
            "trials": res.trials(),
            "mc_mean": res.mean(),
            "expected": plan.expected(),
            "mc_variance": res.variance(),
            "mc_variance_se": res.variance_standard_error(),
            "bipotential_variance": bip,
            "predicted_variance": pred,
            "ratio_mc_to_bipotential": res.variance() / bip,
            "ratio_bipotential_to_predicted": bip / pred,
        }),
    );
    out.csv("variance_trials.csv", &["trial", "value"], &value_rows(&values))
}

fn clt(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let l = cfg.intensity()?;
    let psi = cfg.bump()?;
    let sampler = bump_sampler(cfg, &l)?;
    let (route, values, expected) = if cfg.n == 1 {
        let expected = crate::stats::expected_statistic(&psi, &l, cfg.quad_rtol)?;
        let values = collect(map_trials(cfg.trials, cfg.workers, |t| statistic_zeros(&sampler.draw(cfg.seed, t), &psi))?)?;
        ("zeros", values, expected)
    } else {
        let plan = StokesPlan::new(&psi, &l, StokesOptions::default_for(cfg.n), cfg.quad_rtol)?;
        let values = stokes_values(cfg, &plan, &sampler)?;
        ("stokes", values, plan.expected())
    };
    let bip = bipotential_variance(&psi, &l, cfg.bipotential_options())?;
    let sd = bip.sqrt();
    let normalized: Vec<f64> = values.iter().map(|v| (v - expected) / sd).collect();
    let ks = clt_diagnostic(&normalized)?;
    let res = ExperimentResult::from_values(&normalized);
    out.json(
        "clt_report.json",
        json!({
            "route": route,
            "trials": res.trials(),
            "expected": expected,
            "bipotential_variance": bip,
            "normalized_mean": res.mean(),
            "normalized_variance": res.variance(),
            "ks_statistic": ks.statistic,
            "p_value": ks.p_value,
        }),
    );
    let rows: Vec<Vec<Cell>> = values
        .iter()
        .zip(&normalized)
        .enumerate()
        .map(|(t, (v, z))| vec![Cell::U(t as u64), Cell::F(*v), Cell::F(*z)])
        .collect();
    out.csv("clt_values.csv", &["trial", "statistic", "normalized"], &rows)?;
    out.plot(
        "clt.gp",
        "bw = 0.25\nbin(x) = bw * floor(x / bw) + bw / 2\n\
         plot 'clt_values.csv' using (bin($3)):(1.0 / (bw * STATS_records)) smooth frequency with boxes, \
         exp(-x * x / 2) / sqrt(2 * pi) title 'N(0,1)'\n",
    );
    Ok(())
}

fn decreasing(estimates: &[ProbabilityEstimate]) -> bool {
    estimates.windows(2).all(|w| w[1].estimate < w[0].estimate)
}

fn deviation(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let u = PseudoHyperbolicPolydisk::centered_at_origin(vec![cfg.r[0]])?;
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &lv in &cfg.l_list {
        let l = IntensityVector::new(vec![lv])?;
        let e = deviation_probability_mc(&u, cfg.delta, &l, cfg.trials, cfg.seed, cfg.workers)?;
        rows.push(vec![
            Cell::F(lv),
            Cell::U(e.successes),
            Cell::U(e.decided),
            Cell::U(e.uncertain),
            Cell::F(e.estimate),
            Cell::F(e.ci_low),
            Cell::F(e.ci_high),
        ]);
        estimates.push(e);
    }
    out.csv(
        "deviation.csv",
        &["L", "deviations", "decided", "uncertain", "estimate", "ci_low", "ci_high"],
        &rows,
    )?;
    let separated = match (estimates.first(), estimates.last()) {
        (Some(a), Some(b)) if estimates.len() > 1 => a.separated_from(b),
        _ => false,
    };
    out.json(
        "deviation_summary.json",
        json!({
            "nu_volume": nu_volume(&u),
            "estimates": estimates.iter().map(estimate_json).collect::<Vec<_>>(),
            "decreasing": decreasing(&estimates),
            "first_last_separated": separated,
        }),
    );
    out.plot(
        "deviation.gp",
        "set logscale y\nplot 'deviation.csv' using 1:5:6:7 with yerrorlines\n",
    );
    Ok(())
}

fn hole(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let r = cfg.r[0];
    if cfg.r.iter().any(|x| *x != r) {
        return Err(config_err("`hole` uses the same radius in every coordinate"));
    }
    let opts = HoleOptions {
        kappa: cfg.kappa,
        truncation_tol: cfg.trunc_tol,
        workers: cfg.workers,
    };
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    let mut pairs = Vec::new();
    for &lv in &cfg.l_list {
        let l = IntensityVector::uniform(cfg.n, lv)?;
        let e = if cfg.n == 1 {
            hole_probability_mc(&l, r, cfg.trials, cfg.seed, opts)?
        } else {
            hole_probability_grid(&l, r, cfg.trials, cfg.seed, cfg.grid_density, opts)?
        };
        let x = if cfg.n == 1 { lv } else { l.exponent_scale() };
        let log_p = e.estimate.ln();
        rows.push(vec![
            Cell::F(lv),
            Cell::F(x),
            Cell::U(e.successes),
            Cell::U(e.decided),
            Cell::U(e.uncertain),
            Cell::F(e.uncertain_fraction()),
            Cell::F(e.estimate),
            Cell::F(e.ci_low),
            Cell::F(e.ci_high),
            Cell::F(log_p),
            Cell::B(e.heuristic),
        ]);
        pairs.push((l, log_p));
        estimates.push(e);
    }
    out.csv(
        "hole_decay.csv",
        &[
            "L",
            "x",
            "holes",
            "decided",
            "uncertain",
            "uncertain_fraction",
            "estimate",
            "ci_low",
            "ci_high",
            "log_p",
            "heuristic",
        ],
        &rows,
    )?;
    let fit = match decay_fit(&pairs) {
        Ok(f) => json!({ "beta": f.beta, "c": f.c, "x": f.x, "residuals": f.residuals }),
        Err(e @ Error::TooFewSamples { .. }) => json!({ "error": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let max_uncertain = estimates.iter().map(|e| e.uncertain_fraction()).fold(0.0, f64::max);
    out.json(
        "hole_fit.json",
        json!({
            "fit": fit,
            "strictly_decreasing": decreasing(&estimates),
            "max_uncertain_fraction": max_uncertain,
            "heuristic": cfg.n > 1,
        }),
    );
    out.plot(
        "hole.gp",
        "set logscale y\nset xlabel 'x'\nplot 'hole_decay.csv' using 2:7:8:9 with yerrorlines\n",
    );
    Ok(())
}

fn mean_value(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let l = cfg.intensity()?;
    let eval: Vec<f64> = cfg.r.iter().map(|r| r + EVAL_RADIUS_MARGIN).collect();
    let sampler = GafSampler::certified(&l, &eval, cfg.trunc_tol)?;
    let origin = PolydiskPoint::origin(cfg.n);
    let sides = collect(map_trials(cfg.trials, cfg.workers, |t| {
        mean_value_sides(&sampler.draw(cfg.seed, t), &origin, &cfg.r)
    })?)?;
    let rows: Vec<Vec<Cell>> = sides
        .iter()
        .enumerate()
        .map(|(t, s)| {
            vec![
                Cell::U(t as u64),
                Cell::F(s.lhs),
                Cell::F(s.rhs),
                Cell::F(s.gap()),
                Cell::B(s.holds()),
            ]
        })
        .collect();
    out.csv("mean_value.csv", &["trial", "lhs", "rhs", "gap", "holds"], &rows)?;
    let failures = sides.iter().filter(|s| !s.holds()).count();
    let min_gap = sides.iter().map(|s| s.gap()).fold(f64::INFINITY, f64::min);
    // ε(t) ≤ t²/(1-t²) on an interior grid of [0, 1).
    let mut epsilon_ok = true;
    for i in 1..1000 {
        let t = i as f64 / 1000.0;
        epsilon_ok &= epsilon_mean_value(t)? <= t * t / (1.0 - t * t);
    }
    out.json(
        "mean_value_report.json",
        json!({
            "trials": sides.len(),
            "failures": failures,
            "min_gap": min_gap,
            "tolerance": MEAN_VALUE_TOL,
            "epsilon_bound_holds": epsilon_ok,
        }),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_file_parsing() {
        let m = parse_config("# comment\nn = 2\n\nL = 5, 8  # trailing\n").unwrap();
        assert_eq!(m["n"], "2");
        assert_eq!(m["L"], "5, 8");
        assert!(matches!(parse_config("bogus = 1"), Err(CliError::Config(_))));
        assert!(parse_config("n = 1\nn = 2").is_err());
        assert!(parse_config("just words").is_err());
    }

    #[test]
    fn defaults_and_broadcast() {
        let c = Config::from_raw(Command::Hole, &raw(&[("workers", "2")])).unwrap();
        assert_eq!(c.trials, 1_000_000);
        assert_eq!(c.l_list, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.trunc_tol, 1e-24);
        let c = Config::from_raw(Command::Intensity, &raw(&[("n", "2"), ("L", "5,8"), ("r", "0.3")])).unwrap();
        assert_eq!(c.r, vec![0.3, 0.3]);
        assert_eq!(c.l, vec![5.0, 8.0]);
        assert!(Config::from_raw(Command::Intensity, &raw(&[("n", "3"), ("L", "5,8")])).is_err());
        assert!(Config::from_raw(Command::Intensity, &raw(&[("r", "1.2")])).is_err());
        assert!(Config::from_raw(Command::Deviation, &raw(&[("n", "2")])).is_err());
        assert!(Config::from_raw(Command::Sample, &raw(&[("output-dir", "/no/such/dir")])).is_err());
    }

    #[test]
    fn precedence_of_layers() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed = 7\nworkers = 3\ntrials = 10\n").unwrap();
        let mut flags = Flags {
            config: Some(file),
            ..Default::default()
        };
        let c = Config::resolve(Command::Sample, &flags, None).unwrap();
        assert_eq!((c.seed, c.workers, c.trials), (7, 3, 10));
        let c = Config::resolve(Command::Sample, &flags, Some("5".into())).unwrap();
        assert_eq!(c.workers, 5);
        flags.workers = Some("6".into());
        flags.seed = Some("9".into());
        let c = Config::resolve(Command::Sample, &flags, Some("5".into())).unwrap();
        assert_eq!((c.seed, c.workers), (9, 6));
    }

    #[test]
    fn echo_leaves_out_workers_and_directory() {
        let a = Config::from_raw(Command::Variance, &raw(&[("workers", "1")])).unwrap();
        let b = Config::from_raw(Command::Variance, &raw(&[("workers", "8"), ("output-dir", "/tmp")])).unwrap();
        assert_eq!(a.echo(), b.echo());
        assert_eq!(a.echo()["L"], "20.0");
    }

    #[test]
    fn csv_quoting_and_floats() {
        let c = Config::from_raw(Command::KernelCheck, &raw(&[("workers", "1")])).unwrap();
        let text = csv_text(
            &c,
            &["name", "x"],
            &[vec![Cell::S("a,\"b\"".into()), Cell::F(0.1)], vec![Cell::S("plain".into()), Cell::F(1e-300)]],
        )
        .unwrap();
        assert!(text.starts_with(&format!("# {VERSION}\n")));
        assert!(text.contains("\nname,x\n\"a,\"\"b\"\"\",0.1\nplain,1e-300\n"));
        assert!(!text.contains('\r'));
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-17] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(config_err("x").exit_code(), 2);
        assert_eq!(CliError::from(Error::NonConvergence("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).exit_code(), 2);
    }
}
