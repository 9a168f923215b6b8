// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo harness: noise, trials, rate sweeps, the differencing
//! baseline and the projected-noise statistic.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition_solver::{diagnose_structure, difference, DetectionResult, SolverConfig};
use crate::refinement::detect;
use crate::segment_cost::{Engine, Interval, MomentTable, SegmentCost};
use crate::signal_model::{active_order, make_scenario, PiecewiseSignal, Template};

/// Floor applied to zero medians before taking logarithms in the slope fit.
pub const ZERO_MEDIAN_FLOOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// `N(0, sigma^2)`.
    #[default]
    Gaussian,
    /// `+-sigma` with equal probability.
    Rademacher,
    /// `U(-sigma sqrt 3, sigma sqrt 3)`, variance `sigma^2`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `rep` at length `n` under a master seed.
pub fn trial_seed(master: u64, n: usize, rep: usize) -> u64 {
    splitmix(splitmix(master ^ splitmix(n as u64)) ^ rep as u64)
}

pub fn generate_noise(spec: &NoiseSpec, n: usize) -> Result<Vec<f64>> {
    if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
        return Err(Error::config(format!(
            "noise sigma must be finite and nonnegative, got {}",
            spec.sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.sigma;
    let half_width = s * 3f64.sqrt();
    Ok((0..n)
        .map(|_| match spec.kind {
            NoiseKind::Gaussian => s * rng.sample::<f64, _>(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.random_bool(0.5) {
                    s
                } else {
                    -s
                }
            }
            NoiseKind::Uniform => rng.random_range(-1.0..=1.0) * half_width,
        })
        .collect())
}

/// One-to-one matching of estimates to true change points, greedy by
/// distance (ties: smaller truth index, then smaller estimate index).
/// Returns `(truth index, estimate index)` pairs sorted by truth index.
pub fn match_estimates(truth: &[usize], estimates: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(k, &t)| {
            estimates
                .iter()
                .enumerate()
                .map(move |(j, &e)| (t.abs_diff(e), k, j))
        })
        .collect();
    pairs.sort_unstable();
    let mut used_truth = vec![false; truth.len()];
    let mut used_est = vec![false; estimates.len()];
    let mut out = Vec::with_capacity(truth.len().min(estimates.len()));
    for (_, k, j) in pairs {
        if !used_truth[k] && !used_est[j] {
            used_truth[k] = true;
            used_est[j] = true;
            out.push((k, j));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialReport {
    pub n: usize,
    pub rep: usize,
    pub k_hat: usize,
    pub k_correct: bool,
    /// `|eta_tilde - eta|` per matched true change point, in truth order.
    pub initial_errors: Vec<usize>,
    /// `|eta_hat - eta|` for the same matching.
    pub final_errors: Vec<usize>,
    pub max_initial_error: Option<usize>,
    pub max_final_error: Option<usize>,
    /// Structural violations of the solver partition against the truth.
    pub structure_violations: usize,
    pub runtime_ms: f64,
}

/// Adds noise to the signal, runs the two-step detector and scores it.
pub fn run_trial(
    signal: &PiecewiseSignal,
    noise: &NoiseSpec,
    config: &SolverConfig,
) -> Result<TrialReport> {
    let start = Instant::now();
    let n = signal.n();
    let eps = generate_noise(noise, n)?;
    let y: Vec<f64> = signal
        .evaluate_mean()
        .into_iter()
        .zip(eps)
        .map(|(m, e)| m + e)
        .collect();
    let result = detect(&y, config)?;
    Ok(score(
        signal,
        &result,
        0,
        start.elapsed().as_secs_f64() * 1e3,
    ))
}

fn score(
    signal: &PiecewiseSignal,
    result: &DetectionResult,
    rep: usize,
    runtime_ms: f64,
) -> TrialReport {
    let truth = signal.change_points();
    let matching = match_estimates(truth, &result.initial_estimators);
    let initial_errors: Vec<usize> = matching
        .iter()
        .map(|&(k, j)| truth[k].abs_diff(result.initial_estimators[j]))
        .collect();
    let final_errors: Vec<usize> = matching
        .iter()
        .map(|&(k, j)| truth[k].abs_diff(result.final_estimators[j]))
        .collect();
    let partition = crate::partition_solver::Partition {
        n: signal.n(),
        change_points: result.initial_estimators.clone(),
    };
    let structure = diagnose_structure(truth, &partition, signal.min_spacing());
    TrialReport {
        n: signal.n(),
        rep,
        k_hat: result.k_hat,
        k_correct: result.k_hat == truth.len(),
        max_initial_error: initial_errors.iter().copied().max(),
        max_final_error: final_errors.iter().copied().max(),
        initial_errors,
        final_errors,
        structure_violations: structure.violations(),
        runtime_ms,
    }
}

/// How the penalty is set for each series length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LambdaRule {
    /// The same penalty at every `n`.
    Fixed(f64),
    /// `lambda = c sigma^2 ln n` with the true noise scale.
    NoiseScaled { c: f64 },
}

impl LambdaRule {
    pub fn lambda(&self, n: usize, sigma: f64) -> f64 {
        match *self {
            LambdaRule::Fixed(l) => l,
            LambdaRule::NoiseScaled { c } => c * sigma * sigma * (n as f64).ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub template: Template,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub master_seed: u64,
    pub lambda: LambdaRule,
    /// Fitted degree `r`.
    pub degree: usize,
    pub min_seg_len: usize,
    pub engine: Engine,
    /// Multiplier of `lambda` when deciding which jump orders are strong.
    pub c_signal: f64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn new(template: Template, n_grid: Vec<usize>, reps: usize) -> Self {
        let degree = template.degree();
        Self {
            template,
            n_grid,
            reps,
            noise: NoiseKind::Gaussian,
            sigma: 1.0,
            master_seed: 0,
            lambda: LambdaRule::NoiseScaled { c: 4.0 },
            degree,
            min_seg_len: 1,
            engine: Engine::Moment,
            c_signal: 1.0,
            threads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::config("nGrid must not be empty"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("nGrid must be strictly increasing"));
        }
        if self.reps == 0 {
            return Err(Error::config("reps must be at least 1"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma must be finite and nonnegative"));
        }
        if self.reps < 30 {
            log::warn!("{} reps per cell; at least 30 are recommended", self.reps);
        }
        Ok(())
    }

    fn solver(&self, n: usize) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda.lambda(n, self.sigma),
            degree: self.degree,
            min_seg_len: self.min_seg_len,
            engine: self.engine,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepCell {
    pub n: usize,
    pub lambda: f64,
    pub trials: usize,
    pub k_correct: usize,
    /// Median over `k_correct` trials of the largest initial error.
    pub median_initial_error: Option<f64>,
    /// Median over `k_correct` trials of the largest final error.
    pub median_final_error: Option<f64>,
    /// At least half of the trials recovered the right number of changes.
    pub reliable: bool,
    pub structure_violation_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` with fewer than three grid points.
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepReport {
    pub template: Template,
    pub degree: usize,
    pub sigma: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub n_grid: Vec<usize>,
    pub cells: Vec<SweepCell>,
    /// Log-log fit of median final error against `n`.
    pub final_slope: Option<SlopeFit>,
    /// Log-log fit of median initial error against `n`.
    pub initial_slope: Option<SlopeFit>,
    /// Active order `r_k` per true change point at the largest `n`.
    pub active_orders: Vec<Option<usize>>,
    /// `2 r_1 / (2 r_1 + 1)` for the first change point.
    pub theoretical_exponent: Option<f64>,
    /// Every cell is reliable.
    pub reliable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub trials: Vec<TrialReport>,
    pub report: SweepReport,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    Some(if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    })
}

/// Ordinary least squares of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let m = x.len();
    if m < 2 || y.len() != m {
        return None;
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_error = (m > 2).then(|| {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (ssr / (mf - 2.0) / sxx).sqrt()
    });
    Some(SlopeFit {
        slope,
        intercept,
        std_error,
    })
}

fn log_log_fit(cells: &[SweepCell], pick: impl Fn(&SweepCell) -> Option<f64>) -> Option<SlopeFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter_map(|c| pick(c).map(|m| ((c.n as f64).ln(), m.max(ZERO_MEDIAN_FLOOR).ln())))
        .unzip();
    if x.len() < cells.len() {
        return None;
    }
    ols_slope(&x, &y)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `reps` trials at every grid length and summarizes them.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let signals: Vec<PiecewiseSignal> = config
        .n_grid
        .iter()
        .map(|&n| make_scenario(&config.template, n))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..signals.len())
        .flat_map(|g| (0..config.reps).map(move |rep| (g, rep)))
        .collect();
    let trials: Vec<TrialReport> = with_pool(config.threads, || {
        jobs.par_iter()
            .map(|&(g, rep)| {
                let signal = &signals[g];
                let n = signal.n();
                let noise = NoiseSpec {
                    kind: config.noise,
                    sigma: config.sigma,
                    seed: trial_seed(config.master_seed, n, rep),
                };
                let mut report = run_trial(signal, &noise, &config.solver(n))?;
                report.rep = rep;
                Ok(report)
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let cells: Vec<SweepCell> = config
        .n_grid
        .iter()
        .map(|&n| {
            let cell: Vec<&TrialReport> = trials.iter().filter(|t| t.n == n).collect();
            let good: Vec<&&TrialReport> = cell.iter().filter(|t| t.k_correct).collect();
            let mut init: Vec<f64> = good
                .iter()
                .filter_map(|t| t.max_initial_error.map(|e| e as f64))
                .collect();
            let mut fin: Vec<f64> = good
                .iter()
                .filter_map(|t| t.max_final_error.map(|e| e as f64))
                .collect();
            let violations = cell.iter().filter(|t| t.structure_violations > 0).count();
            SweepCell {
                n,
                lambda: config.lambda.lambda(n, config.sigma),
                trials: cell.len(),
                k_correct: good.len(),
                median_initial_error: median(&mut init),
                median_final_error: median(&mut fin),
                reliable: 2 * good.len() >= cell.len(),
                structure_violation_rate: violations as f64 / cell.len() as f64,
            }
        })
        .collect();

    let largest = signals.last().expect("grid is nonempty");
    let lambda = config.lambda.lambda(largest.n(), config.sigma);
    let active_orders: Vec<Option<usize>> = largest
        .jump_profiles()
        .iter()
        .map(|p| active_order(p, lambda, config.c_signal, config.sigma).order)
        .collect();
    let theoretical_exponent = active_orders
        .first()
        .copied()
        .flatten()
        .map(|r| 2.0 * r as f64 / (2.0 * r as f64 + 1.0));

    let reliable = cells.iter().all(|c| c.reliable);
    if !reliable {
        log::warn!("sweep flagged unreliable: some cell has fewer than 50% trials with the right change-point count");
    }
    let report = SweepReport {
        template: config.template.clone(),
        degree: config.degree,
        sigma: config.sigma,
        reps: config.reps,
        master_seed: config.master_seed,
        n_grid: config.n_grid.clone(),
        final_slope: log_log_fit(&cells, |c| c.median_final_error),
        initial_slope: log_log_fit(&cells, |c| c.median_initial_error),
        cells,
        active_orders,
        theoretical_exponent,
        reliable,
    };
    Ok(SweepOutput { trials, report })
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes trial rows as CSV with columns
/// `n, rep, kHat, kCorrect, maxInitialErr, maxFinalErr, runtimeMs`.
/// With `timing` off the runtime column is left empty so the output depends
/// only on the inputs.
pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialReport], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::invalid_input(format!("cannot write CSV: {e}"));
    w.write_record([
        "n",
        "rep",
        "kHat",
        "kCorrect",
        "maxInitialErr",
        "maxFinalErr",
        "runtimeMs",
    ])
    .map_err(io)?;
    for t in trials {
        w.write_record([
            t.n.to_string(),
            t.rep.to_string(),
            t.k_hat.to_string(),
            t.k_correct.to_string(),
            opt_cell(t.max_initial_error),
            opt_cell(t.max_final_error),
            if timing {
                format!("{:.3}", t.runtime_ms)
            } else {
                String::new()
            },
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::invalid_input(format!("cannot write CSV: {e}")))?;
    Ok(())
}

/// Detection on the `r`-fold differenced series with a piecewise-constant
/// fit. Estimators are mapped back to the original indexing by adding
/// `ceil(r/2)`; `objective` and `segment_fits` refer to the differenced
/// series of length `n - r`.
pub fn differencing_baseline(
    y: &[f64],
    degree: usize,
    config: &SolverConfig,
) -> Result<DetectionResult> {
    if y.len() <= degree {
        return Err(Error::invalid_input(format!(
            "differencing {degree} times needs more than {degree} values"
        )));
    }
    let d = difference(y, degree);
    let cfg = SolverConfig {
        degree: 0,
        ..*config
    };
    let mut result = detect(&d, &cfg)?;
    let offset = degree.div_ceil(2);
    let n = y.len();
    let map = |v: &mut Vec<usize>| {
        for e in v.iter_mut() {
            *e = (*e + offset).min(n);
        }
        v.dedup();
    };
    map(&mut result.initial_estimators);
    map(&mut result.final_estimators);
    result.k_hat = result.initial_estimators.len();
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NoiseEventReport {
    pub n: usize,
    pub degree: usize,
    pub sigma: f64,
    /// `max_I ||P_I eps_I||^2` per repetition.
    pub maxima: Vec<f64>,
    /// `maxima / (sigma^2 ln n)`; zero when `sigma = 0`.
    pub ratios: Vec<f64>,
    pub median_ratio: f64,
    pub q90_ratio: f64,
    pub q99_ratio: f64,
}

/// Largest projected noise energy over all intervals.
pub fn max_projected_energy(eps: &[f64], degree: usize) -> Result<f64> {
    let table = MomentTable::new(eps, degree)?;
    let n = eps.len();
    let mut best: f64 = 0.0;
    for s in 1..=n {
        for e in (s + 1)..=(n + 1) {
            let iv = Interval { start: s, end: e };
            let total = table.square_sum(e - 1) - table.square_sum(s - 1);
            best = best.max(total - table.rss(iv));
        }
    }
    Ok(best)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo distribution of `max_I ||P_I eps_I||^2 / (sigma^2 ln n)`.
pub fn noise_event_check(
    spec: &NoiseSpec,
    n: usize,
    degree: usize,
    reps: usize,
) -> Result<NoiseEventReport> {
    if n > 2000 {
        return Err(Error::Refused(format!(
            "the statistic visits all O(n^2) intervals; n = {n} exceeds 2000"
        )));
    }
    if n < 2 || reps == 0 {
        return Err(Error::invalid_input("need n >= 2 and reps >= 1"));
    }
    let maxima: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let noise = NoiseSpec {
                seed: trial_seed(spec.seed, n, rep),
                ..*spec
            };
            max_projected_energy(&generate_noise(&noise, n)?, degree)
        })
        .collect::<Result<_>>()?;
    let scale = spec.sigma * spec.sigma * (n as f64).ln();
    let ratios: Vec<f64> = maxima
        .iter()
        .map(|m| if scale > 0.0 { m / scale } else { 0.0 })
        .collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(NoiseEventReport {
        n,
        degree,
        sigma: spec.sigma,
        median_ratio: quantile(&sorted, 0.5),
        q90_ratio: quantile(&sorted, 0.9),
        q99_ratio: quantile(&sorted, 0.99),
        maxima,
        ratios,
    })
}
