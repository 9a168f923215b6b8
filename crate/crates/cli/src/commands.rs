// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use polyseg::partition_solver::{estimate_noise_variance, lambda_rule, SolverConfig};
use polyseg::refinement::detect as run_detect;
use polyseg::segment_cost::{Engine, SegmentFit};
use polyseg::signal_model::{lower_bound_instance, LowerBoundParams};
use polyseg::simulation::{run_sweep, write_trials_csv, SweepReport};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::input::read_series;
use crate::scenario::{LowerBoundFile, Scenario};
use crate::{DetectArgs, LowerBoundArgs, RunArgs, SweepArgs};

fn sink(path: Option<&Path>, fallback: Box<dyn Write>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => fallback,
    })
}

fn write_json<T: Serialize>(
    value: &T,
    path: Option<&Path>,
    fallback: Box<dyn Write>,
) -> Result<()> {
    let mut out = sink(path, fallback)?;
    let target = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| "<stdout>".into());
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(&target, e.into()))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&target, e))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DetectSegment {
    start: usize,
    end: usize,
    /// Coefficients of `((x - center) / halfWidth)^p`.
    coefficients: Vec<f64>,
    center: f64,
    half_width: f64,
    rss: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DetectOutput {
    n: usize,
    r: usize,
    lambda: f64,
    k_hat: usize,
    initial: Vec<usize>,
    #[serde(rename = "final")]
    final_: Vec<usize>,
    objective: f64,
    segments: Vec<DetectSegment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_hat: Option<f64>,
}

fn check_fit(y: &[f64], fit: &SegmentFit) -> Result<()> {
    let n = y.len() as f64;
    let rss: f64 = fit
        .interval
        .offsets()
        .map(|i| (y[i] - fit.evaluate((i + 1) as f64 / n)).powi(2))
        .sum();
    let scale = fit
        .interval
        .offsets()
        .map(|i| y[i] * y[i])
        .sum::<f64>()
        .max(1.0);
    if (rss - fit.rss).abs() > 1e-8 * fit.rss.max(1e-6 * scale) {
        return Err(CliError::Invariant(format!(
            "segment [{}, {}) reports rss {} but its coefficients give {rss}",
            fit.interval.start, fit.interval.end, fit.rss
        )));
    }
    Ok(())
}

pub fn detect(args: DetectArgs) -> Result<()> {
    let y = read_series(&args.input)?;
    let n = y.len();
    let (lambda, sigma_hat) = match (args.lambda, args.lambda_c) {
        (Some(l), _) => (l, None),
        (None, Some(c)) => {
            let s2 = estimate_noise_variance(&y, args.degree)?;
            let lambda = lambda_rule(c, s2, n);
            log::info!("sigma_hat = {:.6}, lambda = {lambda:.6}", s2.sqrt());
            (lambda, Some(s2.sqrt()))
        }
        (None, None) => return Err(CliError::input("either --lambda or --lambda-c is required")),
    };
    let engine = if args.exact {
        Engine::Exact
    } else {
        args.engine.into()
    };
    let cfg = SolverConfig::new(lambda, args.degree)
        .with_min_seg_len(args.min_seg_len)
        .with_engine(engine);
    let res = run_detect(&y, &cfg)?;

    for fit in &res.segment_fits {
        check_fit(&y, fit)?;
    }
    let recomputed = res.recomputed_objective(lambda);
    if (recomputed - res.objective).abs() > 1e-8 * res.objective.abs().max(1.0) {
        return Err(CliError::Invariant(format!(
            "objective {} disagrees with its segments ({recomputed})",
            res.objective
        )));
    }

    let out = DetectOutput {
        n,
        r: args.degree,
        lambda,
        k_hat: res.k_hat,
        initial: res.initial_estimators,
        final_: res.final_estimators,
        objective: res.objective,
        segments: res
            .segment_fits
            .into_iter()
            .map(|f| DetectSegment {
                start: f.interval.start,
                end: f.interval.end,
                coefficients: f.coefficients,
                center: f.center,
                half_width: f.half_width,
                rss: f.rss,
            })
            .collect(),
        sigma_hat,
    };
    write_json(&out, args.output.as_deref(), Box::new(std::io::stdout()))
}

fn run_scenario(args: &RunArgs) -> Result<polyseg::simulation::SweepOutput> {
    let scenario = Scenario::load(&args.scenario)?;
    let mut cfg = scenario.sweep_config()?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    Ok(run_sweep(&cfg)?)
}

fn write_trials(args: &RunArgs, trials: &[polyseg::simulation::TrialReport]) -> Result<()> {
    let out = sink(args.output.as_deref(), Box::new(std::io::stdout()))?;
    write_trials_csv(out, trials, !args.no_timing)?;
    Ok(())
}

pub fn simulate(args: RunArgs) -> Result<()> {
    let out = run_scenario(&args)?;
    write_trials(&args, &out.trials)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SweepSummary<'a> {
    slope: Option<f64>,
    slope_std_error: Option<f64>,
    theoretical_exponent: Option<f64>,
    reliable: bool,
    report: &'a SweepReport,
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let out = run_scenario(&args.run)?;
    write_trials(&args.run, &out.trials)?;
    let fit = out.report.final_slope.as_ref();
    let summary = SweepSummary {
        slope: fit.map(|f| f.slope),
        slope_std_error: fit.and_then(|f| f.std_error),
        theoretical_exponent: out.report.theoretical_exponent,
        reliable: out.report.reliable,
        report: &out.report,
    };
    write_json(
        &summary,
        args.summary.as_deref(),
        Box::new(std::io::stderr()),
    )
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LowerBoundSummary {
    params: LowerBoundParams,
    spacing: usize,
    shift: usize,
    change_point0: Vec<usize>,
    change_point1: Vec<usize>,
    kl: f64,
    kl_closed_form: f64,
    bound: f64,
    bound_constant: Option<f64>,
    effective_xi: Option<f64>,
}

pub fn lowerbound(args: LowerBoundArgs) -> Result<()> {
    let params = match &args.params {
        Some(path) => LowerBoundFile::load(path)?.lowerbound,
        None => {
            let missing = |name: &str| CliError::input(format!("--{name} is required"));
            LowerBoundParams {
                kind: args.kind.ok_or_else(|| missing("kind"))?.into(),
                kappa: args.kappa.ok_or_else(|| missing("kappa"))?,
                sigma: args.sigma,
                degree: args.degree,
                n: args.n.ok_or_else(|| missing("n"))?,
                spacing: args.spacing,
                shift: args.shift,
                xi: args.xi,
            }
        }
    };
    let inst = lower_bound_instance(&params)?;
    if let Some(path) = &args.output {
        let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
        let io = |e| CliError::io(path, e);
        writeln!(w, "i,mean0,mean1").map_err(io)?;
        for (i, (a, b)) in inst.mean0.iter().zip(&inst.mean1).enumerate() {
            writeln!(w, "{},{a},{b}", i + 1).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    let summary = LowerBoundSummary {
        spacing: inst.spacing,
        shift: inst.shift,
        change_point0: inst.p0.change_points().to_vec(),
        change_point1: inst.p1.change_points().to_vec(),
        kl: inst.kl,
        kl_closed_form: inst.kl_closed_form,
        bound: inst.bound,
        bound_constant: inst.bound_constant,
        effective_xi: inst.effective_xi,
        params,
    };
    write_json(
        &summary,
        args.summary.as_deref(),
        Box::new(std::io::stdout()),
    )
}
