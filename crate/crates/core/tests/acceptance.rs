// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use polyseg::partition_solver::{
    brute_force_min_partition, partition_objective, solve_min_partition, SolverConfig,
};
use polyseg::refinement::detect;
use polyseg::segment_cost::{
    q_gain, segment_rss, segment_rss_exact, ExactCost, Interval, MomentTable, SegmentCost,
};
use polyseg::signal_model::{
    lower_bound_instance, taylor_shift, LowerBoundKind, LowerBoundParams, PiecewiseSignal, Template,
};
use polyseg::simulation::{run_sweep, write_trials_csv, LambdaRule, SweepConfig, SweepOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let spent = start.elapsed();
    ensure(spent <= budget, || {
        format!("took {spent:.1?}, budget {budget:?}")
    })
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let cases = 600;
    for case in 0..cases {
        let r = rng.random_range(0..=2);
        let m = if rng.random_bool(0.5) { 1 } else { r + 1 };
        let n = rng.random_range(m..=12);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect();
        let lambda = rng.random_range(0.01..=20.0);
        let cfg = SolverConfig::new(lambda, r).with_min_seg_len(m);
        let dp = solve_min_partition(&y, &cfg).map_err(|e| e.to_string())?;
        let bf = brute_force_min_partition(&y, &cfg).map_err(|e| e.to_string())?;
        let exact = ExactCost::new(&y, r).map_err(|e| e.to_string())?;
        let g_dp = partition_objective(&exact, &dp, lambda);
        let g_bf = partition_objective(&exact, &bf, lambda);
        ensure((g_dp - g_bf).abs() <= 1e-9 * g_bf.abs().max(1e-300), || {
            format!("case {case}: objective {g_dp} vs {g_bf}")
        })?;
        ensure(dp == bf, || {
            format!(
                "case {case}: partition {:?} vs {:?}",
                dp.change_points, bf.change_points
            )
        })?;
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!("{cases} instances agree"))
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
        1 => {
            let offset = rng.random_range(-100.0..100.0);
            (0..n)
                .map(|_| offset + rng.random_range(-1.0..1.0))
                .collect()
        }
        _ => {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            (1..=n)
                .map(|i| {
                    let x = i as f64 / n as f64;
                    c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x + rng.random_range(-0.1..0.1)
                })
                .collect()
        }
    }
}

fn engine_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let n = match rng.random_range(0..3) {
            0 => rng.random_range(2..=1000),
            1 => rng.random_range(1000..=20_000),
            _ => rng.random_range(20_000..=100_000),
        };
        let y = random_series(&mut rng, n);
        for r in 0..=3 {
            let table = MomentTable::new(&y, r).map_err(|e| e.to_string())?;
            for _ in 0..25 {
                let a = rng.random_range(1..=n);
                let b = rng.random_range(1..=n);
                let iv = Interval {
                    start: a.min(b),
                    end: a.max(b) + 1,
                };
                let fast = segment_rss(&table, iv);
                let exact = segment_rss_exact(&y, iv, r);
                let rel = if exact == 0.0 {
                    fast.abs()
                } else {
                    (fast - exact).abs() / exact
                };
                worst = worst.max(rel);
                ensure(rel <= 1e-8, || {
                    format!("n={n} r={r} {iv:?}: moment {fast} exact {exact} (rel {rel:e})")
                })?;
                checked += 1;
            }
        }
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!("{checked} cases, worst relative error {worst:.2e}"))
}

/// A random signal with `K` change points whose adjacent polynomials differ
/// in at least one order.
fn random_signal(rng: &mut ChaCha8Rng) -> PiecewiseSignal {
    let r = rng.random_range(0..=3);
    let k = rng.random_range(1..=5);
    let min_gap = 2 * (r + 2);
    let gaps: Vec<usize> = (0..=k)
        .map(|_| rng.random_range(min_gap..=min_gap + 60))
        .collect();
    let n: usize = gaps.iter().sum();
    let mut cps = Vec::with_capacity(k);
    let mut at = 1;
    for g in &gaps[..k] {
        at += g;
        cps.push(at);
    }
    let mut current: Vec<f64> = (0..=r).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut segments = vec![current.clone()];
    for &eta in &cps {
        let mut diff = vec![0.0; r + 1];
        let order = rng.random_range(0..=r);
        let size = rng.random_range(1.0..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        diff[order] = size;
        if rng.random_bool(0.3) {
            for d in diff.iter_mut() {
                *d += rng.random_range(-1.0..1.0);
            }
        }
        let global = taylor_shift(&diff, -(eta as f64) / n as f64);
        current.iter_mut().zip(&global).for_each(|(c, d)| *c += d);
        segments.push(current.clone());
    }
    PiecewiseSignal::new(n, r, cps, segments).expect("valid random signal")
}

fn noiseless_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let trials = 100;
    for trial in 0..trials {
        let signal = random_signal(&mut rng);
        let r = signal.degree();
        ensure(
            signal.jump_profiles().iter().all(|p| p.rho_max > 0.0),
            || format!("trial {trial}: some change point has zero jump"),
        )?;
        let y = signal.evaluate_mean();
        let table = MomentTable::new(&y, r).map_err(|e| e.to_string())?;
        let mut bounds = vec![1];
        bounds.extend_from_slice(signal.change_points());
        bounds.push(signal.n() + 1);
        let min_gain = bounds
            .windows(3)
            .map(|w| {
                q_gain(
                    &table,
                    Interval {
                        start: w[0],
                        end: w[1],
                    },
                    Interval {
                        start: w[1],
                        end: w[2],
                    },
                )
                .expect("contiguous")
            })
            .fold(f64::INFINITY, f64::min);
        let lambda = 0.01 * min_gain;
        let res = detect(&y, &SolverConfig::new(lambda, r)).map_err(|e| e.to_string())?;
        ensure(res.final_estimators == signal.change_points(), || {
            format!(
                "trial {trial} (n={}, r={r}, lambda={lambda:.3e}): truth {:?}, initial {:?}, final {:?}",
                signal.n(),
                signal.change_points(),
                res.initial_estimators,
                res.final_estimators
            )
        })?;
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!("{trials} signals recovered exactly"))
}

const GRID: [usize; 5] = [512, 1024, 2048, 4096, 8192];

fn rate_sweep(template: Template, seed: u64) -> Result<(SweepOutput, Duration), String> {
    let start = Instant::now();
    let mut cfg = SweepConfig::new(template, GRID.to_vec(), 50);
    cfg.sigma = 1.0;
    cfg.master_seed = seed;
    cfg.lambda = LambdaRule::NoiseScaled { c: 4.0 };
    let out = run_sweep(&cfg).map_err(|e| e.to_string())?;
    Ok((out, start.elapsed()))
}

fn kink_template() -> Template {
    Template::LinearKink {
        kappa: 10.0,
        location: 0.5,
        slope: 0.0,
        intercept: 0.0,
    }
}

fn jump_template() -> Template {
    Template::LinearJump {
        jump: 1.0,
        location: 0.5,
        slope: 0.0,
        intercept: 0.0,
    }
}

fn describe_cells(out: &SweepOutput) -> String {
    out.report
        .cells
        .iter()
        .map(|c| {
            format!(
                "n={} ok={}/{} med init={:?} final={:?}",
                c.n, c.k_correct, c.trials, c.median_initial_error, c.median_final_error
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn rate_exponent(sweep: &Result<(SweepOutput, Duration), String>, target: f64) -> Outcome {
    let (out, spent) = sweep.as_ref().map_err(Clone::clone)?;
    ensure(*spent <= Duration::from_secs(15 * 60), || {
        format!("took {spent:.1?}")
    })?;
    ensure(out.report.reliable, || {
        format!("unreliable sweep: {}", describe_cells(out))
    })?;
    let fit = out
        .report
        .final_slope
        .as_ref()
        .ok_or_else(|| format!("no slope: {}", describe_cells(out)))?;
    let se = fit.std_error.unwrap_or(f64::NAN);
    ensure((fit.slope - target).abs() <= 0.15, || {
        format!(
            "slope {:.3} (se {se:.3}) vs {target:.3}; {}",
            fit.slope,
            describe_cells(out)
        )
    })?;
    Ok(format!(
        "slope {:.3} (se {se:.3}), target {target:.3}, theory {:?}, {spent:.1?}",
        fit.slope, out.report.theoretical_exponent
    ))
}

fn refinement_dominance(sweeps: &[&Result<(SweepOutput, Duration), String>]) -> Outcome {
    let mut cells = 0;
    for sweep in sweeps {
        let (out, _) = sweep.as_ref().map_err(Clone::clone)?;
        for c in &out.report.cells {
            let (init, fin) = c
                .median_initial_error
                .zip(c.median_final_error)
                .ok_or_else(|| format!("n={}: no trial recovered the count", c.n))?;
            ensure(fin <= init, || {
                format!("n={}: final median {fin} > initial {init}", c.n)
            })?;
            cells += 1;
        }
    }
    Ok(format!("{cells} cells"))
}

fn additivity_and_gain() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let cases = 10_000;
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n = rng.random_range(2..=200);
        let r = rng.random_range(0..=3);
        let y: Vec<f64> = if rng.random_bool(0.5) {
            (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
        } else {
            let mut rs = ChaCha8Rng::seed_from_u64(rng.random());
            random_series(&mut rs, n)
        };
        let table = MomentTable::new(&y, r).map_err(|e| e.to_string())?;
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        let (s, e) = (a.min(b), a.max(b) + 1);
        let whole = Interval { start: s, end: e };
        let pieces = rng.random_range(1..=(e - s).min(6));
        let mut cuts: Vec<usize> = (1..pieces).map(|_| rng.random_range(s + 1..e)).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut bounds = vec![s];
        bounds.extend(cuts);
        bounds.push(e);
        let parts: f64 = bounds
            .windows(2)
            .map(|w| {
                table.rss(Interval {
                    start: w[0],
                    end: w[1],
                })
            })
            .sum();
        let h = table.rss(whole);
        let scale = table.rss(whole).max(1.0);
        ensure(h >= parts - 1e-8 * scale, || {
            format!("case {case}: H(I) = {h} < sum {parts}")
        })?;
        if e - s >= 2 {
            let t = rng.random_range(s + 1..e);
            let g = q_gain(
                &table,
                Interval { start: s, end: t },
                Interval { start: t, end: e },
            )
            .map_err(|e| e.to_string())?;
            worst = worst.min(g);
            ensure(g >= -1e-8, || format!("case {case}: gain {g}"))?;
        }
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!("{cases} cases, smallest gain {worst:.2e}"))
}

fn lower_bound_checks() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for degree in 0..=3 {
        for &n in &[64usize, 200, 1000] {
            for &kappa in &[0.3, 1.0, 4.0] {
                for &sigma in &[0.5, 1.0, 2.0] {
                    let spacing = n / 5;
                    for shift in [0, 1, 3, spacing / 2, spacing] {
                        let inst = lower_bound_instance(&LowerBoundParams {
                            kind: LowerBoundKind::Shift,
                            kappa,
                            sigma,
                            degree,
                            n,
                            spacing: Some(spacing),
                            shift,
                            xi: None,
                        })
                        .map_err(|e| e.to_string())?;
                        let tol = 1e-12 * inst.kl_closed_form.max(f64::MIN_POSITIVE);
                        ensure((inst.kl - inst.kl_closed_form).abs() <= tol, || {
                            format!(
                                "shift r={degree} n={n} delta={shift}: KL {} vs closed form {}",
                                inst.kl, inst.kl_closed_form
                            )
                        })?;
                        if shift == 0 {
                            ensure(inst.kl == 0.0, || {
                                format!("zero shift gives KL {}", inst.kl)
                            })?;
                        }
                        checked += 1;
                    }
                    for &xi in &[0.1, 1.0, 10.0] {
                        let inst = match lower_bound_instance(&LowerBoundParams {
                            kind: LowerBoundKind::Mirror,
                            kappa,
                            sigma,
                            degree,
                            n,
                            spacing: None,
                            shift: 0,
                            xi: Some(xi),
                        }) {
                            Ok(inst) => inst,
                            Err(polyseg::error::Error::Infeasible { .. }) => continue,
                            Err(e) => return Err(e.to_string()),
                        };
                        ensure(inst.kl <= inst.bound * (1.0 + 1e-12), || {
                            format!(
                                "mirror r={degree} n={n} xi={xi}: KL {} > bound {}",
                                inst.kl, inst.bound
                            )
                        })?;
                        let tol = 1e-12 * inst.kl_closed_form;
                        ensure((inst.kl - inst.kl_closed_form).abs() <= tol, || {
                            format!("mirror closed form {} vs {}", inst.kl_closed_form, inst.kl)
                        })?;
                        checked += 1;
                    }
                }
            }
        }
    }
    within_budget(start, Duration::from_secs(1))?;
    Ok(format!("{checked} instances"))
}

fn sweep_csv(threads: usize) -> Result<Vec<u8>, String> {
    let mut cfg = SweepConfig::new(kink_template(), vec![256, 512, 1024], 12);
    cfg.master_seed = 0xdead_beef;
    cfg.threads = Some(threads);
    let out = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_trials_csv(&mut buf, &out.trials, false).map_err(|e| e.to_string())?;
    buf.extend(serde_json::to_vec(&out.report).map_err(|e| e.to_string())?);
    Ok(buf)
}

fn determinism() -> Outcome {
    let first = sweep_csv(1)?;
    let runs = [sweep_csv(1)?, sweep_csv(4)?, sweep_csv(4)?];
    for (i, run) in runs.iter().enumerate() {
        ensure(run == &first, || {
            format!("run {} differs from the first", i + 2)
        })?;
    }
    Ok(format!("4 runs, {} bytes each", first.len()))
}

fn run(label: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let spent = start.elapsed();
    match outcome {
        Ok(detail) => {
            println!("PASS  {label}: {detail} [{spent:.1?}]");
            true
        }
        Err(reason) => {
            println!("FAIL  {label}: {reason} [{spent:.1?}]");
            false
        }
    }
}

fn main() {
    let mut passed = Vec::new();
    passed.push(run("1 oracle equivalence", oracle_equivalence));
    passed.push(run("2 engine agreement", engine_agreement));
    passed.push(run("3 noiseless exact recovery", noiseless_recovery));
    let kink = rate_sweep(kink_template(), 0x5eed_0004);
    passed.push(run("4 rate exponent, continuous piecewise-linear", || {
        rate_exponent(&kink, 2.0 / 3.0)
    }));
    let jump = rate_sweep(jump_template(), 0x5eed_0005);
    passed.push(run("5 rate exponent, pure mean shift", || {
        rate_exponent(&jump, 0.0)
    }));
    passed.push(run("6 refinement dominance", || {
        refinement_dominance(&[&kink, &jump])
    }));
    passed.push(run("7 additivity and gain", additivity_and_gain));
    passed.push(run("8 lower-bound instances", lower_bound_checks));
    passed.push(run("9 determinism", determinism));
    let failed = passed.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        passed.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
