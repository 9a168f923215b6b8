// SPDX-License-Identifier: MIT OR Apache-2.0

//! Local rescan of each initial change point, and the full two-step detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition_solver::{initial_estimators, solve, DetectionResult, SolverConfig};
use crate::segment_cost::{fit_coefficients, window_rss_scan, MAX_DEGREE};

/// Relative tolerance under which two window objectives count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Search window `[s_k, e_k)` for the `k`-th change point (1-based `k`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementWindow {
    pub k: usize,
    pub start: usize,
    pub end: usize,
}

impl RefinementWindow {
    /// Candidate split points `t` with `start < t < end`.
    pub fn search_range(&self) -> std::ops::Range<usize> {
        (self.start + 1)..self.end.max(self.start + 1)
    }

    pub fn is_degenerate(&self) -> bool {
        self.end <= self.start + 1
    }
}

fn check_estimators(initial: &[usize], n: usize) -> Result<()> {
    let mut prev = 1;
    for &eta in initial {
        if eta <= prev || eta > n {
            return Err(Error::invalid_input(format!(
                "initial estimators {initial:?} must be strictly increasing within 2..={n}"
            )));
        }
        prev = eta;
    }
    Ok(())
}

/// Windows with midpoints rounded down: `s_k = floor((eta_{k-1} + eta_k) / 2)`,
/// `e_k = floor((eta_k + eta_{k+1}) / 2)`, `eta_0 = 1`, `eta_{K+1} = n + 1`.
pub fn refinement_windows(initial: &[usize], n: usize) -> Result<Vec<RefinementWindow>> {
    check_estimators(initial, n)?;
    let mut bounds = Vec::with_capacity(initial.len() + 2);
    bounds.push(1);
    bounds.extend_from_slice(initial);
    bounds.push(n + 1);
    Ok((1..=initial.len())
        .map(|k| RefinementWindow {
            k,
            start: (bounds[k - 1] + bounds[k]) / 2,
            end: (bounds[k] + bounds[k + 1]) / 2,
        })
        .collect())
}

/// Minimizer of `H([s, t)) + H([t, e))` over the window, smallest `t` on ties.
/// Returns `None` for a degenerate window.
pub fn refine_in_window(y: &[f64], degree: usize, window: RefinementWindow) -> Option<usize> {
    if window.is_degenerate() {
        return None;
    }
    let values = &y[window.start - 1..window.end - 1];
    let len = values.len();
    let forward = window_rss_scan(values, degree, false);
    let backward = window_rss_scan(values, degree, true);
    let floor = 1e-20 * values.iter().map(|v| v * v).sum::<f64>();

    let mut best = f64::INFINITY;
    let mut best_t = 0;
    for t in window.search_range() {
        let left = t - window.start;
        let v = forward[left] + backward[len - left];
        let tol = (TIE_RTOL * best.abs()).max(floor);
        if best_t == 0 || v < best - tol {
            best = v;
            best_t = t;
        }
    }
    Some(best_t)
}

/// Final estimators: one local rescan per initial estimator.
///
/// The output has the same length as the input. Degenerate windows keep the
/// initial value. If rescans of overlapping windows cross, the output is
/// sorted and a warning is logged.
pub fn refine_estimators(y: &[f64], degree: usize, initial: &[usize]) -> Result<Vec<usize>> {
    if degree > MAX_DEGREE {
        return Err(Error::config(format!(
            "degree {degree} exceeds ceiling {MAX_DEGREE}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("series contains non-finite values"));
    }
    let windows = refinement_windows(initial, y.len())?;
    let mut out: Vec<usize> = windows
        .iter()
        .zip(initial)
        .map(|(w, &eta)| {
            refine_in_window(y, degree, *w).unwrap_or_else(|| {
                log::warn!(
                    "window [{}, {}) for change point {} is degenerate; keeping {eta}",
                    w.start,
                    w.end,
                    w.k
                );
                eta
            })
        })
        .collect();
    if out.windows(2).any(|p| p[0] >= p[1]) {
        log::warn!("refined estimators {out:?} are out of order; sorting");
        out.sort_unstable();
    }
    Ok(out)
}

/// Solves the penalized partitioning problem, then refines each change point.
pub fn detect(y: &[f64], config: &SolverConfig) -> Result<DetectionResult> {
    let solution = solve(y, config)?;
    let initial = initial_estimators(&solution.partition);
    let refined = refine_estimators(y, config.degree, &initial)?;
    let segment_fits = solution
        .partition
        .segments()
        .into_iter()
        .map(|iv| fit_coefficients(y, iv, config.degree))
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionResult {
        k_hat: initial.len(),
        initial_estimators: initial,
        final_estimators: refined,
        objective: solution.objective,
        segment_fits,
    })
}
