// SPDX-License-Identifier: MIT OR Apache-2.0

//! Canned signal families used by the simulation harness and the CLI.

use serde::{Deserialize, Serialize};

use super::lower_bound::{lower_bound_instance, LowerBoundKind, LowerBoundParams};
use super::{binomial, PiecewiseSignal};
use crate::error::{Error, Result};
use crate::segment_cost::MAX_DEGREE;

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

/// A single jump of a mixed-order signal: the polynomial gains
/// `size * (x - eta/n)^order` at the change point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jump {
    pub order: usize,
    pub size: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    #[default]
    P0,
    P1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LowerBoundTemplate {
    pub kind: LowerBoundKind,
    pub kappa: f64,
    pub sigma: f64,
    pub degree: usize,
    #[serde(default)]
    pub spacing: Option<usize>,
    #[serde(default)]
    pub shift: usize,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub hypothesis: Hypothesis,
}

/// Signal families. Change points are placed relative to `n`, so one
/// template describes a signal at every series length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "template", content = "params", rename_all = "camelCase")]
pub enum Template {
    /// Piecewise constant with the given levels and equally spaced change
    /// points `1 + floor(k n / (K + 1))`.
    #[serde(rename_all = "camelCase")]
    StepLadder {
        levels: Vec<f64>,
        #[serde(default)]
        degree: usize,
    },
    /// Continuous piecewise linear: the slope changes by `kappa` at
    /// `1 + floor(location n)`.
    #[serde(rename_all = "camelCase")]
    LinearKink {
        kappa: f64,
        #[serde(default = "half")]
        location: f64,
        #[serde(default)]
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// Piecewise linear with a level shift of `jump` and a common slope.
    #[serde(rename_all = "camelCase")]
    LinearJump {
        jump: f64,
        #[serde(default = "half")]
        location: f64,
        #[serde(default)]
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// Equally spaced change points, each adding a single-order term.
    #[serde(rename_all = "camelCase")]
    MixedOrder { degree: usize, jumps: Vec<Jump> },
    /// One side of a lower-bound pair (the instance's own `n` is replaced).
    LowerBound(LowerBoundTemplate),
    /// Alternating levels `0, kappa, 0, ...` with `count` change points and
    /// `kappa^2 Delta = strength sqrt(count) sigma^2`, between the single and
    /// the `count`-fold detection threshold.
    #[serde(rename_all = "camelCase")]
    GapRegime {
        count: usize,
        sigma: f64,
        #[serde(default = "one")]
        strength: f64,
    },
}

impl Template {
    /// Polynomial degree of the signals this template produces.
    pub fn degree(&self) -> usize {
        match self {
            Template::StepLadder { degree, .. } => *degree,
            Template::LinearKink { .. } | Template::LinearJump { .. } => 1,
            Template::MixedOrder { degree, .. } => *degree,
            Template::LowerBound(t) => t.degree,
            Template::GapRegime { .. } => 0,
        }
    }
}

fn equally_spaced(n: usize, count: usize) -> Result<Vec<usize>> {
    let cps: Vec<usize> = (1..=count).map(|k| 1 + k * n / (count + 1)).collect();
    let ok = cps.windows(2).all(|w| w[0] < w[1]) && cps.iter().all(|&c| (2..=n).contains(&c));
    if !ok {
        return Err(Error::invalid_input(format!(
            "n = {n} is too short for {count} change points"
        )));
    }
    Ok(cps)
}

fn location_index(n: usize, location: f64) -> Result<usize> {
    if !(location > 0.0 && location < 1.0) {
        return Err(Error::invalid_input(format!(
            "location must lie in (0, 1), got {location}"
        )));
    }
    let eta = 1 + (location * n as f64).floor() as usize;
    if !(2..=n).contains(&eta) {
        return Err(Error::invalid_input(format!(
            "location {location} gives no interior change point for n = {n}"
        )));
    }
    Ok(eta)
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::config(format!(
            "degree {degree} exceeds ceiling {MAX_DEGREE}"
        )));
    }
    Ok(())
}

/// Builds the template's signal at length `n`.
pub fn make_scenario(template: &Template, n: usize) -> Result<PiecewiseSignal> {
    match template {
        Template::StepLadder { levels, degree } => {
            check_degree(*degree)?;
            if levels.is_empty() {
                return Err(Error::invalid_input("stepLadder needs at least one level"));
            }
            let cps = equally_spaced(n, levels.len() - 1)?;
            let segments = levels
                .iter()
                .map(|&l| {
                    let mut c = vec![0.0; degree + 1];
                    c[0] = l;
                    c
                })
                .collect();
            PiecewiseSignal::new(n, *degree, cps, segments)
        }
        Template::LinearKink {
            kappa,
            location,
            slope,
            intercept,
        } => {
            let eta = location_index(n, *location)?;
            let c = eta as f64 / n as f64;
            PiecewiseSignal::new(
                n,
                1,
                vec![eta],
                vec![
                    vec![*intercept, *slope],
                    vec![intercept - kappa * c, slope + kappa],
                ],
            )
        }
        Template::LinearJump {
            jump,
            location,
            slope,
            intercept,
        } => {
            let eta = location_index(n, *location)?;
            PiecewiseSignal::new(
                n,
                1,
                vec![eta],
                vec![vec![*intercept, *slope], vec![intercept + jump, *slope]],
            )
        }
        Template::MixedOrder { degree, jumps } => {
            check_degree(*degree)?;
            let cps = equally_spaced(n, jumps.len())?;
            let mut current = vec![0.0; degree + 1];
            let mut segments = vec![current.clone()];
            for (jump, &eta) in jumps.iter().zip(&cps) {
                if jump.order > *degree {
                    return Err(Error::invalid_input(format!(
                        "jump order {} exceeds degree {degree}",
                        jump.order
                    )));
                }
                let c = eta as f64 / n as f64;
                let l = jump.order;
                for (j, coef) in current.iter_mut().enumerate().take(l + 1) {
                    *coef += jump.size * binomial(l, j) * (-c).powi((l - j) as i32);
                }
                segments.push(current.clone());
            }
            PiecewiseSignal::new(n, *degree, cps, segments)
        }
        Template::LowerBound(t) => {
            let inst = lower_bound_instance(&LowerBoundParams {
                kind: t.kind,
                kappa: t.kappa,
                sigma: t.sigma,
                degree: t.degree,
                n,
                spacing: t.spacing,
                shift: t.shift,
                xi: t.xi,
            })?;
            Ok(match t.hypothesis {
                Hypothesis::P0 => inst.p0,
                Hypothesis::P1 => inst.p1,
            })
        }
        Template::GapRegime {
            count,
            sigma,
            strength,
        } => {
            if *count == 0 {
                return Err(Error::invalid_input("gapRegime needs count >= 1"));
            }
            let cps = equally_spaced(n, *count)?;
            let delta = n / (count + 1);
            let kappa = (strength * (*count as f64).sqrt() * sigma * sigma / delta as f64).sqrt();
            let segments = (0..=*count)
                .map(|k| vec![if k % 2 == 0 { 0.0 } else { kappa }])
                .collect();
            PiecewiseSignal::new(n, 0, cps, segments)
        }
    }
}
