// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ground-truth piecewise-polynomial mean functions on the grid `i/n`.

pub mod lower_bound;
pub mod scenario;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment_cost::MAX_DEGREE;

pub use lower_bound::{lower_bound_instance, LowerBoundInstance, LowerBoundKind, LowerBoundParams};
pub use scenario::{make_scenario, Template};

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Coefficients of `p(x + c)` given those of `p(x)` (both in increasing
/// powers), i.e. the expansion of `p` around `c`.
pub fn taylor_shift(coefficients: &[f64], c: f64) -> Vec<f64> {
    let dim = coefficients.len();
    (0..dim)
        .map(|l| {
            let mut acc = 0.0;
            let mut cp = 1.0;
            for j in l..dim {
                acc += binomial(j, l) * coefficients[j] * cp;
                cp *= c;
            }
            acc
        })
        .collect()
}

/// Horner evaluation of `sum_j c_j x^j`.
pub fn eval_poly(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Piecewise polynomial on `[0, 1]` sampled at `x = i/n`, `i = 1..=n`.
///
/// Change point `eta_k` is the first index of segment `k` (0-based segments);
/// each segment stores `r + 1` coefficients of `x^0, ..., x^r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PiecewiseSignal {
    n: usize,
    r: usize,
    change_points: Vec<usize>,
    segments: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawSignal {
    n: usize,
    r: usize,
    change_points: Vec<usize>,
    segments: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for PiecewiseSignal {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSignal::deserialize(de)?;
        PiecewiseSignal::new(raw.n, raw.r, raw.change_points, raw.segments)
            .map_err(serde::de::Error::custom)
    }
}

impl PiecewiseSignal {
    pub fn new(
        n: usize,
        degree: usize,
        change_points: Vec<usize>,
        segments: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_input("signal length must be positive"));
        }
        if degree > MAX_DEGREE {
            return Err(Error::config(format!(
                "degree {degree} exceeds ceiling {MAX_DEGREE}"
            )));
        }
        let mut prev = 1;
        for &cp in &change_points {
            if cp <= prev || cp > n {
                return Err(Error::invalid_input(format!(
                    "change points {change_points:?} must be strictly increasing within 2..={n}"
                )));
            }
            prev = cp;
        }
        if segments.len() != change_points.len() + 1 {
            return Err(Error::invalid_input(format!(
                "{} change points need {} segments, got {}",
                change_points.len(),
                change_points.len() + 1,
                segments.len()
            )));
        }
        for (j, seg) in segments.iter().enumerate() {
            if seg.len() != degree + 1 {
                return Err(Error::invalid_input(format!(
                    "segment {j} has {} coefficients, expected {}",
                    seg.len(),
                    degree + 1
                )));
            }
            if seg.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid_input(format!(
                    "segment {j} has non-finite coefficients"
                )));
            }
        }
        for (k, pair) in segments.windows(2).enumerate() {
            if pair[0] == pair[1] {
                return Err(Error::invalid_input(format!(
                    "segments {k} and {} carry the same polynomial, so {} is not a change point",
                    k + 1,
                    change_points[k]
                )));
            }
        }
        Ok(Self {
            n,
            r: degree,
            change_points,
            segments,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.r
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn segments(&self) -> &[Vec<f64>] {
        &self.segments
    }

    pub fn num_change_points(&self) -> usize {
        self.change_points.len()
    }

    /// Segment owning index `i` (1-based).
    fn segment_of(&self, i: usize) -> usize {
        self.change_points.partition_point(|&cp| cp <= i)
    }

    /// `f(i/n)` for `i = 1..=n`.
    pub fn evaluate_mean(&self) -> Vec<f64> {
        let nf = self.n as f64;
        let mut seg = 0;
        (1..=self.n)
            .map(|i| {
                while seg < self.change_points.len() && self.change_points[seg] <= i {
                    seg += 1;
                }
                eval_poly(&self.segments[seg], i as f64 / nf)
            })
            .collect()
    }

    pub fn value_at(&self, i: usize) -> f64 {
        eval_poly(&self.segments[self.segment_of(i)], i as f64 / self.n as f64)
    }

    fn bound(&self, k: usize) -> usize {
        match k {
            0 => 1,
            k if k > self.change_points.len() => self.n + 1,
            k => self.change_points[k - 1],
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.change_points.len() {
            return Err(Error::invalid_input(format!(
                "change point index {k} outside 1..={}",
                self.change_points.len()
            )));
        }
        Ok(())
    }

    /// Coefficients `(a_{k,l}, b_{k,l})` of the two polynomials adjacent to
    /// `eta_k` in powers of `x - eta_k / n`.
    pub fn reparameterize_at(&self, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_k(k)?;
        let c = self.change_points[k - 1] as f64 / self.n as f64;
        Ok((
            taylor_shift(&self.segments[k - 1], c),
            taylor_shift(&self.segments[k], c),
        ))
    }

    /// Spacing `Delta_k = min(eta_k - eta_{k-1}, eta_{k+1} - eta_k)` with
    /// `eta_0 = 1` and `eta_{K+1} = n + 1`.
    pub fn spacing(&self, k: usize) -> Result<usize> {
        self.check_k(k)?;
        let here = self.bound(k);
        Ok((here - self.bound(k - 1)).min(self.bound(k + 1) - here))
    }

    /// Smallest spacing over all change points (`n` when there are none).
    pub fn min_spacing(&self) -> usize {
        (1..=self.change_points.len())
            .map(|k| self.spacing(k).expect("index in range"))
            .min()
            .unwrap_or(self.n)
    }

    pub fn jump_profile(&self, k: usize) -> Result<JumpProfile> {
        let (a, b) = self.reparameterize_at(k)?;
        let delta = self.spacing(k)?;
        let nf = self.n as f64;
        let kappa: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
        let rho: Vec<f64> = kappa
            .iter()
            .enumerate()
            .map(|(l, kl)| kl * kl * (delta as f64).powi(2 * l as i32 + 1) / nf.powi(2 * l as i32))
            .collect();
        let (dominant_order, rho_max) = rho.iter().enumerate().fold(
            (0, rho[0]),
            |(bl, bv), (l, &v)| if v > bv { (l, v) } else { (bl, bv) },
        );
        Ok(JumpProfile {
            k,
            n: self.n,
            delta,
            a,
            b,
            kappa,
            rho,
            rho_max,
            dominant_order,
        })
    }

    pub fn jump_profiles(&self) -> Vec<JumpProfile> {
        (1..=self.change_points.len())
            .map(|k| self.jump_profile(k).expect("index in range"))
            .collect()
    }
}

/// Jump sizes and signal strengths at one change point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JumpProfile {
    pub k: usize,
    pub n: usize,
    pub delta: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `kappa_{k,l} = |a_{k,l} - b_{k,l}|`.
    pub kappa: Vec<f64>,
    /// `rho_{k,l} = kappa_{k,l}^2 Delta_k^{2l+1} n^{-2l}`.
    pub rho: Vec<f64>,
    pub rho_max: f64,
    /// Smallest `l` attaining `rho_max`.
    pub dominant_order: usize,
}

/// Orders strong enough to be detected at a change point and the one that
/// yields the sharpest localization rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActiveOrder {
    pub k: usize,
    pub threshold: f64,
    /// Orders `l` with `rho_{k,l} >= threshold`.
    pub strong_orders: Vec<usize>,
    /// Smallest minimizer over `strong_orders` of
    /// `(sigma^2 ln n / rho_{k,l})^{1/(2l+1)}`; `None` if no order is strong.
    pub order: Option<usize>,
    pub kappa: Option<f64>,
    /// `(sigma^2 ln n / rho_{k,order})^{1/(2 order + 1)}`.
    pub rate_term: Option<f64>,
}

/// `(sigma^2 ln n / rho)^{1/(2l+1)}`.
pub fn rate_term(rho: f64, l: usize, sigma: f64, n: usize) -> f64 {
    (sigma * sigma * (n as f64).ln() / rho).powf(1.0 / (2 * l + 1) as f64)
}

pub fn active_order(profile: &JumpProfile, lambda: f64, c_signal: f64, sigma: f64) -> ActiveOrder {
    let threshold = c_signal * lambda;
    let strong_orders: Vec<usize> = (0..profile.rho.len())
        .filter(|&l| profile.rho[l] > 0.0 && profile.rho[l] >= threshold)
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for &l in &strong_orders {
        let term = rate_term(profile.rho[l], l, sigma, profile.n);
        if best.is_none_or(|(_, t)| term < t) {
            best = Some((l, term));
        }
    }
    ActiveOrder {
        k: profile.k,
        threshold,
        strong_orders,
        order: best.map(|(l, _)| l),
        kappa: best.map(|(l, _)| profile.kappa[l]),
        rate_term: best.map(|(_, t)| t),
    }
}
