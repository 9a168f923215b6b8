// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-point constructions behind the localization lower bounds.
//!
//! Each family yields a pair of single-change-point signals `P0`, `P1` whose
//! Gaussian product measures are hard to tell apart. Alongside the means we
//! report the exact KL divergence `sum_i (mu_i - nu_i)^2 / (2 sigma^2)`, the
//! same quantity as a closed-form sum over integer powers, and the upper
//! bound the construction is designed to satisfy.
//!
//! * [`LowerBoundKind::Shift`]: `P0` is `0` up to `Delta`, then
//!   `kappa ((i - Delta)/n)^r`; `P1` is `0` up to `Delta + delta`, then the
//!   same curve. The means differ on `delta` points. Requires
//!   `Delta <= n/4`, `delta <= Delta`.
//! * [`LowerBoundKind::Mirror`]: `P0` is `kappa ((i - Delta)/n)^r` up to
//!   `Delta`, then `0`; `P1` is `0` up to `n - Delta`, then
//!   `kappa ((i - n + Delta)/n)^r`, with
//!   `Delta = min(floor((xi n^{2r} sigma^2 / kappa^2)^{1/(2r+1)}), floor(n/3))`.
//! * [`LowerBoundKind::SmoothShift`]: like `Shift` but `P1` after
//!   `Delta + delta` is `kappa ((i - Delta - delta)/n)^r`, so both signals
//!   are `r - 1` times differentiable at their change point. Requires
//!   `r >= 1`, `Delta <= n/4`, `delta <= Delta`.

use serde::{Deserialize, Serialize};

use super::{binomial, PiecewiseSignal};
use crate::error::{Error, Result};
use crate::segment_cost::MAX_DEGREE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerBoundKind {
    #[serde(rename = "lemma1")]
    Shift,
    #[serde(rename = "lemma2")]
    Mirror,
    #[serde(rename = "lemma3")]
    SmoothShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LowerBoundParams {
    pub kind: LowerBoundKind,
    pub kappa: f64,
    pub sigma: f64,
    pub degree: usize,
    pub n: usize,
    /// `Delta`; ignored by `Mirror`, which derives it from `xi`.
    #[serde(default)]
    pub spacing: Option<usize>,
    /// `delta`; ignored by `Mirror`.
    #[serde(default)]
    pub shift: usize,
    /// `xi`; required by `Mirror`.
    #[serde(default)]
    pub xi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LowerBoundInstance {
    pub kind: LowerBoundKind,
    pub spacing: usize,
    pub shift: usize,
    pub p0: PiecewiseSignal,
    pub p1: PiecewiseSignal,
    pub mean0: Vec<f64>,
    pub mean1: Vec<f64>,
    /// Exact KL divergence from the two mean vectors.
    pub kl: f64,
    /// The same divergence as a closed-form sum over integer powers.
    pub kl_closed_form: f64,
    /// Upper bound on the KL divergence used by the construction.
    pub bound: f64,
    /// `Mirror` only: `bound * sigma^2 n^{2r} / (kappa^2 Delta^{2r+1})`.
    pub bound_constant: Option<f64>,
    /// `Mirror` only: `kappa^2 Delta^{2r+1} / (sigma^2 n^{2r})`, at most `xi`.
    pub effective_xi: Option<f64>,
}

/// KL divergence between `N(mu, sigma^2 I)` and `N(nu, sigma^2 I)`.
pub fn gaussian_kl(mu: &[f64], nu: &[f64], sigma: f64) -> f64 {
    mu.iter()
        .zip(nu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (2.0 * sigma * sigma)
}

/// Global-monomial coefficients of `kappa (x - c)^r`.
fn shifted_power(kappa: f64, c: f64, r: usize) -> Vec<f64> {
    (0..=r)
        .map(|j| kappa * binomial(r, j) * (-c).powi((r - j) as i32))
        .collect()
}

fn power_mean(n: usize, kappa: f64, origin: usize, r: usize, i: usize) -> f64 {
    kappa * ((i as f64 - origin as f64) / n as f64).powi(r as i32)
}

fn infeasible(msg: String) -> Error {
    Error::infeasible(msg)
}

fn power_sum(range: std::ops::RangeInclusive<usize>, p: usize) -> f64 {
    range.map(|i| (i as f64).powi(p as i32)).sum()
}

pub fn lower_bound_instance(params: &LowerBoundParams) -> Result<LowerBoundInstance> {
    let LowerBoundParams {
        kind,
        kappa,
        sigma,
        degree: r,
        n,
        ..
    } = *params;
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(infeasible(format!("kappa > 0 (got {kappa})")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(infeasible(format!("sigma > 0 (got {sigma})")));
    }
    if r > MAX_DEGREE {
        return Err(Error::config(format!(
            "degree {r} exceeds ceiling {MAX_DEGREE}"
        )));
    }
    let nf = n as f64;
    let scale = kappa * kappa / (2.0 * sigma * sigma * nf.powi(2 * r as i32));
    let zero = vec![0.0; r + 1];

    match kind {
        LowerBoundKind::Shift | LowerBoundKind::SmoothShift => {
            if kind == LowerBoundKind::SmoothShift && r == 0 {
                return Err(infeasible("r >= 1".into()));
            }
            let spacing = params
                .spacing
                .ok_or_else(|| infeasible("spacing (Delta) must be given".into()))?;
            let shift = params.shift;
            if spacing == 0 {
                return Err(infeasible("Delta >= 1".into()));
            }
            if 4 * spacing > n {
                return Err(infeasible(format!(
                    "Delta <= n/4 (Delta = {spacing}, n = {n})"
                )));
            }
            if shift > spacing {
                return Err(infeasible(format!(
                    "delta <= Delta (delta = {shift}, Delta = {spacing})"
                )));
            }
            let origin1 = if kind == LowerBoundKind::Shift {
                spacing
            } else {
                spacing + shift
            };
            let cut0 = spacing + 1;
            let cut1 = spacing + shift + 1;
            let p0 = PiecewiseSignal::new(
                n,
                r,
                vec![cut0],
                vec![zero.clone(), shifted_power(kappa, spacing as f64 / nf, r)],
            )?;
            let p1 = PiecewiseSignal::new(
                n,
                r,
                vec![cut1],
                vec![zero, shifted_power(kappa, origin1 as f64 / nf, r)],
            )?;
            let mean0: Vec<f64> = (1..=n)
                .map(|i| {
                    if i < cut0 {
                        0.0
                    } else {
                        power_mean(n, kappa, spacing, r, i)
                    }
                })
                .collect();
            let mean1: Vec<f64> = (1..=n)
                .map(|i| {
                    if i < cut1 {
                        0.0
                    } else {
                        power_mean(n, kappa, origin1, r, i)
                    }
                })
                .collect();
            let kl = gaussian_kl(&mean0, &mean1, sigma);
            let head = power_sum(1..=shift, 2 * r);
            let two_r1 = (2 * r + 1) as f64;
            let first_bound = kappa * kappa * ((shift + 1) as f64).powi(2 * r as i32 + 1)
                / (two_r1 * sigma * sigma * nf.powi(2 * r as i32));
            let (kl_closed_form, bound) = if kind == LowerBoundKind::Shift {
                (scale * head, first_bound)
            } else {
                let tail: f64 = (1..=n - spacing - shift)
                    .map(|i| {
                        let d = ((i + shift) as f64).powi(r as i32) - (i as f64).powi(r as i32);
                        d * d
                    })
                    .sum();
                let ratio = shift as f64 / nf;
                let second: f64 = (0..r)
                    .map(|l| {
                        let c = binomial(r, l);
                        c * c * nf / (2 * l + 1) as f64 * ratio.powi(2 * (r - l) as i32)
                    })
                    .sum::<f64>()
                    * r as f64
                    * kappa
                    * kappa
                    / (sigma * sigma);
                (scale * (head + tail), first_bound + second)
            };
            Ok(LowerBoundInstance {
                kind,
                spacing,
                shift,
                p0,
                p1,
                mean0,
                mean1,
                kl,
                kl_closed_form: kl_closed_form + 0.0,
                bound,
                bound_constant: None,
                effective_xi: None,
            })
        }
        LowerBoundKind::Mirror => {
            let xi = params
                .xi
                .ok_or_else(|| infeasible("xi must be given".into()))?;
            if !(xi.is_finite() && xi > 0.0) {
                return Err(infeasible(format!("xi > 0 (got {xi})")));
            }
            let raw = (xi * nf.powi(2 * r as i32) * sigma * sigma / (kappa * kappa))
                .powf(1.0 / (2 * r + 1) as f64);
            let spacing = (raw.floor() as usize).min(n / 3);
            if spacing == 0 {
                return Err(infeasible(format!(
                    "Delta = min(floor((xi n^(2r) sigma^2 / kappa^2)^(1/(2r+1))), floor(n/3)) >= 1 (got {raw:.3} before flooring, n = {n})"
                )));
            }
            let cut0 = spacing + 1;
            let cut1 = n - spacing + 1;
            let p0 = PiecewiseSignal::new(
                n,
                r,
                vec![cut0],
                vec![shifted_power(kappa, spacing as f64 / nf, r), zero.clone()],
            )?;
            let p1 = PiecewiseSignal::new(
                n,
                r,
                vec![cut1],
                vec![zero, shifted_power(kappa, (n - spacing) as f64 / nf, r)],
            )?;
            let mean0: Vec<f64> = (1..=n)
                .map(|i| {
                    if i < cut0 {
                        power_mean(n, kappa, spacing, r, i)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mean1: Vec<f64> = (1..=n)
                .map(|i| {
                    if i < cut1 {
                        0.0
                    } else {
                        power_mean(n, kappa, n - spacing, r, i)
                    }
                })
                .collect();
            let kl = gaussian_kl(&mean0, &mean1, sigma);
            // P0 contributes sum_{j=0}^{Delta-1} j^{2r} (with 0^0 = 1), P1 sum_{j=1}^{Delta} j^{2r}.
            let kl_closed_form =
                scale * (power_sum(0..=spacing - 1, 2 * r) + power_sum(1..=spacing, 2 * r));
            let two_r1 = (2 * r + 1) as f64;
            let bound = 2.0 * kappa * kappa * (((spacing + 1) as f64).powi(2 * r as i32 + 1) - 1.0)
                / (two_r1 * sigma * sigma * nf.powi(2 * r as i32));
            let signal = kappa * kappa * (spacing as f64).powi(2 * r as i32 + 1)
                / (sigma * sigma * nf.powi(2 * r as i32));
            Ok(LowerBoundInstance {
                kind,
                spacing,
                shift: 0,
                p0,
                p1,
                mean0,
                mean1,
                kl,
                kl_closed_form: kl_closed_form + 0.0,
                bound,
                bound_constant: Some(bound / signal),
                effective_xi: Some(signal),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::taylor_shift;

    fn params(kind: LowerBoundKind, r: usize, spacing: usize, shift: usize) -> LowerBoundParams {
        LowerBoundParams {
            kind,
            kappa: 1.0,
            sigma: 1.0,
            degree: r,
            n: 16,
            spacing: Some(spacing),
            shift,
            xi: None,
        }
    }

    #[test]
    fn zero_shift_gives_identical_measures() {
        for kind in [LowerBoundKind::Shift, LowerBoundKind::SmoothShift] {
            let inst = lower_bound_instance(&params(kind, 1, 4, 0)).unwrap();
            assert_eq!(inst.p0, inst.p1);
            assert_eq!(inst.kl, 0.0);
            assert_eq!(inst.kl_closed_form, 0.0);
        }
    }

    #[test]
    fn shift_step_example() {
        let inst = lower_bound_instance(&params(LowerBoundKind::Shift, 0, 4, 2)).unwrap();
        assert_eq!(inst.kl, 1.0);
        assert_eq!(inst.kl_closed_form, 1.0);
        assert_eq!(inst.p0.change_points(), &[5]);
        assert_eq!(inst.p1.change_points(), &[7]);
        assert_eq!(inst.mean0, inst.p0.evaluate_mean());
    }

    #[test]
    fn signals_match_direct_means() {
        for kind in [LowerBoundKind::Shift, LowerBoundKind::SmoothShift] {
            for r in 1..=3 {
                let mut p = params(kind, r, 20, 7);
                p.n = 100;
                p.kappa = 3.0;
                let inst = lower_bound_instance(&p).unwrap();
                for (a, b) in inst.p0.evaluate_mean().iter().zip(&inst.mean0) {
                    assert!((a - b).abs() < 1e-12);
                }
                for (a, b) in inst.p1.evaluate_mean().iter().zip(&inst.mean1) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!((inst.kl - inst.kl_closed_form).abs() <= 1e-12 * inst.kl);
                assert!(inst.kl <= inst.bound);
            }
        }
    }

    #[test]
    fn smooth_shift_keeps_lower_orders_continuous() {
        let mut p = params(LowerBoundKind::SmoothShift, 2, 20, 5);
        p.n = 100;
        let inst = lower_bound_instance(&p).unwrap();
        // The sampled curves leave zero at x = Delta/n (resp. (Delta+delta)/n),
        // one grid step before the first nonzero mean.
        for (sig, origin) in [(&inst.p0, 20.0), (&inst.p1, 25.0)] {
            let c = origin / 100.0;
            let left = taylor_shift(&sig.segments()[0], c);
            let right = taylor_shift(&sig.segments()[1], c);
            assert!((left[0] - right[0]).abs() < 1e-12);
            assert!((left[1] - right[1]).abs() < 1e-12);
            assert!((right[2] - left[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_spacing_and_bound() {
        let p = LowerBoundParams {
            kind: LowerBoundKind::Mirror,
            kappa: 2.0,
            sigma: 1.0,
            degree: 1,
            n: 300,
            spacing: None,
            shift: 0,
            xi: Some(0.5),
        };
        let inst = lower_bound_instance(&p).unwrap();
        let raw = (0.5 * 300f64.powi(2) / 4.0).powf(1.0 / 3.0);
        assert_eq!(inst.spacing, raw.floor() as usize);
        assert!(inst.kl <= inst.bound);
        assert!(inst.effective_xi.unwrap() <= 0.5);
        assert!((inst.kl - inst.kl_closed_form).abs() <= 1e-12 * inst.kl);
    }

    #[test]
    fn infeasible_parameters_name_the_constraint() {
        let err = lower_bound_instance(&params(LowerBoundKind::Shift, 0, 5, 2)).unwrap_err();
        assert!(err.to_string().contains("Delta <= n/4"), "{err}");
        let err = lower_bound_instance(&params(LowerBoundKind::Shift, 0, 4, 5)).unwrap_err();
        assert!(err.to_string().contains("delta <= Delta"), "{err}");
        let err = lower_bound_instance(&params(LowerBoundKind::SmoothShift, 0, 4, 1)).unwrap_err();
        assert!(err.to_string().contains("r >= 1"), "{err}");
        let mut p = params(LowerBoundKind::Mirror, 0, 0, 0);
        p.xi = Some(1e-6);
        assert!(matches!(
            lower_bound_instance(&p),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn kl_is_symmetric_and_scales() {
        let mut p = params(LowerBoundKind::Shift, 1, 4, 3);
        let a = lower_bound_instance(&p).unwrap();
        assert_eq!(
            gaussian_kl(&a.mean0, &a.mean1, 1.0),
            gaussian_kl(&a.mean1, &a.mean0, 1.0)
        );
        p.kappa = 3.0;
        p.sigma = 0.5;
        let b = lower_bound_instance(&p).unwrap();
        assert!((b.kl - a.kl * 36.0).abs() <= 1e-12 * b.kl);
    }
}
