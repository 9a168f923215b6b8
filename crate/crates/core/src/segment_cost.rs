// SPDX-License-Identifier: MIT OR Apache-2.0

//! Polynomial least-squares segment cost `H(y, I)` and merge gain `Q(y; I, J)`.
//!
//! Two engines compute the same quantity:
//!
//! * [`MomentTable`]: prefix sums of powers of the design points `i/n` and of
//!   the data, kept in double-double precision. A segment cost is assembled in
//!   O(r^3): cross moments are re-expanded binomially into a basis centered at
//!   the segment midpoint and scaled to `[-1, 1]`, while the Gram matrix of
//!   that basis depends only on the segment length and is read from a
//!   length-indexed table of exact even moments. A cheap double-precision
//!   pass is tried first and accepted only when its running error bound is
//!   below `1e-10` relative; otherwise the double-double pass is used.
//! * [`ExactCost`] / [`segment_rss_exact`]: Householder QR of the explicit
//!   `|I| x (r+1)` design matrix on the centered-scaled points.

use serde::{Deserialize, Serialize};

use crate::dd::{Accumulator, Dd};
use crate::error::{Error, Result};
use crate::linalg::{self, GivensAccumulator, Square, MAX_DIM};

/// Highest polynomial degree accepted by the engines.
pub const MAX_DEGREE: usize = MAX_DIM - 1;

const EPS: f64 = f64::EPSILON;
const FAST_PATH_RTOL: f64 = 1e-10;

/// Half-open, 1-based index range `[start, end)` over a length-`n` series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start < 1 || start >= end {
            return Err(Error::invalid_input(format!(
                "interval [{start}, {end}) must satisfy 1 <= start < end"
            )));
        }
        Ok(Self { start, end })
    }

    /// Like [`Interval::new`], additionally checking `end <= n + 1`.
    pub fn within(start: usize, end: usize, n: usize) -> Result<Self> {
        let iv = Self::new(start, end)?;
        if end > n + 1 {
            return Err(Error::invalid_input(format!(
                "interval [{start}, {end}) exceeds series length {n}"
            )));
        }
        Ok(iv)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Zero-based slice bounds.
    pub fn offsets(&self) -> std::ops::Range<usize> {
        (self.start - 1)..(self.end - 1)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    /// Union of two contiguous intervals, `None` if `self.end != other.start`.
    pub fn join(&self, other: &Interval) -> Option<Interval> {
        (self.end == other.start).then_some(Interval {
            start: self.start,
            end: other.end,
        })
    }
}

/// Which engine evaluates `H(y, I)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Moment,
    Exact,
}

/// Anything that can evaluate the degree-`r` residual sum of squares of a
/// segment of a fixed series.
pub trait SegmentCost: Sync {
    /// Series length `n`.
    fn series_len(&self) -> usize;

    fn degree(&self) -> usize;

    /// `H(y, I)`. Panics if `interval` does not lie within `[1, n + 1)`.
    fn rss(&self, interval: Interval) -> f64;
}

const fn binomial_table() -> [[f64; 2 * MAX_DIM]; 2 * MAX_DIM] {
    let mut t = [[0.0; 2 * MAX_DIM]; 2 * MAX_DIM];
    let mut i = 0;
    while i < 2 * MAX_DIM {
        t[i][0] = 1.0;
        let mut j = 1;
        while j <= i {
            t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
            j += 1;
        }
        i += 1;
    }
    t
}

pub(crate) static BINOM: [[f64; 2 * MAX_DIM]; 2 * MAX_DIM] = binomial_table();

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::config(format!(
            "degree {degree} exceeds the supported ceiling {MAX_DEGREE}"
        )));
    }
    Ok(())
}

fn check_finite(y: &[f64]) -> Result<()> {
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid_input(format!(
            "non-finite value {v} at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Prefix moments of a series for O(r^3) segment costs.
///
/// Immutable after construction; safe to share across threads.
#[derive(Clone, Debug)]
pub struct MomentTable {
    n: usize,
    degree: usize,
    y: Vec<f64>,
    /// Rows of width `degree + 2`: cross sums for p = 0..=degree, then the
    /// square sum. `fast_lo` holds the compensation terms.
    fast_hi: Vec<f64>,
    fast_lo: Vec<f64>,
    /// Rows of width `2 * degree + 1`.
    power_hi: Vec<f64>,
    power_lo: Vec<f64>,
    /// Rows of width `degree + 1`, indexed by segment length `L`: the scaled
    /// even moments `sum_j u_j^{2k}` of `L` equispaced points on `[-1, 1]`.
    even_moments: Vec<f64>,
    even_moments_lo: Vec<f64>,
}

/// Builds the prefix-moment table for `y` and polynomial degree `degree`.
pub fn build_moment_table(y: &[f64], degree: usize) -> Result<MomentTable> {
    MomentTable::new(y, degree)
}

impl MomentTable {
    pub fn new(y: &[f64], degree: usize) -> Result<Self> {
        check_degree(degree)?;
        if y.is_empty() {
            return Err(Error::invalid_input(
                "series must contain at least one value",
            ));
        }
        check_finite(y)?;
        let n = y.len();
        let dim = degree + 1;
        let fw = dim + 1;
        let pw = 2 * degree + 1;

        let mut fast_hi = vec![0.0; (n + 1) * fw];
        let mut fast_lo = vec![0.0; (n + 1) * fw];
        let mut power_hi = vec![0.0; (n + 1) * pw];
        let mut power_lo = vec![0.0; (n + 1) * pw];
        let mut cross = vec![Accumulator::default(); dim];
        let mut square = Accumulator::default();
        let mut power = vec![Accumulator::default(); pw];
        let nf = n as f64;
        for (idx, &yi) in y.iter().enumerate() {
            let t = idx + 1;
            let x = Dd::ratio(t as f64, nf);
            let mut xp = Dd::from_f64(1.0);
            for (p, acc) in power.iter_mut().enumerate() {
                if p < dim {
                    cross[p].add(xp.mul_f64(yi));
                }
                acc.add(xp);
                xp = xp * x;
            }
            square.add(Dd::from_f64(yi).mul_f64(yi));

            let row = t * fw;
            for p in 0..dim {
                let v = cross[p].value();
                fast_hi[row + p] = v.hi;
                fast_lo[row + p] = v.lo;
            }
            let v = square.value();
            fast_hi[row + dim] = v.hi;
            fast_lo[row + dim] = v.lo;
            let row = t * pw;
            for (p, acc) in power.iter().enumerate() {
                let v = acc.value();
                power_hi[row + p] = v.hi;
                power_lo[row + p] = v.lo;
            }
        }

        let (even_moments, even_moments_lo) = even_moment_table(n, degree);
        Ok(Self {
            n,
            degree,
            y: y.to_vec(),
            fast_hi,
            fast_lo,
            power_hi,
            power_lo,
            even_moments,
            even_moments_lo,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Prefix sum of `(i/n)^p` over `i = 1..=t`.
    pub fn power_sum(&self, p: usize, t: usize) -> f64 {
        assert!(p <= 2 * self.degree && t <= self.n);
        let k = t * (2 * self.degree + 1) + p;
        self.power_hi[k] + self.power_lo[k]
    }

    /// Prefix sum of `(i/n)^p * y_i` over `i = 1..=t`.
    pub fn cross_sum(&self, p: usize, t: usize) -> f64 {
        assert!(p <= self.degree && t <= self.n);
        let k = t * (self.degree + 2) + p;
        self.fast_hi[k] + self.fast_lo[k]
    }

    /// Prefix sum of `y_i^2` over `i = 1..=t`.
    pub fn square_sum(&self, t: usize) -> f64 {
        assert!(t <= self.n);
        let k = t * (self.degree + 2) + self.degree + 1;
        self.fast_hi[k] + self.fast_lo[k]
    }

    #[inline]
    fn rss_fast(&self, a: usize, b: usize) -> Option<f64> {
        match self.degree {
            0 => self.rss_fast_dim::<1>(a, b),
            1 => self.rss_fast_dim::<2>(a, b),
            2 => self.rss_fast_dim::<3>(a, b),
            3 => self.rss_fast_dim::<4>(a, b),
            4 => self.rss_fast_dim::<5>(a, b),
            5 => self.rss_fast_dim::<6>(a, b),
            6 => self.rss_fast_dim::<7>(a, b),
            7 => self.rss_fast_dim::<8>(a, b),
            _ => self.rss_fast_dim::<9>(a, b),
        }
    }

    /// Double-precision evaluation with a running error bound; `None` when
    /// the bound exceeds the acceptance tolerance.
    #[inline(always)]
    fn rss_fast_dim<const D: usize>(&self, a: usize, b: usize) -> Option<f64> {
        let fw = D + 1;
        let len = b - a;
        let ra = &self.fast_hi[a * fw..a * fw + fw];
        let rb = &self.fast_hi[b * fw..b * fw + fw];

        let sq_a = ra[D];
        let sq_b = rb[D];
        let s = sq_b - sq_a;
        if s <= 0.0 {
            return None;
        }
        let err_s = 2.0 * EPS * (sq_a.abs() + sq_b.abs()) + EPS * s;

        let nf = self.n as f64;
        let c = (a + 1 + b) as f64 * 0.5 / nf;
        let ih = 2.0 * nf / (len - 1) as f64;
        // Rounding of c and 1/h perturbs the basis the cross moments are taken in.
        let shift_err = if D > 1 {
            2.0 * EPS * (c * ih + 1.0) * (len as f64 * s).sqrt()
        } else {
            0.0
        };

        let mut d = [0.0; D];
        let mut ed = [0.0; D];
        for p in 0..D {
            d[p] = rb[p] - ra[p];
            ed[p] = 2.0 * EPS * (rb[p].abs() + ra[p].abs());
        }
        let mut negc = [1.0; D];
        for k in 1..D {
            negc[k] = negc[k - 1] * -c;
        }
        let mut bvec = [0.0; D];
        let mut eb = [0.0; D];
        let mut ihp = 1.0;
        for p in 0..D {
            let mut t = 0.0;
            let mut tabs = 0.0;
            let mut terr = 0.0;
            for j in 0..=p {
                let w = BINOM[p][j] * negc[p - j];
                t += w * d[j];
                tabs += (w * d[j]).abs();
                terr += w.abs() * ed[j];
            }
            bvec[p] = t * ihp;
            eb[p] = (terr + (p + 2) as f64 * EPS * tabs) * ihp + p as f64 * shift_err;
            ihp *= ih;
        }

        let m = &self.even_moments[len * D..len * D + D];
        let mut g = [[0.0; D]; D];
        for p in 0..D {
            for q in 0..D {
                if (p + q) % 2 == 0 {
                    g[p][q] = m[(p + q) / 2];
                }
            }
        }
        // Cholesky of the checkerboard Gram matrix.
        let mut l = [[0.0; D]; D];
        for j in 0..D {
            let mut dj = g[j][j];
            for k in 0..j {
                dj -= l[j][k] * l[j][k];
            }
            if dj.is_nan() || dj <= 1e-13 * g[j][j] {
                return None;
            }
            let dj = dj.sqrt();
            l[j][j] = dj;
            for i in (j + 1)..D {
                let mut v = g[i][j];
                for k in 0..j {
                    v -= l[i][k] * l[j][k];
                }
                l[i][j] = v / dj;
            }
        }
        let mut beta = [0.0; D];
        for i in 0..D {
            let mut v = bvec[i];
            for k in 0..i {
                v -= l[i][k] * beta[k];
            }
            beta[i] = v / l[i][i];
        }
        for i in (0..D).rev() {
            let mut v = beta[i];
            for k in (i + 1)..D {
                v -= l[k][i] * beta[k];
            }
            beta[i] = v / l[i][i];
        }

        let mut fit = 0.0;
        let mut fit_abs = 0.0;
        let mut prop = 0.0;
        let mut quad = 0.0;
        for p in 0..D {
            fit += bvec[p] * beta[p];
            fit_abs += (bvec[p] * beta[p]).abs();
            prop += beta[p].abs() * eb[p];
            for q in 0..D {
                quad += beta[p].abs() * g[p][q] * beta[q].abs();
            }
        }
        let h = s - fit;
        let err =
            err_s + 2.0 * prop + 4.0 * (D + 1) as f64 * EPS * quad + (D + 2) as f64 * EPS * fit_abs;
        (err <= FAST_PATH_RTOL * h).then_some(h)
    }

    fn dd_at(hi: &[f64], lo: &[f64], k: usize) -> Dd {
        Dd {
            hi: hi[k],
            lo: lo[k],
        }
    }

    /// Double-double evaluation: raw cross moments re-expanded about the
    /// segment center, normal equations solved with one refinement step, and
    /// the residual evaluated as `S - 2 b'beta + beta'G beta`.
    fn rss_precise(&self, a: usize, b: usize) -> f64 {
        let dim = self.degree + 1;
        let fw = dim + 1;
        let len = b - a;

        let diff = |hi: &[f64], lo: &[f64], w: usize, p: usize| {
            Self::dd_at(hi, lo, b * w + p) - Self::dd_at(hi, lo, a * w + p)
        };
        let s = diff(&self.fast_hi, &self.fast_lo, fw, dim);
        let c = Dd::ratio((a + 1 + b) as f64, 2.0 * self.n as f64);
        let ih = Dd::ratio(2.0 * self.n as f64, (len - 1) as f64);
        let mut negc = [Dd::from_f64(1.0); MAX_DIM];
        let mut ihp = [Dd::from_f64(1.0); MAX_DIM];
        for k in 1..dim {
            negc[k] = negc[k - 1] * -c;
            ihp[k] = ihp[k - 1] * ih;
        }

        // Centered-scaled moments depend on the length only; odd ones vanish.
        let mut moments = [Dd::ZERO; 2 * MAX_DIM];
        for k in 0..dim {
            let idx = len * dim + k;
            moments[2 * k] = Dd::new(self.even_moments[idx], self.even_moments_lo[idx]);
        }
        let mut bvec = [Dd::ZERO; MAX_DIM];
        for p in 0..dim {
            let mut acc = Dd::ZERO;
            for j in 0..=p {
                let dj = diff(&self.fast_hi, &self.fast_lo, fw, j);
                acc = acc + (negc[p - j] * dj).mul_f64(BINOM[p][j]);
            }
            bvec[p] = acc * ihp[p];
        }

        let mut g: Square = [[0.0; MAX_DIM]; MAX_DIM];
        for p in 0..dim {
            for q in 0..dim {
                g[p][q] = moments[p + q].to_f64();
            }
        }
        let mut l = g;
        if !linalg::cholesky(&mut l, dim) {
            return segment_rss_exact_offsets(&self.y, a, b, self.degree);
        }
        let b64: Vec<f64> = bvec[..dim].iter().map(|v| v.to_f64()).collect();
        let mut beta = [0.0; MAX_DIM];
        linalg::cholesky_solve(&l, dim, &b64, &mut beta);
        // One step of iterative refinement with a double-double residual.
        let mut resid = [0.0; MAX_DIM];
        for p in 0..dim {
            let mut acc = bvec[p];
            for q in 0..dim {
                acc = acc - moments[p + q].mul_f64(beta[q]);
            }
            resid[p] = acc.to_f64();
        }
        let mut delta = [0.0; MAX_DIM];
        linalg::cholesky_solve(&l, dim, &resid, &mut delta);
        for p in 0..dim {
            beta[p] += delta[p];
        }

        let mut h = s;
        for p in 0..dim {
            h = h - bvec[p].mul_f64(2.0 * beta[p]);
            for q in 0..dim {
                h = h + moments[p + q].mul_f64(beta[p]).mul_f64(beta[q]);
            }
        }
        h.to_f64().max(0.0)
    }

    fn rss_offsets(&self, a: usize, b: usize) -> f64 {
        let len = b - a;
        if len <= self.degree + 1 {
            return 0.0;
        }
        match self.rss_fast(a, b) {
            Some(h) => h,
            None => self.rss_precise(a, b),
        }
    }
}

/// Scaled even moments `sum_j ((2j - (L-1)) / (L-1))^{2k}` for every length
/// `L = 0..=n`, via the recurrence `mu(L + 2) = mu(L) + 2 (L + 1)^{2k}` on the
/// unscaled integer moments.
fn even_moment_table(n: usize, degree: usize) -> (Vec<f64>, Vec<f64>) {
    let dim = degree + 1;
    let mut out = vec![0.0; (n + 1) * dim];
    let mut out_lo = vec![0.0; (n + 1) * dim];
    // Unscaled moments for the previous length of each parity.
    let mut prev: [Vec<Dd>; 2] = [vec![Dd::ZERO; dim], vec![Dd::ZERO; dim]];
    if n >= 1 {
        // L = 1: single point at 0.
        prev[1][0] = Dd::from_f64(1.0);
        out[dim] = 1.0;
    }
    for len in 2..=n {
        let parity = len % 2;
        let edge = Dd::from_f64((len - 1) as f64);
        let edge2 = edge * edge;
        let mut pw = Dd::from_f64(1.0);
        let scale = Dd::from_f64(1.0).div(edge2);
        let mut sc = Dd::from_f64(1.0);
        for k in 0..dim {
            prev[parity][k] = prev[parity][k] + pw.mul_f64(2.0);
            let v = prev[parity][k] * sc;
            out[len * dim + k] = v.hi;
            out_lo[len * dim + k] = v.lo;
            pw = pw * edge2;
            sc = sc * scale;
        }
    }
    (out, out_lo)
}

impl SegmentCost for MomentTable {
    fn series_len(&self) -> usize {
        self.n
    }

    fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    fn rss(&self, interval: Interval) -> f64 {
        assert!(
            interval.start >= 1 && interval.start < interval.end && interval.end <= self.n + 1,
            "interval {interval:?} outside series of length {}",
            self.n
        );
        self.rss_offsets(interval.start - 1, interval.end - 1)
    }
}

/// `H(y, I)` from a moment table.
pub fn segment_rss(table: &MomentTable, interval: Interval) -> f64 {
    table.rss(interval)
}

/// Reference engine: explicit QR of the centered-scaled design matrix.
#[derive(Clone, Copy, Debug)]
pub struct ExactCost<'a> {
    y: &'a [f64],
    degree: usize,
}

impl<'a> ExactCost<'a> {
    pub fn new(y: &'a [f64], degree: usize) -> Result<Self> {
        check_degree(degree)?;
        check_finite(y)?;
        Ok(Self { y, degree })
    }
}

impl SegmentCost for ExactCost<'_> {
    fn series_len(&self) -> usize {
        self.y.len()
    }

    fn degree(&self) -> usize {
        self.degree
    }

    fn rss(&self, interval: Interval) -> f64 {
        segment_rss_exact(self.y, interval, self.degree)
    }
}

/// Centered-scaled design value `u` for point `i` (1-based) of `[start, end)`.
fn scaled_point(i: usize, interval: Interval) -> f64 {
    let span = (interval.len() - 1).max(1) as f64;
    (2.0 * i as f64 - (interval.start + interval.end - 1) as f64) / span
}

fn segment_rss_exact_offsets(y: &[f64], a: usize, b: usize, degree: usize) -> f64 {
    let iv = Interval {
        start: a + 1,
        end: b + 1,
    };
    segment_rss_exact(y, iv, degree)
}

/// `H(y, I)` by Householder QR of the `|I| x (r+1)` centered-scaled design.
///
/// Panics if `interval` does not lie within `y` or `degree > MAX_DEGREE`.
pub fn segment_rss_exact(y: &[f64], interval: Interval, degree: usize) -> f64 {
    assert!(degree <= MAX_DEGREE, "degree {degree} above ceiling");
    assert!(
        interval.start >= 1 && interval.start < interval.end && interval.end <= y.len() + 1,
        "interval {interval:?} outside series of length {}",
        y.len()
    );
    let len = interval.len();
    let dim = degree + 1;
    if len <= dim {
        return 0.0;
    }
    let mut a = vec![0.0; len * dim];
    for (row, i) in (interval.start..interval.end).enumerate() {
        let u = scaled_point(i, interval);
        let mut up = 1.0;
        for p in 0..dim {
            a[p * len + row] = up;
            up *= u;
        }
    }
    let mut yv = y[interval.offsets()].to_vec();
    let (_, rss) = linalg::householder_lstsq(&mut a, len, dim, &mut yv);
    rss.max(0.0)
}

/// RSS of every prefix (or, with `reverse`, every suffix) of a window.
///
/// `out[m]` is `H` of the first (last) `m` points, computed by sequential
/// Givens QR in a basis centered and scaled over the whole window.
pub fn window_rss_scan(window: &[f64], degree: usize, reverse: bool) -> Vec<f64> {
    let len = window.len();
    let dim = degree + 1;
    let span = (len.saturating_sub(1)).max(1) as f64;
    let mut acc = GivensAccumulator::new(dim);
    let mut out = vec![0.0; len + 1];
    let mut row = [0.0; MAX_DIM];
    for m in 1..=len {
        let j = if reverse { len - m } else { m - 1 };
        let u = (2.0 * j as f64 - (len - 1) as f64) / span;
        let mut up = 1.0;
        for r in row.iter_mut().take(dim) {
            *r = up;
            up *= u;
        }
        acc.push(&row, window[j]);
        out[m] = if m <= dim { 0.0 } else { acc.rss().max(0.0) };
    }
    out
}

/// Merge gain `Q(v; I, J) = H(I u J) - H(I) - H(J)` for contiguous `I`, `J`.
///
/// Values in `(-tol, 0)` with `tol = 1e-8 * max(H(I u J), 1)` are clamped to 0.
pub fn q_gain<C: SegmentCost + ?Sized>(cost: &C, first: Interval, second: Interval) -> Result<f64> {
    let union = first.join(&second).ok_or_else(|| {
        Error::invalid_input(format!(
            "intervals {first:?} and {second:?} are not contiguous"
        ))
    })?;
    let whole = cost.rss(union);
    let gain = whole - cost.rss(first) - cost.rss(second);
    let tol = 1e-8 * whole.max(1.0);
    Ok(if gain < 0.0 && gain > -tol { 0.0 } else { gain })
}

/// Least-squares polynomial fit of one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentFit {
    pub interval: Interval,
    /// Coefficients of `((x - center) / half_width)^p`, `p = 0..=r`.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub half_width: f64,
    pub rss: f64,
}

impl SegmentFit {
    /// Fitted value at `x` (on the `i/n` scale).
    pub fn evaluate(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.half_width;
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * u + c)
    }

    /// Coefficients of `x^j` in the global monomial basis.
    pub fn global_coefficients(&self) -> Vec<f64> {
        let dim = self.coefficients.len();
        let mut out = vec![0.0; dim];
        let mut ihp = 1.0;
        for (p, beta) in self.coefficients.iter().enumerate() {
            // beta * ((x - c)/h)^p = beta h^-p sum_j C(p,j) x^j (-c)^{p-j}
            for (j, o) in out.iter_mut().enumerate().take(p + 1) {
                *o += beta * ihp * BINOM[p][j] * (-self.center).powi((p - j) as i32);
            }
            ihp /= self.half_width;
        }
        out
    }
}

/// Least-squares coefficients of a degree-`r` fit on `interval`.
///
/// When `|I| < r + 1` the minimum-norm interpolating coefficients are
/// returned (the residual is then zero).
pub fn fit_coefficients(y: &[f64], interval: Interval, degree: usize) -> Result<SegmentFit> {
    check_degree(degree)?;
    let n = y.len();
    let interval = Interval::within(interval.start, interval.end, n)?;
    let len = interval.len();
    let dim = degree + 1;
    let nf = n as f64;
    let center = (interval.start + interval.end - 1) as f64 / (2.0 * nf);
    let half_width = (len - 1).max(1) as f64 / (2.0 * nf);
    let us: Vec<f64> = (interval.start..interval.end)
        .map(|i| scaled_point(i, interval))
        .collect();
    let ys = &y[interval.offsets()];

    let (coefficients, rss) = if len >= dim {
        let mut a = vec![0.0; len * dim];
        for (row, u) in us.iter().enumerate() {
            let mut up = 1.0;
            for p in 0..dim {
                a[p * len + row] = up;
                up *= u;
            }
        }
        let mut yv = ys.to_vec();
        let (coef, rss) = linalg::householder_lstsq(&mut a, len, dim, &mut yv);
        (coef, if len == dim { 0.0 } else { rss.max(0.0) })
    } else {
        let mut a = vec![0.0; len * dim];
        for (row, u) in us.iter().enumerate() {
            let mut up = 1.0;
            for p in 0..dim {
                a[row * dim + p] = up;
                up *= u;
            }
        }
        let coef = linalg::min_norm_solve(&a, len, dim, ys)
            .ok_or_else(|| Error::invalid_input(format!("degenerate design on {interval:?}")))?;
        (coef, 0.0)
    };

    Ok(SegmentFit {
        interval,
        coefficients: coefficients.into_iter().map(|c| c + 0.0).collect(),
        center,
        half_width,
        rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    #[test]
    fn moment_table_small_example() {
        let t = build_moment_table(&[1.0, 2.0, 3.0], 0).unwrap();
        let p0: Vec<f64> = (0..=3).map(|i| t.power_sum(0, i)).collect();
        let c0: Vec<f64> = (0..=3).map(|i| t.cross_sum(0, i)).collect();
        let sq: Vec<f64> = (0..=3).map(|i| t.square_sum(i)).collect();
        assert_eq!(p0, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(c0, vec![0.0, 1.0, 3.0, 6.0]);
        assert_eq!(sq, vec![0.0, 1.0, 5.0, 14.0]);
    }

    #[test]
    fn moment_table_single_value() {
        let t = build_moment_table(&[2.5], 0).unwrap();
        assert_eq!(t.power_sum(0, 1), 1.0);
        assert_eq!(t.cross_sum(0, 1), 2.5);
        assert_eq!(t.square_sum(1), 6.25);
        assert_eq!(t.rss(iv(1, 2)), 0.0);
    }

    #[test]
    fn moment_table_matches_naive_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let r = 3;
        let t = build_moment_table(&y, r).unwrap();
        let n = y.len() as f64;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        for end in 0..=y.len() {
            for p in 0..=2 * r {
                let naive: f64 = (1..=end).map(|i| (i as f64 / n).powi(p as i32)).sum();
                assert!(end == 0 || rel(t.power_sum(p, end), naive) < 1e-12);
            }
            for p in 0..=r {
                let naive: f64 = (1..=end)
                    .map(|i| (i as f64 / n).powi(p as i32) * y[i - 1])
                    .sum();
                assert!(end == 0 || rel(t.cross_sum(p, end), naive) < 1e-12 || naive.abs() < 1e-12);
            }
            let naive: f64 = y[..end].iter().map(|v| v * v).sum();
            assert!(end == 0 || rel(t.square_sum(end), naive) < 1e-12);
        }
        assert_eq!(t.power_sum(0, 50), 50.0);
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(matches!(
            build_moment_table(&[1.0], 9),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_moment_table(&[1.0, f64::NAN], 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(build_moment_table(&[], 1).is_err());
    }

    #[test]
    fn constant_fit_is_exact() {
        let t = build_moment_table(&[1.0; 4], 0).unwrap();
        assert_eq!(t.rss(iv(1, 5)), 0.0);
    }

    #[test]
    fn mean_subtraction_example() {
        let y = [0.0, 1.0, 0.0, 1.0, 0.0];
        let t = build_moment_table(&y, 0).unwrap();
        assert!((t.rss(iv(1, 6)) - 1.2).abs() < 1e-14);
        assert!((segment_rss_exact(&y, iv(1, 6), 0) - 1.2).abs() < 1e-14);
    }

    #[test]
    fn interpolation_gives_zero() {
        let y = [3.0, -1.0, 7.0, 2.0];
        let t = build_moment_table(&y, 2).unwrap();
        assert_eq!(t.rss(iv(2, 5)), 0.0);
        assert_eq!(segment_rss_exact(&y, iv(1, 4), 2), 0.0);
    }

    #[test]
    fn exact_engine_step_example() {
        assert!((segment_rss_exact(&[0.0, 0.0, 5.0, 5.0], iv(1, 5), 0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn exact_polynomial_samples_fit_exactly() {
        let n = 200;
        let y: Vec<f64> = (1..=n)
            .map(|i| {
                let x = i as f64 / n as f64;
                1.5 - 2.0 * x + 0.7 * x * x - 3.0 * x * x * x
            })
            .collect();
        for r in 3..=5 {
            assert!(segment_rss_exact(&y, iv(17, 180), r) < 1e-10);
            let t = build_moment_table(&y, r).unwrap();
            assert!(t.rss(iv(17, 180)) < 1e-10);
        }
    }

    #[test]
    fn q_gain_step_example() {
        let y = [0.0, 0.0, 1.0, 1.0];
        let t = build_moment_table(&y, 0).unwrap();
        let q = q_gain(&t, iv(1, 3), iv(3, 5)).unwrap();
        assert!((q - 1.0).abs() < 1e-14);
        assert!(q_gain(&t, iv(1, 3), iv(4, 5)).is_err());
    }

    #[test]
    fn q_gain_single_polynomial_is_zero() {
        let n = 60;
        let y: Vec<f64> = (1..=n)
            .map(|i| (i as f64 / n as f64).powi(2) * 4.0 - 1.0)
            .collect();
        let cost = ExactCost::new(&y, 2).unwrap();
        for split in [5, 20, 31, 55] {
            let q = q_gain(&cost, iv(2, split), iv(split, 60)).unwrap();
            assert!(q.abs() < 1e-8, "q = {q}");
        }
    }

    #[test]
    fn fit_recovers_line() {
        let n = 40;
        let y: Vec<f64> = (1..=n).map(|i| 2.0 + 3.0 * i as f64 / n as f64).collect();
        let fit = fit_coefficients(&y, iv(5, 30), 1).unwrap();
        let g = fit.global_coefficients();
        assert!((g[0] - 2.0).abs() < 1e-10 && (g[1] - 3.0).abs() < 1e-10);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn fit_rank_deficient_is_min_norm_interpolant() {
        let y = [1.0, 4.0, -2.0, 0.5];
        let fit = fit_coefficients(&y, iv(2, 4), 3).unwrap();
        assert_eq!(fit.rss, 0.0);
        for i in 2..4 {
            let v = fit.evaluate(i as f64 / 4.0);
            assert!((v - y[i - 1]).abs() < 1e-12);
        }
        // Minimum norm: no other interpolant in the span of the rows is shorter,
        // so the coefficient vector lies in the row space of the 2x4 design.
        let norm: f64 = fit.coefficients.iter().map(|c| c * c).sum();
        assert!(norm.is_finite());
    }

    #[test]
    fn fit_residual_is_orthogonal_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        let interval = iv(11, 97);
        let fit = fit_coefficients(&y, interval, 3).unwrap();
        let n = y.len() as f64;
        let mut rss = 0.0;
        for p in 0..4 {
            let mut dot = 0.0;
            let mut scale = 0.0;
            for i in interval.start..interval.end {
                let x = i as f64 / n;
                let u = (x - fit.center) / fit.half_width;
                let res = y[i - 1] - fit.evaluate(x);
                dot += res * u.powi(p);
                scale += (y[i - 1] * u.powi(p)).abs();
                if p == 0 {
                    rss += res * res;
                }
            }
            assert!(dot.abs() < 1e-8 * scale.max(1.0));
        }
        assert!((rss - fit.rss).abs() < 1e-8 * fit.rss);
    }

    /// RSS with an arbitrary affine re-parameterization `(x - shift) / scale`.
    fn rss_in_basis(y: &[f64], interval: Interval, degree: usize, shift: f64, scale: f64) -> f64 {
        let n = y.len() as f64;
        let len = interval.len();
        let dim = degree + 1;
        let mut a = vec![0.0; len * dim];
        for (row, i) in (interval.start..interval.end).enumerate() {
            let x = (i as f64 / n - shift) / scale;
            for p in 0..dim {
                a[p * len + row] = x.powi(p as i32);
            }
        }
        let mut yv = y[interval.offsets()].to_vec();
        linalg::householder_lstsq(&mut a, len, dim, &mut yv).1
    }

    #[test]
    fn rss_is_basis_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
        let n = y.len() as f64;
        for _ in 0..50 {
            let s = rng.random_range(1..200);
            let e = rng.random_range(s + 10..=301);
            let interval = iv(s, e);
            for r in 0..=3 {
                let c = (s + e - 1) as f64 / (2.0 * n);
                let h = (e - s - 1) as f64 / (2.0 * n);
                let raw = rss_in_basis(&y, interval, r, 0.0, 1.0);
                let centered = rss_in_basis(&y, interval, r, c, 1.0);
                let scaled = rss_in_basis(&y, interval, r, c, h);
                let engine = segment_rss_exact(&y, interval, r);
                for v in [raw, centered, scaled] {
                    assert!((v - engine).abs() <= 1e-8 * engine, "{v} vs {engine}");
                }
            }
        }
    }

    #[test]
    fn window_scan_matches_exact_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in 0..=3 {
            let fwd = window_rss_scan(&y, r, false);
            let bwd = window_rss_scan(&y, r, true);
            for m in 1..=y.len() {
                let a = segment_rss_exact(&y, iv(1, m + 1), r);
                let b = segment_rss_exact(&y, iv(y.len() - m + 1, y.len() + 1), r);
                assert!((fwd[m] - a).abs() <= 1e-10 * a.max(1.0));
                assert!((bwd[m] - b).abs() <= 1e-10 * b.max(1.0));
            }
        }
    }

    #[test]
    fn precise_and_fast_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let y: Vec<f64> = (0..2000)
            .map(|i| (i as f64 * 0.01).sin() + rng.random_range(-0.5..0.5))
            .collect();
        for r in 0..=3 {
            let t = build_moment_table(&y, r).unwrap();
            for _ in 0..200 {
                let a = rng.random_range(0..1900);
                let b = rng.random_range(a + r + 2..=2000);
                let p = t.rss_precise(a, b);
                if let Some(f) = t.rss_fast(a, b) {
                    assert!((f - p).abs() <= 1e-9 * p, "r={r} [{a},{b}) {f} vs {p}");
                }
            }
        }
    }
}
