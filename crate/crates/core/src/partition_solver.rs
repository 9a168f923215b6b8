// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact l0-penalized minimal partitioning.
//!
//! Minimizes `G(P, lambda) = sum_{I in P} H(y, I) + lambda |P|` over interval
//! partitions of `{1, ..., n}` whose segments all have length at least
//! `min_seg_len`. Ties (values within `1e-12` relative) are resolved toward
//! fewer segments and then toward the lexicographically smallest change-point
//! sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment_cost::{
    segment_rss_exact, Engine, ExactCost, Interval, MomentTable, SegmentCost, SegmentFit,
    MAX_DEGREE,
};

/// Relative tolerance under which two objective values count as tied.
pub const TIE_RTOL: f64 = 1e-12;

/// Largest `n` accepted by [`brute_force_min_partition`].
pub const BRUTE_FORCE_MAX_N: usize = 16;

pub(crate) fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverConfig {
    /// Per-segment penalty; `0` is accepted and then every segment of length
    /// `min_seg_len` is free, so the solver returns the finest partition.
    pub lambda: f64,
    pub degree: usize,
    #[serde(default = "default_min_seg_len")]
    pub min_seg_len: usize,
    #[serde(default)]
    pub engine: Engine,
}

fn default_min_seg_len() -> usize {
    1
}

impl SolverConfig {
    pub fn new(lambda: f64, degree: usize) -> Self {
        Self {
            lambda,
            degree,
            min_seg_len: 1,
            engine: Engine::Moment,
        }
    }

    pub fn with_min_seg_len(mut self, min_seg_len: usize) -> Self {
        self.min_seg_len = min_seg_len;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.degree > MAX_DEGREE {
            return Err(Error::config(format!(
                "degree {} exceeds ceiling {MAX_DEGREE}",
                self.degree
            )));
        }
        if self.min_seg_len == 0 {
            return Err(Error::config("minSegLen must be at least 1"));
        }
        if n == 0 {
            return Err(Error::invalid_input("series is empty"));
        }
        if self.min_seg_len > n {
            return Err(Error::invalid_input(format!(
                "minSegLen {} exceeds series length {n}",
                self.min_seg_len
            )));
        }
        Ok(())
    }
}

/// Interval partition of `{1, ..., n}` described by its change points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Partition {
    pub n: usize,
    pub change_points: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, change_points: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_input("partition of an empty series"));
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
        Ok(Self { n, change_points })
    }

    pub fn single(n: usize) -> Self {
        Self {
            n,
            change_points: Vec::new(),
        }
    }

    /// Number of segments `|P|`.
    pub fn len(&self) -> usize {
        self.change_points.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn segments(&self) -> Vec<Interval> {
        let mut bounds = Vec::with_capacity(self.change_points.len() + 2);
        bounds.push(1);
        bounds.extend_from_slice(&self.change_points);
        bounds.push(self.n + 1);
        bounds
            .windows(2)
            .map(|w| Interval {
                start: w[0],
                end: w[1],
            })
            .collect()
    }
}

/// Minimizer together with its objective value.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub partition: Partition,
    pub objective: f64,
}

/// `G(P, lambda)` accumulated from the last segment backwards, which is the
/// order the solver itself sums in.
pub fn partition_objective<C: SegmentCost + ?Sized>(
    cost: &C,
    partition: &Partition,
    lambda: f64,
) -> f64 {
    partition
        .segments()
        .iter()
        .rev()
        .fold(0.0, |acc, iv| cost.rss(*iv) + lambda + acc)
}

/// Exact minimizer over partitions with segment lengths `>= min_seg_len`.
///
/// Runs the recursion `C(s) = min_t H([s, t)) + lambda + C(t)`, `C(n+1) = 0`,
/// scanning `t` upwards and replacing the incumbent only on a strict
/// improvement or on a tie with fewer segments.
pub fn solve_with_cost<C: SegmentCost + ?Sized>(
    cost: &C,
    lambda: f64,
    min_seg_len: usize,
) -> Result<Solution> {
    let n = cost.series_len();
    if n == 0 {
        return Err(Error::invalid_input("series is empty"));
    }
    if min_seg_len == 0 || min_seg_len > n {
        return Err(Error::invalid_input(format!(
            "minSegLen {min_seg_len} must lie in 1..={n}"
        )));
    }
    let mut value = vec![f64::INFINITY; n + 2];
    let mut count = vec![usize::MAX; n + 2];
    let mut next = vec![0usize; n + 2];
    value[n + 1] = 0.0;
    count[n + 1] = 0;

    for s in (1..=n).rev() {
        let first_end = s + min_seg_len;
        if first_end > n + 1 {
            continue;
        }
        let mut best = f64::INFINITY;
        let mut best_count = usize::MAX;
        let mut best_t = 0;
        for t in first_end..=n + 1 {
            let tail = value[t];
            if !tail.is_finite() {
                continue;
            }
            let v = cost.rss(Interval { start: s, end: t }) + lambda + tail;
            let c = count[t] + 1;
            let replace = if best_t == 0 {
                true
            } else if tied(v, best) {
                c < best_count
            } else {
                v < best
            };
            if replace {
                best = v;
                best_count = c;
                best_t = t;
            }
        }
        value[s] = best;
        count[s] = best_count;
        next[s] = best_t;
    }

    let mut change_points = Vec::new();
    let mut s = next[1];
    while s <= n {
        change_points.push(s);
        s = next[s];
    }
    Ok(Solution {
        partition: Partition { n, change_points },
        objective: value[1],
    })
}

/// Solves the penalized partitioning problem with the configured engine.
pub fn solve_min_partition(y: &[f64], config: &SolverConfig) -> Result<Partition> {
    Ok(solve(y, config)?.partition)
}

/// Like [`solve_min_partition`], also returning the objective value.
pub fn solve(y: &[f64], config: &SolverConfig) -> Result<Solution> {
    config.validate(y.len())?;
    match config.engine {
        Engine::Moment => {
            let table = MomentTable::new(y, config.degree)?;
            solve_with_cost(&table, config.lambda, config.min_seg_len)
        }
        Engine::Exact => {
            let cost = ExactCost::new(y, config.degree)?;
            solve_with_cost(&cost, config.lambda, config.min_seg_len)
        }
    }
}

/// Exhaustive search over all `2^(n-1)` partitions using the exact engine.
///
/// Among minimizers (within the tie tolerance of the minimum) it returns the
/// one with fewest segments, then the lexicographically smallest change
/// points.
pub fn brute_force_min_partition(y: &[f64], config: &SolverConfig) -> Result<Partition> {
    let n = y.len();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Refused(format!(
            "brute force enumerates 2^(n-1) partitions; n = {n} exceeds {BRUTE_FORCE_MAX_N}"
        )));
    }
    config.validate(n)?;
    ExactCost::new(y, config.degree)?;

    let mut h = vec![0.0; (n + 2) * (n + 2)];
    for s in 1..=n {
        for e in (s + 1)..=(n + 1) {
            h[s * (n + 2) + e] = segment_rss_exact(y, Interval { start: s, end: e }, config.degree);
        }
    }

    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
    for mask in 0u32..(1u32 << (n - 1)) {
        let cps: Vec<usize> = (0..n - 1)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| b + 2)
            .collect();
        let partition = Partition {
            n,
            change_points: cps,
        };
        let segments = partition.segments();
        if segments.iter().any(|iv| iv.len() < config.min_seg_len) {
            continue;
        }
        let value = segments.iter().rev().fold(0.0, |acc, iv| {
            h[iv.start * (n + 2) + iv.end] + config.lambda + acc
        });
        candidates.push((value, partition.change_points));
    }

    let min = candidates
        .iter()
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    let best = candidates
        .into_iter()
        .filter(|(v, _)| tied(*v, min))
        .map(|(_, cps)| cps)
        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
        .ok_or_else(|| Error::invalid_input("no partition satisfies minSegLen"))?;
    Ok(Partition {
        n,
        change_points: best,
    })
}

/// Initial change-point estimators: the change points of the partition.
pub fn initial_estimators(partition: &Partition) -> Vec<usize> {
    partition.change_points.clone()
}

/// Output of the two-step procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionResult {
    pub initial_estimators: Vec<usize>,
    pub final_estimators: Vec<usize>,
    pub k_hat: usize,
    /// `G` of the partition found by the solver.
    pub objective: f64,
    /// One fit per segment of the solver's partition.
    pub segment_fits: Vec<SegmentFit>,
}

impl DetectionResult {
    /// `sum H + lambda |P|` recomputed from the stored segment fits.
    pub fn recomputed_objective(&self, lambda: f64) -> f64 {
        self.segment_fits.iter().map(|f| f.rss).sum::<f64>()
            + lambda * self.segment_fits.len() as f64
    }
}

/// Per-segment summary for [`diagnose_structure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentDiagnostic {
    pub interval: Interval,
    /// True change points `eta` with `start <= eta < end`.
    pub true_change_points: Vec<usize>,
    /// For one contained change point: distance to the nearer endpoint.
    /// For two: the larger of `eta_first - start` and `end - eta_last`.
    pub endpoint_distance: Option<usize>,
}

/// Structural checks of an estimated partition against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StructureReport {
    pub segments: Vec<SegmentDiagnostic>,
    /// Segments holding more than two true change points.
    pub too_many_in_segment: Vec<usize>,
    /// Indices `j` such that segments `j` and `j + 1` hold no true change point.
    pub empty_adjacent_pair: Vec<usize>,
    /// Segments whose endpoint distance exceeds `delta / 2`.
    pub far_from_endpoint: Vec<usize>,
    /// `K + 1 <= |P_hat| <= 3 (K + 1)` but `|P_hat| != K + 1`.
    pub count_mismatch_in_range: bool,
}

impl StructureReport {
    /// Number of flagged violations of the "at most two per segment" and
    /// "at least one per adjacent pair" conditions.
    pub fn violations(&self) -> usize {
        self.too_many_in_segment.len() + self.empty_adjacent_pair.len()
    }
}

pub fn diagnose_structure(truth: &[usize], partition: &Partition, delta: usize) -> StructureReport {
    let segments: Vec<SegmentDiagnostic> = partition
        .segments()
        .into_iter()
        .map(|iv| {
            let inside: Vec<usize> = truth.iter().copied().filter(|&e| iv.contains(e)).collect();
            let endpoint_distance = match inside.as_slice() {
                [eta] => Some((eta - iv.start).min(iv.end - eta)),
                [first, .., last] => Some((first - iv.start).max(iv.end - last)),
                [] => None,
            };
            SegmentDiagnostic {
                interval: iv,
                true_change_points: inside,
                endpoint_distance,
            }
        })
        .collect();
    let too_many_in_segment = segments
        .iter()
        .enumerate()
        .filter(|(_, d)| d.true_change_points.len() > 2)
        .map(|(j, _)| j)
        .collect();
    let empty_adjacent_pair = segments
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].true_change_points.is_empty() && w[1].true_change_points.is_empty())
        .map(|(j, _)| j)
        .collect();
    let far_from_endpoint = segments
        .iter()
        .enumerate()
        .filter(|(_, d)| d.endpoint_distance.is_some_and(|dist| 2 * dist > delta))
        .map(|(j, _)| j)
        .collect();
    let truth_segments = truth.len() + 1;
    let est = partition.len();
    StructureReport {
        segments,
        too_many_in_segment,
        empty_adjacent_pair,
        far_from_endpoint,
        count_mismatch_in_range: est != truth_segments
            && truth_segments <= est
            && est <= 3 * truth_segments,
    }
}

/// Solves along a grid of penalties, warning when the segment count fails to
/// be non-increasing in `lambda`.
pub fn lambda_path(y: &[f64], config: &SolverConfig, lambdas: &[f64]) -> Result<Vec<Partition>> {
    let table;
    let exact;
    let cost: &dyn SegmentCost = match config.engine {
        Engine::Moment => {
            table = MomentTable::new(y, config.degree)?;
            &table
        }
        Engine::Exact => {
            exact = ExactCost::new(y, config.degree)?;
            &exact
        }
    };
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let mut out = vec![Partition::single(y.len()); lambdas.len()];
    let mut prev: Option<(f64, usize)> = None;
    for j in order {
        let cfg = SolverConfig {
            lambda: lambdas[j],
            ..*config
        };
        cfg.validate(y.len())?;
        let sol = solve_with_cost(cost, cfg.lambda, cfg.min_seg_len)?;
        let segs = sol.partition.len();
        if let Some((prev_lambda, prev_segs)) = prev {
            if segs > prev_segs {
                log::warn!(
                    "segment count rose from {prev_segs} at lambda {prev_lambda} to {segs} at lambda {}",
                    cfg.lambda
                );
            }
        }
        prev = Some((cfg.lambda, segs));
        out[j] = sol.partition;
    }
    Ok(out)
}

/// Noise variance estimate from `(r+1)`-th order differences.
///
/// The sample variance of the differenced series is divided by
/// `C(2r+2, r+1)`, the variance inflation of differencing white noise.
pub fn estimate_noise_variance(y: &[f64], degree: usize) -> Result<f64> {
    let order = degree + 1;
    if y.len() < order + 2 {
        return Err(Error::invalid_input(format!(
            "need at least {} values to difference {order} times",
            order + 2
        )));
    }
    let diff = difference(y, order);
    let m = diff.len() as f64;
    let mean = diff.iter().sum::<f64>() / m;
    let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(var / central_binomial(order))
}

/// `lambda = c * sigma^2 * ln n`.
pub fn lambda_rule(c: f64, sigma2: f64, n: usize) -> f64 {
    c * sigma2 * (n as f64).ln()
}

fn central_binomial(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, j| acc * (m + j) as f64 / j as f64)
}

/// `order`-fold forward difference; the result has length `len - order`.
pub fn difference(y: &[f64], order: usize) -> Vec<f64> {
    let mut d = y.to_vec();
    for _ in 0..order {
        d = d.windows(2).map(|w| w[1] - w[0]).collect();
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn huge_penalty_gives_single_segment() {
        let y = [3.0, -1.0, 4.0, 1.0, -5.0, 9.0];
        let lambda = y.iter().map(|v| v * v).sum::<f64>() + 1.0;
        for r in 0..3 {
            let p = solve_min_partition(&y, &SolverConfig::new(lambda, r)).unwrap();
            assert!(p.change_points.is_empty());
        }
    }

    #[test]
    fn step_example() {
        let y = [0.0, 0.0, 5.0, 5.0];
        let sol = solve(&y, &SolverConfig::new(0.5, 0)).unwrap();
        assert_eq!(sol.partition.change_points, vec![3]);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        let brute = brute_force_min_partition(&y, &SolverConfig::new(0.5, 0)).unwrap();
        assert_eq!(brute, sol.partition);
    }

    #[test]
    fn brute_force_edge_cases() {
        let p = brute_force_min_partition(&[2.0], &SolverConfig::new(1.0, 0)).unwrap();
        assert!(p.change_points.is_empty());
        let p =
            brute_force_min_partition(&[0.0, 0.0, 5.0, 5.0], &SolverConfig::new(100.0, 0)).unwrap();
        assert!(p.change_points.is_empty());
        let err = brute_force_min_partition(&[0.0; 17], &SolverConfig::new(1.0, 0)).unwrap_err();
        assert!(matches!(err, Error::Refused(_)));
    }

    #[test]
    fn dp_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..150 {
            let n = rng.random_range(1..=10);
            let r = rng.random_range(0..=2);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lambda = rng.random_range(0.01..20.0);
            let m = if rng.random_bool(0.5) {
                1
            } else {
                (r + 1).min(n)
            };
            let cfg = SolverConfig::new(lambda, r).with_min_seg_len(m);
            let dp = solve(&y, &cfg).unwrap();
            let bf = brute_force_min_partition(&y, &cfg).unwrap();
            assert_eq!(dp.partition, bf, "y={y:?} r={r} lambda={lambda} m={m}");
            let exact = ExactCost::new(&y, r).unwrap();
            let bf_obj = partition_objective(&exact, &bf, lambda);
            assert!((dp.objective - bf_obj).abs() <= 1e-9 * bf_obj.abs());
        }
    }

    #[test]
    fn ties_prefer_fewer_segments_then_smaller_points() {
        // r = 1, n = 4: every split into pieces of length <= 2 is free, so
        // with lambda = 0 all partitions tie at zero except those keeping a
        // length-3+ piece with nonzero residual.
        let y = [0.0, 1.0, 0.0, 1.0];
        let p = solve_min_partition(&y, &SolverConfig::new(0.0, 1)).unwrap();
        assert_eq!(p.change_points, vec![3]);
        let bf = brute_force_min_partition(&y, &SolverConfig::new(0.0, 1)).unwrap();
        assert_eq!(bf.change_points, vec![3]);
    }

    #[test]
    fn min_seg_len_is_respected() {
        let y = [0.0, 9.0, 0.0, 0.0, 0.0, 0.0];
        let cfg = SolverConfig::new(0.1, 0).with_min_seg_len(2);
        let p = solve_min_partition(&y, &cfg).unwrap();
        assert!(p.segments().iter().all(|iv| iv.len() >= 2));
        assert_eq!(p, brute_force_min_partition(&y, &cfg).unwrap());
        let err = solve_min_partition(&y, &SolverConfig::new(0.1, 0).with_min_seg_len(7));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_bad_lambda() {
        for lambda in [-1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                solve_min_partition(&[1.0, 2.0], &SolverConfig::new(lambda, 0)),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn exact_engine_agrees_with_moment_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..60)
            .map(|i| if i < 30 { 0.0 } else { 3.0 } + rng.random_range(-1.0..1.0))
            .collect();
        let a = solve(&y, &SolverConfig::new(4.0, 1)).unwrap();
        let b = solve(&y, &SolverConfig::new(4.0, 1).with_engine(Engine::Exact)).unwrap();
        assert_eq!(a.partition, b.partition);
        assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective);
    }

    #[test]
    fn partition_segments_cover_series() {
        let p = Partition::new(10, vec![3, 7]).unwrap();
        let segs = p.segments();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0], Interval { start: 1, end: 3 });
        assert_eq!(segs[2], Interval { start: 7, end: 11 });
        assert_eq!(initial_estimators(&p), vec![3, 7]);
        assert!(initial_estimators(&Partition::single(5)).is_empty());
        assert!(Partition::new(10, vec![1]).is_err());
        assert!(Partition::new(10, vec![5, 5]).is_err());
        assert!(Partition::new(10, vec![11]).is_err());
    }

    #[test]
    fn structure_diagnostics() {
        let truth = [20, 40, 60];
        let perfect = Partition::new(80, truth.to_vec()).unwrap();
        let rep = diagnose_structure(&truth, &perfect, 20);
        assert_eq!(rep.violations(), 0);
        assert!(!rep.count_mismatch_in_range);

        let single = Partition::single(80);
        let rep = diagnose_structure(&truth, &single, 20);
        assert_eq!(rep.too_many_in_segment, vec![0]);

        let over = Partition::new(80, vec![5, 10, 20, 40, 60]).unwrap();
        let rep = diagnose_structure(&truth, &over, 20);
        assert_eq!(rep.empty_adjacent_pair, vec![0, 1]);
        assert!(rep.count_mismatch_in_range);
    }

    #[test]
    fn noise_variance_from_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::Normal::new(0.0, 2.0).unwrap();
        let y: Vec<f64> = (0..20000)
            .map(|i| 0.001 * i as f64 + rng.sample(normal))
            .collect();
        for r in 0..3 {
            let s2 = estimate_noise_variance(&y, r).unwrap();
            assert!((s2 - 4.0).abs() < 0.3, "r={r} s2={s2}");
        }
        assert_eq!(central_binomial(2), 6.0);
        assert!(estimate_noise_variance(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn lambda_path_is_monotone_on_example() {
        let y: Vec<f64> = (0..40).map(|i| ((i / 10) % 2) as f64 * 4.0).collect();
        let lambdas = [0.1, 1.0, 10.0, 100.0, 1000.0];
        let parts = lambda_path(&y, &SolverConfig::new(1.0, 0), &lambdas).unwrap();
        for w in parts.windows(2) {
            assert!(w[0].len() >= w[1].len());
        }
        assert_eq!(parts[0].change_points, vec![11, 21, 31]);
        assert!(parts[4].change_points.is_empty());
    }
}
