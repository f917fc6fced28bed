//! Empirical occupation measures of Euler paths and the diagnostics built
//! on them.

use ndarray::Array3;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::dynamics::{Drift, Trajectory};
use crate::noise::{
    increment_autocovariance, IncrementCovariance, IncrementSampler, NoiseError, SamplerMethod,
    VarianceFunction,
};
use crate::rng::{Purpose, StreamKey};
use crate::stats::{batch_means, iid_estimate, normalized, ols, Estimate};

/// Largest `|Φ_γ(window) - stored increments|` tolerated before the windows
/// are declared inconsistent with the drift and step.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("offset {0} is not a multiple of the step")]
    OffGrid(f64),
    #[error("burn-in {burn_in} leaves no samples in a path of {len} points")]
    BurnIn { burn_in: usize, len: usize },
    #[error("need {needed} points, trajectory has {len}")]
    TooShort { needed: usize, len: usize },
    #[error("empty sample")]
    Empty,
    #[error("coordinate {0} out of range")]
    Coordinate(usize),
    #[error("reconstruction residual {residual:e} exceeds tolerance; drift or step mismatch")]
    Mismatch { residual: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

fn grid_steps(t: f64, gamma: f64) -> Result<usize, MeasureError> {
    let r = t / gamma;
    let k = r.round();
    if !(t >= 0.0) || (r - k).abs() > 1e-9 * k.max(1.0) {
        return Err(MeasureError::OffGrid(t));
    }
    Ok(k as usize)
}

/// Sorted one-coordinate samples of `X̄_{γ(k-1)+t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginal {
    pub offset: f64,
    pub burn_in: usize,
    pub coordinate: usize,
    pub samples: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self {
            offset: 0.0,
            burn_in: 0,
            coordinate: 0,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn marginal_empirical(
    traj: &Trajectory,
    t_offset: f64,
    burn_in: usize,
    coordinate: usize,
) -> Result<EmpiricalMarginal, MeasureError> {
    let s = grid_steps(t_offset, traj.gamma)?;
    if coordinate >= traj.dimension() {
        return Err(MeasureError::Coordinate(coordinate));
    }
    let len = traj.values.nrows();
    if burn_in + s >= len {
        return Err(MeasureError::BurnIn { burn_in, len });
    }
    let mut samples: Vec<f64> = (burn_in + s..len)
        .map(|i| traj.values[[i, coordinate]])
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(EmpiricalMarginal {
        offset: t_offset,
        burn_in,
        coordinate,
        samples,
    })
}

/// Shifted path segments of `window_steps + 1` points, starting at
/// `start + k * stride` for `k < count`, with the increments that drove each
/// segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalWindows {
    pub window: f64,
    pub gamma: f64,
    pub start: usize,
    pub stride: usize,
    /// `[window, step, coordinate]`.
    pub windows: Array3<f64>,
    /// `[window, step, coordinate]`, one fewer step than `windows`.
    pub increments: Array3<f64>,
}

impl FunctionalWindows {
    pub fn count(&self) -> usize {
        self.windows.dim().0
    }

    pub fn window_steps(&self) -> usize {
        self.windows.dim().1 - 1
    }

    /// Stacks windows of equal length and step, e.g. one per replica.
    pub fn concat(parts: &[FunctionalWindows]) -> Result<FunctionalWindows, MeasureError> {
        let first = parts.first().ok_or(MeasureError::Empty)?;
        if parts
            .iter()
            .any(|p| p.gamma != first.gamma || p.windows.dim().1 != first.windows.dim().1)
        {
            return Err(MeasureError::Invalid(
                "windows differ in step or length".into(),
            ));
        }
        let views: Vec<_> = parts.iter().map(|p| p.windows.view()).collect();
        let incs: Vec<_> = parts.iter().map(|p| p.increments.view()).collect();
        Ok(FunctionalWindows {
            window: first.window,
            gamma: first.gamma,
            start: first.start,
            stride: first.stride,
            windows: ndarray::concatenate(ndarray::Axis(0), &views)
                .map_err(|e| MeasureError::Invalid(e.to_string()))?,
            increments: ndarray::concatenate(ndarray::Axis(0), &incs)
                .map_err(|e| MeasureError::Invalid(e.to_string()))?,
        })
    }
}

pub fn functional_windows(
    traj: &Trajectory,
    start: usize,
    window: f64,
    count: usize,
    stride: usize,
) -> Result<FunctionalWindows, MeasureError> {
    let w = grid_steps(window, traj.gamma)?;
    if count == 0 || stride == 0 {
        return Err(MeasureError::Invalid(
            "count and stride must be positive".into(),
        ));
    }
    let needed = start + (count - 1) * stride + w + 1;
    let len = traj.values.nrows();
    if needed > len {
        return Err(MeasureError::TooShort { needed, len });
    }
    let d = traj.dimension();
    let windows = Array3::from_shape_fn((count, w + 1, d), |(k, j, c)| {
        traj.values[[start + k * stride + j, c]]
    });
    let increments = Array3::from_shape_fn((count, w, d), |(k, j, c)| {
        traj.increments[[start + k * stride + j, c]]
    });
    Ok(FunctionalWindows {
        window,
        gamma: traj.gamma,
        start,
        stride,
        windows,
        increments,
    })
}

/// Sorted samples resampled to `m` points by the quantile rule
/// `index = floor((i + 1/2) n / m)`.
fn quantile_match(sorted: &[f64], m: usize) -> Vec<f64> {
    let n = sorted.len();
    (0..m)
        .map(|i| sorted[((2 * i + 1) * n / (2 * m)).min(n - 1)])
        .collect()
}

/// W1 between two sorted samples. Unequal counts are reduced to the smaller
/// count by quantile matching first.
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> Result<f64, MeasureError> {
    if a.is_empty() || b.is_empty() {
        return Err(MeasureError::Empty);
    }
    let (a, b) = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Equal => (a.to_vec(), b.to_vec()),
        std::cmp::Ordering::Greater => (quantile_match(a, b.len()), b.to_vec()),
        std::cmp::Ordering::Less => (a.to_vec(), quantile_match(b, a.len())),
    };
    let terms = a.iter().zip(&b).map(|(x, y)| (x - y).abs());
    Ok(crate::stats::stable_sum(terms) / a.len() as f64)
}

pub fn wasserstein1_1d(a: &EmpiricalMarginal, b: &EmpiricalMarginal) -> Result<f64, MeasureError> {
    wasserstein1_sorted(&a.samples, &b.samples)
}

/// Exact W1 between the empirical measure of `sorted` and `N(0, sigma^2)`:
/// `∫ |F_n(x) - Φ(x/σ)| dx` evaluated piecewise with
/// `∫ Φ(z) dz = z Φ(z) + φ(z)`.
pub fn wasserstein1_to_normal(sorted: &[f64], sigma: f64) -> Result<f64, MeasureError> {
    if sorted.is_empty() {
        return Err(MeasureError::Empty);
    }
    if !(sigma > 0.0) {
        return Err(MeasureError::Invalid(format!("sigma={sigma}")));
    }
    let std = Normal::standard();
    let g = |x: f64| {
        let z = x / sigma;
        sigma * (z * std.cdf(z) + std.pdf(z))
    };
    // ∫_a^b |p - Φ(x/σ)| dx on a finite segment where the empirical cdf is p;
    // Φ < p below the crossing σ Φ^{-1}(p) and Φ > p above it
    let piece = |a: f64, b: f64, p: f64| -> f64 {
        if a >= b {
            return 0.0;
        }
        let mid = (sigma * std.inverse_cdf(p)).clamp(a, b);
        let lower = p * (mid - a) - (g(mid) - g(a));
        let upper = (g(b) - g(mid)) - p * (b - mid);
        lower.abs() + upper.abs()
    };
    let n = sorted.len() as f64;
    let last = sorted[sorted.len() - 1] / sigma;
    // ∫_{-∞}^{x_1} Φ and ∫_{x_n}^{∞} (1 - Φ)
    let mut total = g(sorted[0]) + sigma * (std.pdf(last) - last * (1.0 - std.cdf(last)));
    for (i, w) in sorted.windows(2).enumerate() {
        total += piece(w[0], w[1], (i + 1) as f64 / n);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRow {
    /// `mean_t`, `second_t_s` or `w1_t`.
    pub statistic: String,
    pub coordinate: usize,
    pub raw: f64,
    pub stderr: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub shift: usize,
    pub rows: Vec<ShiftRow>,
}

impl ShiftReport {
    pub fn max_normalized(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.normalized.abs())
            .fold(0.0, f64::max)
    }
}

/// Compares the joint empirical law of `(X̄_{γ(k-1)+t_i})_i` with its
/// `l`-step shift. First and second joint moments are compared through the
/// paired differences `g(window at k+l) - g(window at k)`, normalized by a
/// batch-means standard error. W1 between the shifted and unshifted
/// coordinate marginals is normalized by the standard error of the matching
/// first-moment difference.
pub fn shift_invariance_stat(
    traj: &Trajectory,
    times: &[f64],
    shift: usize,
    burn_in: usize,
) -> Result<ShiftReport, MeasureError> {
    let offsets: Vec<usize> = times
        .iter()
        .map(|t| grid_steps(*t, traj.gamma))
        .collect::<Result<_, _>>()?;
    let max_off = offsets.iter().copied().max().unwrap_or(0);
    let len = traj.values.nrows();
    if burn_in + shift + max_off >= len {
        return Err(MeasureError::TooShort {
            needed: burn_in + shift + max_off + 1,
            len,
        });
    }
    let ks: Vec<usize> = (burn_in..len - shift - max_off).collect();
    let x = |i: usize, c: usize| traj.values[[i, c]];
    let mut rows = Vec::new();
    for c in 0..traj.dimension() {
        let mut mean_se = Vec::with_capacity(offsets.len());
        for (a, &oa) in offsets.iter().enumerate() {
            let diffs: Vec<f64> = ks
                .iter()
                .map(|&k| x(k + shift + oa, c) - x(k + oa, c))
                .collect();
            let e = batch_means(&diffs);
            mean_se.push(e.stderr);
            rows.push(row(format!("mean_{}", times[a]), c, e));
            for (b, &ob) in offsets.iter().enumerate().skip(a) {
                let diffs: Vec<f64> = ks
                    .iter()
                    .map(|&k| {
                        x(k + shift + oa, c) * x(k + shift + ob, c) - x(k + oa, c) * x(k + ob, c)
                    })
                    .collect();
                rows.push(row(
                    format!("second_{}_{}", times[a], times[b]),
                    c,
                    batch_means(&diffs),
                ));
            }
        }
        for (a, &oa) in offsets.iter().enumerate() {
            let mut p: Vec<f64> = ks.iter().map(|&k| x(k + oa, c)).collect();
            let mut q: Vec<f64> = ks.iter().map(|&k| x(k + shift + oa, c)).collect();
            p.sort_by(f64::total_cmp);
            q.sort_by(f64::total_cmp);
            let w = wasserstein1_sorted(&p, &q)?;
            rows.push(ShiftRow {
                statistic: format!("w1_{}", times[a]),
                coordinate: c,
                raw: w,
                stderr: mean_se[a],
                normalized: normalized(w, mean_se[a]),
            });
        }
    }
    Ok(ShiftReport { shift, rows })
}

fn row(statistic: String, coordinate: usize, e: Estimate) -> ShiftRow {
    ShiftRow {
        statistic,
        coordinate,
        raw: e.value,
        stderr: e.stderr,
        normalized: e.normalized_deviation(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagRow {
    pub lag: usize,
    pub model_value: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub normalized_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// `[window, step, coordinate]`.
    pub increments: Array3<f64>,
    pub residual: f64,
    pub lags: Vec<LagRow>,
}

/// Applies the discrete `Φ_γ(α)_j = α_j - α_0 - γ Σ_{i<j} b(α_i)` to every
/// window, differences it into per-step increments, and compares their
/// pooled lag autocovariances (first coordinate) with `cov`.
pub fn reconstruct_noise(
    windows: &FunctionalWindows,
    drift: &Drift,
    gamma: f64,
    cov: &IncrementCovariance,
    max_lag: usize,
) -> Result<Reconstruction, MeasureError> {
    if gamma != windows.gamma {
        return Err(MeasureError::Mismatch {
            residual: f64::INFINITY,
        });
    }
    let (count, points, d) = windows.windows.dim();
    let steps = points - 1;
    if max_lag >= steps {
        return Err(MeasureError::Invalid(format!(
            "lag {max_lag} needs windows longer than {steps} steps"
        )));
    }
    let mut inc = Array3::zeros((count, steps, d));
    let mut residual = 0.0f64;
    let mut b = vec![0.0; d];
    for k in 0..count {
        for j in 0..steps {
            let a: Vec<f64> = (0..d).map(|c| windows.windows[[k, j, c]]).collect();
            drift.eval(&a, &mut b);
            for c in 0..d {
                let r = windows.windows[[k, j + 1, c]] - a[c] - gamma * b[c];
                inc[[k, j, c]] = r;
                residual = residual.max((r - windows.increments[[k, j, c]]).abs());
            }
        }
    }
    if !(residual <= RECONSTRUCTION_TOL) {
        return Err(MeasureError::Mismatch { residual });
    }
    let cov = cov.extended(max_lag);
    let lags = (0..=max_lag)
        .map(|lag| {
            let per_window: Vec<f64> = (0..count)
                .map(|k| {
                    let prods = (0..steps - lag).map(|j| inc[[k, j, 0]] * inc[[k, j + lag, 0]]);
                    crate::stats::stable_sum(prods) / (steps - lag) as f64
                })
                .collect();
            let e = batch_means(&per_window);
            let model_value = cov.phi()[lag];
            LagRow {
                lag,
                model_value,
                estimate: e.value,
                stderr: e.stderr,
                normalized_dev: e.normalized_deviation(model_value),
            }
        })
        .collect();
    Ok(Reconstruction {
        increments: inc,
        residual,
        lags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupMomentReport {
    /// `(T, estimate of E[sup_{[0,T]} |Z|])`.
    pub rows: Vec<(f64, Estimate)>,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub const MIN_STEPS_PER_WINDOW: usize = 256;

/// Monte-Carlo `E[sup_{t<=T} |Z̄_t|]` on a grid of `steps_per_t` points per
/// horizon. Every horizon uses its own random streams.
pub fn sup_moment_estimate(
    model: &VarianceFunction,
    horizons: &[f64],
    steps_per_t: usize,
    replicas: usize,
    seed: u64,
) -> Result<SupMomentReport, MeasureError> {
    if steps_per_t < MIN_STEPS_PER_WINDOW {
        return Err(MeasureError::Invalid(format!(
            "at least {MIN_STEPS_PER_WINDOW} steps per horizon required"
        )));
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) || horizons[0] <= 0.0 {
        return Err(MeasureError::Invalid(
            "horizons must be positive and increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(horizons.len());
    for (i, &t) in horizons.iter().enumerate() {
        let gamma = t / steps_per_t as f64;
        let cov = increment_autocovariance(model, gamma, steps_per_t)?;
        let sampler = IncrementSampler::new(&cov, steps_per_t, SamplerMethod::Auto)?;
        let sups: Vec<f64> = (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let key = StreamKey::new(seed, r, i as u64, Purpose::AuxiliaryNoise);
                let mut z = 0.0f64;
                let mut sup = 0.0f64;
                for d in sampler.draw(key) {
                    z += d;
                    sup = sup.max(z.abs());
                }
                sup
            })
            .collect();
        rows.push((t, iid_estimate(&sups)));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows.iter().map(|(t, e)| (t.ln(), e.value.ln())).unzip();
    let fit = if rows.len() >= 2 {
        ols(&lx, &ly)
    } else {
        crate::stats::LineFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            slope_stderr: f64::NAN,
            intercept_stderr: f64::NAN,
        }
    };
    Ok(SupMomentReport {
        rows,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
    })
}

/// `m2 / m1` with its delta-method standard error.
pub fn ratio_estimate(num: Estimate, den: Estimate) -> Estimate {
    let r = num.value / den.value;
    Estimate {
        value: r,
        stderr: r.abs()
            * ((num.stderr / num.value).powi(2) + (den.stderr / den.value).powi(2)).sqrt(),
        count: num.count.min(den.count),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::euler_simulate;
    use crate::noise::{sample_increments, NoiseSample};
    use ndarray::{array, Array2};

    fn traj_from(values: Vec<f64>, gamma: f64) -> Trajectory {
        let n = values.len();
        let incs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        Trajectory {
            gamma,
            start: vec![values[0]],
            values: Array2::from_shape_vec((n, 1), values).unwrap(),
            increments: Array2::from_shape_vec((n - 1, 1), incs).unwrap(),
            seed: 0,
            replica: 0,
        }
    }

    fn ou(h: f64, gamma: f64, n: usize, seed: u64) -> Trajectory {
        let m = VarianceFunction::fbm(h, 1.0).unwrap();
        let cov = increment_autocovariance(&m, gamma, n).unwrap();
        let noise = sample_increments(&cov, n, seed, 0).unwrap();
        euler_simulate(&Drift::linear(1.0, 1), gamma, n, &[0.0], &noise).unwrap()
    }

    #[test]
    fn marginal_examples() {
        let t = traj_from(vec![3.0; 6], 0.5);
        let m = marginal_empirical(&t, 1.0, 1, 0).unwrap();
        assert!(m.samples.iter().all(|&x| x == 3.0));
        let t = traj_from(vec![2.0, 0.0, 3.0, 1.0], 0.5);
        assert_eq!(
            marginal_empirical(&t, 0.0, 0, 0).unwrap().samples,
            vec![0.0, 1.0, 2.0, 3.0]
        );
        assert!(matches!(
            marginal_empirical(&t, 0.3, 0, 0),
            Err(MeasureError::OffGrid(_))
        ));
        assert!(marginal_empirical(&t, 0.0, 4, 0).is_err());
    }

    #[test]
    fn window_examples() {
        let t = traj_from(vec![0.0, 1.0, 2.0, 3.0, 4.0], 0.5);
        let w = functional_windows(&t, 0, 0.5, 3, 1).unwrap();
        assert_eq!(w.windows.dim(), (3, 2, 1));
        let pts: Vec<(f64, f64)> = (0..3)
            .map(|k| (w.windows[[k, 0, 0]], w.windows[[k, 1, 0]]))
            .collect();
        assert_eq!(pts, vec![(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
        let z = functional_windows(&t, 0, 0.0, 5, 1).unwrap();
        let points: Vec<f64> = (0..5).map(|k| z.windows[[k, 0, 0]]).collect();
        assert_eq!(points, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            functional_windows(&t, 0, 1.0, 4, 1),
            Err(MeasureError::TooShort { .. })
        ));
    }

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein1_sorted(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1_sorted(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1_sorted(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!(wasserstein1_sorted(&[], &[1.0]).is_err());
        // quantile matching picks the middle order statistic of three
        assert_eq!(wasserstein1_sorted(&[0.0, 5.0, 10.0], &[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn w1_to_normal_limits() {
        // a single atom at 0 against N(0, 1): E|Z| = sqrt(2/pi)
        let w = wasserstein1_to_normal(&[0.0], 1.0).unwrap();
        assert!((w - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        // an atom at a: E|Z - a| = 2 φ(a) + a (2Φ(a) - 1)
        let a = 0.7;
        let std = Normal::standard();
        let w = wasserstein1_to_normal(&[a], 1.0).unwrap();
        let expect = 2.0 * std.pdf(a) + a * (2.0 * std.cdf(a) - 1.0);
        assert!((w - expect).abs() < 1e-12);
        // brute-force quadrature of |F_n - Φ| on a fine grid
        let pts = [-1.3, -0.2, 0.1, 0.9, 2.4];
        let sigma = 1.7;
        let (lo, hi, m) = (-15.0, 15.0, 600_000);
        let h = (hi - lo) / m as f64;
        let brute: f64 = (0..m)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                let f = pts.iter().filter(|&&p| p <= x).count() as f64 / pts.len() as f64;
                (f - std.cdf(x / sigma)).abs() * h
            })
            .sum();
        let w = wasserstein1_to_normal(&pts, sigma).unwrap();
        assert!((w - brute).abs() < 1e-6, "{w} {brute}");
    }

    #[test]
    fn marginal_matches_window_column() {
        let t = ou(0.75, 0.1, 300, 1);
        let (burn, off) = (20, 3);
        let m = marginal_empirical(&t, 0.1 * off as f64, burn, 0).unwrap();
        // windows of length off starting at burn cover the same points
        let count = t.values.nrows() - burn - off;
        let w = functional_windows(&t, burn, 0.1 * off as f64, count, 1).unwrap();
        let mut col: Vec<f64> = (0..w.count()).map(|k| w.windows[[k, off, 0]]).collect();
        col.sort_by(f64::total_cmp);
        assert_eq!(col, m.samples);
    }

    #[test]
    fn constant_path_has_no_shift_discrepancy() {
        let t = traj_from(vec![1.5; 200], 0.1);
        let r = shift_invariance_stat(&t, &[0.0, 0.3], 7, 10).unwrap();
        assert_eq!(r.max_normalized(), 0.0);
    }

    #[test]
    fn shift_stat_separates_stationary_and_ramp() {
        let t = ou(0.5, 0.1, 40_000, 2);
        let r = shift_invariance_stat(&t, &[0.0, 0.5], 7, 2000).unwrap();
        assert!(r.max_normalized() < 4.0, "{r:?}");
        let mut ramp = t.clone();
        for (k, mut row) in ramp.values.rows_mut().into_iter().enumerate() {
            row[0] += 1e-2 * k as f64;
        }
        let r = shift_invariance_stat(&ramp, &[0.0, 0.5], 7, 2000).unwrap();
        assert!(r.max_normalized() > 4.0);
    }

    #[test]
    fn zero_drift_windows_give_back_raw_increments() {
        let noise = NoiseSample {
            gamma: 0.5,
            increments: array![[0.5, -1.0, 0.25, 2.0, -0.75]],
            seed: 0,
            replica: 0,
        };
        let drift = Drift::zero(1);
        let t = euler_simulate(&drift, 0.5, 5, &[0.0], &noise).unwrap();
        let w = functional_windows(&t, 0, 1.5, 3, 1).unwrap();
        let cov =
            increment_autocovariance(&VarianceFunction::brownian(1.0).unwrap(), 0.5, 2).unwrap();
        let r = reconstruct_noise(&w, &drift, 0.5, &cov, 1).unwrap();
        assert_eq!(r.increments, w.increments);
        assert!(matches!(
            reconstruct_noise(&w, &Drift::linear(1.0, 1), 0.5, &cov, 1),
            Err(MeasureError::Mismatch { .. })
        ));
    }

    #[test]
    fn brownian_reconstruction_is_white() {
        let m = VarianceFunction::brownian(1.0).unwrap();
        let cov = increment_autocovariance(&m, 0.1, 20_000).unwrap();
        let noise = sample_increments(&cov, 20_000, 3, 0).unwrap();
        let drift = Drift::linear(1.0, 1);
        let t = euler_simulate(&drift, 0.1, 20_000, &[0.0], &noise).unwrap();
        let w = functional_windows(&t, 0, 3.2, 600, 32).unwrap();
        let r = reconstruct_noise(&w, &drift, 0.1, &cov, 3).unwrap();
        assert!(r.residual < 1e-12);
        assert!(
            r.lags.iter().all(|l| l.normalized_dev.abs() < 4.0),
            "{:?}",
            r.lags
        );
    }

    #[test]
    fn sup_moment_scales_with_hurst() {
        let m = VarianceFunction::brownian(1.0).unwrap();
        let r = sup_moment_estimate(&m, &[0.1, 0.2], 256, 4000, 7).unwrap();
        let ratio = ratio_estimate(r.rows[1].1, r.rows[0].1);
        assert!(
            ratio.normalized_deviation(2f64.sqrt()).abs() < 3.0,
            "{ratio:?}"
        );
        assert!(sup_moment_estimate(&m, &[0.1], 100, 10, 0).is_err());
        assert!(sup_moment_estimate(&m, &[0.2, 0.1], 256, 10, 0).is_err());
    }
}
