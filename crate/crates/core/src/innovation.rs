//! Finite-horizon innovations representation of the increments.
//!
//! For a stationary sequence with autocovariance `φ`, the innovations
//! algorithm produces predictor weights `θ_{n,j}` and one-step error
//! variances `v_n` such that
//! `Δ_n = e_n + Σ_{j=1..n} θ_{n,j} e_{n-j}` with uncorrelated `e_n` of
//! variance `v_n` (indices are 0-based). Normalizing `ξ_n = e_n / sqrt(v_n)`
//! gives i.i.d. standard normals for Gaussian input.

use rayon::prelude::*;
use thiserror::Error;

use ndarray::Array2;

use crate::dynamics::{euler_simulate, Drift, DynamicsError};
use crate::noise::{
    increment_autocovariance, IncrementCovariance, IncrementSampler, NoiseError, SamplerMethod,
    VarianceFunction,
};
use crate::stats::{correlation, Correlation};

/// Relative floor for the prediction-error variances.
const PD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InnovationError {
    #[error("covariance lost positive definiteness at n={n} (v={v:e})")]
    NotPositiveDefinite { n: usize, v: f64 },
    #[error("horizon {requested} exceeds the available {available}")]
    Horizon { requested: usize, available: usize },
    #[error("length {given} does not fit the model horizon {horizon}")]
    Length { given: usize, horizon: usize },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnovationModel {
    /// `theta[n][j]` for `1 <= j <= n`; `theta[n][0]` is unused and zero.
    theta: Vec<Vec<f64>>,
    v: Vec<f64>,
    cov: IncrementCovariance,
}

pub fn innovations_coefficients(
    cov: &IncrementCovariance,
    horizon: usize,
) -> Result<InnovationModel, InnovationError> {
    let cov = if cov.phi().len() < horizon {
        cov.extended(horizon.saturating_sub(1))
    } else {
        cov.clone()
    };
    let phi = cov.phi();
    let floor = PD_TOL * phi[0];
    let mut theta: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut v: Vec<f64> = Vec::with_capacity(horizon);
    for n in 0..horizon {
        let mut row = vec![0.0; n + 1];
        for k in 0..n {
            let mut s = phi[n - k];
            for j in 0..k {
                s -= theta[k][k - j] * row[n - j] * v[j];
            }
            row[n - k] = s / v[k];
        }
        let vn = phi[0] - (0..n).map(|j| row[n - j] * row[n - j] * v[j]).sum::<f64>();
        if !(vn > floor) {
            return Err(InnovationError::NotPositiveDefinite { n, v: vn });
        }
        theta.push(row);
        v.push(vn);
    }
    Ok(InnovationModel { theta, v, cov })
}

impl InnovationModel {
    pub fn horizon(&self) -> usize {
        self.v.len()
    }

    /// `θ_{n,j}`, the weight of the innovation `j` steps back when predicting
    /// index `n`.
    pub fn theta(&self, n: usize, j: usize) -> f64 {
        self.theta[n][j]
    }

    pub fn variances(&self) -> &[f64] {
        &self.v
    }

    pub fn covariance(&self) -> &IncrementCovariance {
        &self.cov
    }

    fn check_len(&self, len: usize) -> Result<(), InnovationError> {
        if len > self.horizon() {
            return Err(InnovationError::Length {
                given: len,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }

    /// `ξ_n = (Δ_n - Δ̂_n) / sqrt(v_n)`.
    pub fn whiten(&self, increments: &[f64]) -> Result<Vec<f64>, InnovationError> {
        self.check_len(increments.len())?;
        let mut e: Vec<f64> = Vec::with_capacity(increments.len());
        for (n, d) in increments.iter().enumerate() {
            let pred: f64 = (1..=n).map(|j| self.theta[n][j] * e[n - j]).sum();
            e.push(d - pred);
        }
        Ok(e.iter().zip(&self.v).map(|(e, v)| e / v.sqrt()).collect())
    }

    /// Inverse of [`whiten`](Self::whiten).
    pub fn color(&self, xi: &[f64]) -> Result<Vec<f64>, InnovationError> {
        self.check_len(xi.len())?;
        let e: Vec<f64> = xi.iter().zip(&self.v).map(|(x, v)| x * v.sqrt()).collect();
        Ok((0..xi.len())
            .map(|n| e[n] + (1..=n).map(|j| self.theta[n][j] * e[n - j]).sum::<f64>())
            .collect())
    }

    /// Lower-triangular `L` with `Δ = L ξ`.
    pub fn coloring_matrix(&self) -> Array2<f64> {
        let n = self.horizon();
        Array2::from_shape_fn((n, n), |(i, k)| {
            if k > i {
                0.0
            } else if k == i {
                self.v[i].sqrt()
            } else {
                self.theta[i][i - k] * self.v[k].sqrt()
            }
        })
    }

    /// `L Lᵀ`, which should reproduce the Toeplitz covariance.
    pub fn reconstructed_covariance(&self) -> Array2<f64> {
        let l = self.coloring_matrix();
        l.dot(&l.t())
    }

    /// Rows `n,k,theta,v` for `1 <= k <= n`, plus `k = 0` carrying `v_n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,k,theta,v\n");
        for n in 0..self.horizon() {
            out.push_str(&format!("{n},0,1,{}\n", self.v[n]));
            for k in 1..=n {
                out.push_str(&format!("{n},{k},{},{}\n", self.theta[n][k], self.v[n]));
            }
        }
        out
    }
}

/// `max_{1<=k<=k_max} |θ_{N-1,k} - θ_{N/2-1,k}|` for each horizon `N`.
pub fn theta_stabilization(
    cov: &IncrementCovariance,
    horizons: &[usize],
    k_max: usize,
) -> Result<Vec<(usize, f64)>, InnovationError> {
    let largest = horizons.iter().copied().max().unwrap_or(0);
    let model = innovations_coefficients(cov, largest)?;
    Ok(horizons
        .iter()
        .map(|&n| {
            let (a, b) = (n - 1, n / 2 - 1);
            let drift = (1..=k_max.min(b))
                .map(|k| (model.theta(a, k) - model.theta(b, k)).abs())
                .fold(0.0, f64::max);
            (n, drift)
        })
        .collect())
}

/// Pooled whiteness check over many whitened vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    pub variance: f64,
    /// `(variance - 1) / stderr`.
    pub variance_t: f64,
    /// `(lag, correlation)` of pooled pairs `(ξ_n, ξ_{n+lag})`.
    pub lags: Vec<(usize, Correlation)>,
}

pub fn whiteness(vectors: &[Vec<f64>], max_lag: usize) -> WhitenessReport {
    let pooled: Vec<f64> = vectors.iter().flatten().copied().collect();
    let squares: Vec<f64> = pooled.iter().map(|x| x * x).collect();
    let var = crate::stats::iid_estimate(&squares);
    let lags = (1..=max_lag)
        .map(|lag| {
            let (a, b): (Vec<f64>, Vec<f64>) = vectors
                .iter()
                .flat_map(|x| x.iter().zip(&x[lag.min(x.len())..]).map(|(a, b)| (*a, *b)))
                .unzip();
            (lag, correlation(&a, &b))
        })
        .collect();
    WhitenessReport {
        variance: var.value,
        variance_t: var.normalized_deviation(1.0),
        lags,
    }
}

/// Bounded functionals of the past endpoint `X̄_{n γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastFunctional {
    ClippedIdentity,
    ClippedSquare,
}

pub const CLIP: f64 = 5.0;

impl PastFunctional {
    pub fn apply(self, x: f64) -> f64 {
        let c = x.clamp(-CLIP, CLIP);
        match self {
            PastFunctional::ClippedIdentity => c,
            PastFunctional::ClippedSquare => c * c,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PastFunctional::ClippedIdentity => "clipped_x",
            PastFunctional::ClippedSquare => "clipped_x2",
        }
    }
}

/// What the past is correlated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FutureTarget {
    Innovations,
    Increments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceRow {
    pub functional: PastFunctional,
    pub target: FutureTarget,
    pub lag: usize,
    pub correlation: Correlation,
}

/// One replica: the path endpoint at the split and the full increment row
/// (first coordinate) that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSample {
    pub endpoint: f64,
    pub increments: Vec<f64>,
}

/// Correlates each past functional of `X̄_{n_split γ}` with
/// `ξ_{n_split+1+lag}` (or `Δ_{n_split+1+lag}`), 1-based, across replicas.
pub fn past_future_independence_stat(
    samples: &[SplitSample],
    model: &InnovationModel,
    n_split: usize,
    functionals: &[PastFunctional],
    lags: &[usize],
    target: FutureTarget,
) -> Result<Vec<IndependenceRow>, InnovationError> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let needed = n_split + 1 + max_lag;
    if needed > model.horizon() {
        return Err(InnovationError::Horizon {
            requested: needed,
            available: model.horizon(),
        });
    }
    let futures: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| -> Result<Vec<f64>, InnovationError> {
            if s.increments.len() < needed {
                return Err(InnovationError::Horizon {
                    requested: needed,
                    available: s.increments.len(),
                });
            }
            let seq = match target {
                FutureTarget::Innovations => model.whiten(&s.increments[..needed])?,
                FutureTarget::Increments => s.increments[..needed].to_vec(),
            };
            Ok(lags.iter().map(|l| seq[n_split + l]).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for &f in functionals {
        let past: Vec<f64> = samples.iter().map(|s| f.apply(s.endpoint)).collect();
        for (i, &lag) in lags.iter().enumerate() {
            let fut: Vec<f64> = futures.iter().map(|v| v[i]).collect();
            rows.push(IndependenceRow {
                functional: f,
                target,
                lag,
                correlation: correlation(&past, &fut),
            });
        }
    }
    Ok(rows)
}

/// Simulates `replicas` scalar Euler paths of length `steps` from 0 and
/// returns the split samples at `n_split`.
pub fn split_samples(
    drift: &Drift,
    model: &VarianceFunction,
    gamma: f64,
    steps: usize,
    n_split: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<SplitSample>, InnovationError> {
    let cov = increment_autocovariance(model, gamma, steps)?;
    let sampler = IncrementSampler::new(&cov, steps, SamplerMethod::Auto)?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let noise = sampler.sample(seed, r, 1);
            let traj = euler_simulate(drift, gamma, steps, &[0.0], &noise)?;
            Ok(SplitSample {
                endpoint: traj.values[[n_split, 0]],
                increments: noise.increments.row(0).to_vec(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceReport {
    pub burn_steps: usize,
    pub gap: usize,
    pub correlation: Correlation,
}

/// `Corr(X̄_{Tγ}, Z̄_{(T+gap)γ} - Z̄_{Tγ})` across replicas started at 0,
/// with `T = ceil(burn_multiple / (α γ))`.
pub fn initial_dependence_stat(
    drift: &Drift,
    model: &VarianceFunction,
    gamma: f64,
    gap: usize,
    burn_multiple: f64,
    replicas: usize,
    seed: u64,
) -> Result<DependenceReport, InnovationError> {
    let burn = (burn_multiple / (drift.alpha * gamma)).ceil() as usize;
    let samples = split_samples(drift, model, gamma, burn + gap, burn, replicas, seed)?;
    let x: Vec<f64> = samples.iter().map(|s| s.endpoint).collect();
    let dz: Vec<f64> = samples
        .iter()
        .map(|s| s.increments[burn..burn + gap].iter().sum())
        .collect();
    Ok(DependenceReport {
        burn_steps: burn,
        gap,
        correlation: correlation(&x, &dz),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_standard_normal, Purpose, StreamKey};

    fn cov_of(h: f64, gamma: f64, n: usize) -> IncrementCovariance {
        increment_autocovariance(&VarianceFunction::fbm(h, 1.0).unwrap(), gamma, n).unwrap()
    }

    fn custom_cov(phi: Vec<f64>) -> IncrementCovariance {
        // reuse a real covariance object and overwrite its lags
        let base = cov_of(0.5, 1.0, phi.len() - 1);
        IncrementCovariance::from_parts(base.gamma(), phi, base.source().clone())
    }

    #[test]
    fn white_sequence_has_nothing_to_predict() {
        let cov =
            increment_autocovariance(&VarianceFunction::brownian(2.0).unwrap(), 0.5, 10).unwrap();
        let m = innovations_coefficients(&cov, 8).unwrap();
        assert!(m.variances().iter().all(|&v| v == 1.0));
        for n in 0..8 {
            for j in 1..=n {
                assert_eq!(m.theta(n, j), 0.0);
            }
        }
        let d = [1.0, -2.0, 0.5];
        assert_eq!(m.whiten(&d).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn ma1_limits() {
        let mut phi = vec![0.0; 200];
        phi[0] = 1.0;
        phi[1] = 0.4;
        let m = innovations_coefficients(&custom_cov(phi), 200).unwrap();
        assert!((m.theta(199, 1) - 0.5).abs() < 1e-8);
        assert!((m.variances()[199] - 0.8).abs() < 1e-8);
        assert!(m.theta(199, 2).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_fbm_covariance() {
        for h in [0.25, 0.75] {
            let cov = cov_of(h, 0.1, 64);
            let m = innovations_coefficients(&cov, 64).unwrap();
            let r = m.reconstructed_covariance();
            let t = cov.toeplitz(64);
            let err = (&r - &t).iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(err < 1e-9, "H={h}: {err}");
            assert!(m
                .variances()
                .windows(2)
                .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn whiten_color_round_trip() {
        let cov = cov_of(0.75, 0.1, 50);
        let m = innovations_coefficients(&cov, 50).unwrap();
        let mut z = vec![0.0; 50];
        fill_standard_normal(
            &mut StreamKey::new(3, 0, 0, Purpose::AuxiliaryNoise).rng(),
            &mut z,
        );
        let back = m.color(&m.whiten(&z).unwrap()).unwrap();
        let fwd = m.whiten(&m.color(&z).unwrap()).unwrap();
        for i in 0..50 {
            assert!((back[i] - z[i]).abs() < 1e-10);
            assert!((fwd[i] - z[i]).abs() < 1e-10);
        }
        assert!(m.whiten(&vec![0.0; 51]).is_err());
    }

    #[test]
    fn indefinite_input_names_the_row() {
        let err = innovations_coefficients(&custom_cov(vec![1.0, 0.9, -0.9]), 3).unwrap_err();
        assert!(
            matches!(err, InnovationError::NotPositiveDefinite { n: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn theta_settles_as_horizon_grows() {
        let cov = cov_of(0.75, 0.1, 256);
        let s = theta_stabilization(&cov, &[32, 64, 128, 256], 5).unwrap();
        assert!(s.windows(2).all(|w| w[1].1 < w[0].1), "{s:?}");
    }

    #[test]
    fn csv_layout() {
        let m = innovations_coefficients(&cov_of(0.75, 0.1, 3), 3).unwrap();
        let csv = m.to_csv();
        assert!(csv.starts_with("n,k,theta,v\n0,0,1,"));
        assert_eq!(csv.lines().count(), 1 + 1 + 2 + 3);
    }

    #[test]
    fn whitened_fbm_is_white() {
        let cov = cov_of(0.75, 0.1, 32);
        let m = innovations_coefficients(&cov, 32).unwrap();
        let sampler = IncrementSampler::new(&cov, 32, SamplerMethod::Auto).unwrap();
        let xs: Vec<Vec<f64>> = (0..3000)
            .map(|r| m.whiten(&sampler.draw(StreamKey::noise(5, r, 0))).unwrap())
            .collect();
        let w = whiteness(&xs, 3);
        assert!(w.variance_t.abs() < 4.0, "{w:?}");
        assert!(w.lags.iter().all(|(_, c)| c.t_stat.abs() < 4.0), "{w:?}");
    }
}
