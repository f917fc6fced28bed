//! Driving noise: variance functions, increment autocovariance and exact
//! sampling of the discrete increments `Δ_n = Z_{nγ} - Z_{(n-1)γ}`.

mod sampler;
mod variance;

use ndarray::Array2;
use thiserror::Error;

pub use sampler::{IncrementSampler, SamplerMethod, MAX_CHOLESKY_STEPS};
pub use variance::{
    check_h1, make_variance_model, read_table, H1Report, VarianceFunction, VarianceKind,
    VarianceParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("hurst index must lie in (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("exponents must satisfy a in (0, 2) and b > 0, got a={a_exp}, b={b_exp}")]
    InvalidExponents { a_exp: f64, b_exp: f64 },
    #[error("tabulated variance must vanish at t=0, got {0}")]
    NonzeroAtOrigin(f64),
    #[error("invalid variance table: {0}")]
    Table(String),
    #[error("unknown variance kind `{0}`")]
    UnknownKind(String),
    #[error("grid point {t} outside its admissible range")]
    GridOutOfRange { t: f64 },
    #[error("second difference at t={t} with step {step} is not finite or leaves (0, inf)")]
    SecondDifference { t: f64, step: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("{requested} steps exceed the dense factorization limit {available}")]
    TooManySteps { requested: usize, available: usize },
    #[error(
        "covariance is not positive semidefinite: circulant embedding min eigenvalue {circulant_min:e}, \
         Cholesky failed at row {row} with pivot {pivot:e}"
    )]
    NotPositiveSemidefinite {
        circulant_min: f64,
        row: usize,
        pivot: f64,
    },
}

/// Autocovariance `phi[n] = E[Δ_1 Δ_{n+1}]` of the increments at step `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementCovariance {
    gamma: f64,
    phi: Vec<f64>,
    source: VarianceFunction,
}

impl IncrementCovariance {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn source(&self) -> &VarianceFunction {
        &self.source
    }

    #[cfg(test)]
    pub(crate) fn from_parts(gamma: f64, phi: Vec<f64>, source: VarianceFunction) -> Self {
        Self { gamma, phi, source }
    }

    /// Same covariance evaluated up to lag `max_lag`.
    pub fn extended(&self, max_lag: usize) -> IncrementCovariance {
        if max_lag < self.phi.len() {
            let mut c = self.clone();
            c.phi.truncate(max_lag + 1);
            return c;
        }
        increment_autocovariance(&self.source, self.gamma, max_lag)
            .expect("gamma already validated")
    }

    /// Dense symmetric Toeplitz matrix of the first `n` lags.
    pub fn toeplitz(&self, n: usize) -> Array2<f64> {
        let phi = &self.phi;
        Array2::from_shape_fn((n, n), |(i, j)| phi[i.abs_diff(j)])
    }
}

/// Second difference of `c` on the `gamma` grid:
/// `phi[n] = (c((n+1)γ) - 2c(nγ) + c((n-1)γ)) / 2` for `n >= 1` and
/// `phi[0] = c(γ)`.
pub fn increment_autocovariance(
    model: &VarianceFunction,
    gamma: f64,
    max_lag: usize,
) -> Result<IncrementCovariance, NoiseError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(NoiseError::InvalidStep(gamma));
    }
    let c = |k: usize| model.eval(k as f64 * gamma);
    let mut phi = Vec::with_capacity(max_lag + 1);
    phi.push(c(1));
    for n in 1..=max_lag {
        let value = model
            .power_second_difference(gamma, n)
            .unwrap_or_else(|| 0.5 * (c(n + 1) - 2.0 * c(n) + c(n - 1)));
        phi.push(value);
    }
    Ok(IncrementCovariance {
        gamma,
        phi,
        source: model.clone(),
    })
}

/// A draw of `n` increments per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub gamma: f64,
    /// `[coordinate, step]`; column `k` holds `Δ_{k+1}`.
    pub increments: Array2<f64>,
    pub seed: u64,
    pub replica: u64,
}

impl NoiseSample {
    pub fn dimension(&self) -> usize {
        self.increments.nrows()
    }

    pub fn len(&self) -> usize {
        self.increments.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exact draw of `n` one-dimensional increments keyed by `(seed, replica)`.
pub fn sample_increments(
    cov: &IncrementCovariance,
    n: usize,
    seed: u64,
    replica: u64,
) -> Result<NoiseSample, NoiseError> {
    let sampler = IncrementSampler::new(cov, n, SamplerMethod::Auto)?;
    Ok(sampler.sample(seed, replica, 1))
}

/// Partial sums `Z̄_{kγ}` with `Z̄_0 = 0`, one row per coordinate.
pub fn discretized_path(sample: &NoiseSample) -> Array2<f64> {
    let (d, n) = sample.increments.dim();
    let mut path = Array2::zeros((d, n + 1));
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..n {
            acc += sample.increments[[i, k]];
            path[[i, k + 1]] = acc;
        }
    }
    path
}
