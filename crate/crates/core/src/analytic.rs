//! Oracles for the discrete Ornstein–Uhlenbeck recursion
//! `Σ_{(n+1)γ} = (1 - γθ) Σ_{nγ} + Δ_{n+1}`, `Σ_0 = 0`.
//!
//! Two analytic routes to `v(γ) = lim E[Σ_{nγ}^2]` are provided. The double
//! sum `Σ_{k,l} q^{k+l} φ(|l-k|)` with `q = 1 - γθ` is the definition and is
//! used as ground truth. The reindexed series
//! `w(γ) = c(γ) + Σ_{u>=1} q^u (c(γ(u+1)) - c(γu))` is kept for comparison;
//! it does not agree with the double sum (for Brownian motion `w = 1` while
//! `v = γ / (1 - q^2)`).

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::noise::{
    increment_autocovariance, IncrementCovariance, IncrementSampler, NoiseError, SamplerMethod,
    VarianceFunction, VarianceKind,
};
use crate::rng::StreamKey;
use crate::stats::{batch_means, iid_estimate, stable_sum, Estimate};

const MAX_TERMS: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("step must satisfy 0 < gamma*theta < 1, got gamma={gamma}, theta={theta}")]
    InvalidStep { gamma: f64, theta: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("{n_steps} steps leave a start-up bias of {bias:e} (need below 1e-6)")]
    TooFewSteps { n_steps: usize, bias: f64 },
    #[error("richardson extrapolation needs three geometric steps with monotone differences")]
    Richardson,
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OUMethod {
    Series,
    DoubleSum,
    ClosedForm,
}

impl fmt::Display for OUMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OUMethod::Series => "series",
            OUMethod::DoubleSum => "double_sum",
            OUMethod::ClosedForm => "closed_form",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OUVarianceResult {
    pub gamma: f64,
    pub method: OUMethod,
    pub value: f64,
    pub truncation_bound: f64,
    pub terms_used: usize,
    /// False when the term ceiling was hit before the tail bound met `tol`.
    pub converged: bool,
}

fn contraction(gamma: f64, theta: f64) -> Result<f64, AnalyticError> {
    let q = 1.0 - gamma * theta;
    if !(gamma > 0.0 && theta > 0.0 && q > 0.0 && q < 1.0) {
        return Err(AnalyticError::InvalidStep { gamma, theta });
    }
    Ok(q)
}

fn check_tol(tol: f64) -> Result<(), AnalyticError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(AnalyticError::InvalidTolerance(tol))
    }
}

/// `f_γ(u) = c(γ(u+1)) - c(γu)`.
pub fn f_gamma(model: &VarianceFunction, gamma: f64, u: u64) -> f64 {
    model.eval(gamma * (u + 1) as f64) - model.eval(gamma * u as f64)
}

/// The reindexed series `w(γ)` at `θ = 1`.
///
/// Terms are bounded by `q^u 2K(1 + (γ(u+1))^g)` from the growth envelope
/// `c(t) <= K(1 + t^g)`; summation stops once the geometric tail of that
/// bound falls below `tol`.
pub fn ou_limit_variance_series(
    model: &VarianceFunction,
    gamma: f64,
    tol: f64,
) -> Result<OUVarianceResult, AnalyticError> {
    let q = contraction(gamma, 1.0)?;
    check_tol(tol)?;
    let (k, g) = model.growth_envelope();
    let bound = |u: usize| 2.0 * k * (1.0 + (gamma * (u + 1) as f64).powf(g));
    let mut terms = vec![model.eval(gamma)];
    let mut qu = 1.0;
    let mut tail = f64::INFINITY;
    let mut u = 0usize;
    while u < MAX_TERMS {
        u += 1;
        qu *= q;
        terms.push(qu * f_gamma(model, gamma, u as u64));
        let rho = q * ((u + 3) as f64 / (u + 2) as f64).powf(g);
        if rho < 1.0 {
            tail = qu * q * bound(u + 1) / (1.0 - rho);
            if tail < tol {
                break;
            }
        }
    }
    Ok(OUVarianceResult {
        gamma,
        method: OUMethod::Series,
        value: stable_sum(terms),
        truncation_bound: tail,
        terms_used: u + 1,
        converged: tail < tol,
    })
}

/// Double sum `lim_n Σ_{k,l<n} q^{k+l} φ(|l-k|)` at `θ = 1`.
pub fn ou_limit_variance_doublesum(
    model: &VarianceFunction,
    gamma: f64,
    tol: f64,
) -> Result<OUVarianceResult, AnalyticError> {
    ou_doublesum_with_rate(model, gamma, 1.0, tol)
}

/// Double sum for `q = 1 - γθ`, summed along diagonals:
/// `v = (φ(0) + 2 Σ_{m>=1} q^m φ(m)) / (1 - q^2)`.
///
/// The tail uses `|φ(m)| <= φ(0)` (a stationary autocovariance never
/// exceeds the variance), so the lags past `M` add at most
/// `2 φ(0) q^{M+1} / ((1 - q)(1 - q^2))`.
pub fn ou_doublesum_with_rate(
    model: &VarianceFunction,
    gamma: f64,
    theta: f64,
    tol: f64,
) -> Result<OUVarianceResult, AnalyticError> {
    let q = contraction(gamma, theta)?;
    check_tol(tol)?;
    let norm = 1.0 - q * q;
    let phi0 = model.eval(gamma);
    let tail_after = |m: usize| 2.0 * phi0 * q.powi(m as i32 + 1) / ((1.0 - q) * norm);
    // smallest M whose tail meets tol, capped by the ceiling
    let needed = ((tol * (1.0 - q) * norm / (2.0 * phi0)).ln() / q.ln()).ceil();
    let lags = if needed.is_finite() && needed > 0.0 {
        (needed as usize).min(MAX_TERMS)
    } else {
        1
    };
    let cov = increment_autocovariance(model, gamma, lags)?;
    let value = diagonal_sum(cov.phi(), q);
    let tail = tail_after(lags);
    Ok(OUVarianceResult {
        gamma,
        method: OUMethod::DoubleSum,
        value,
        truncation_bound: tail,
        terms_used: lags + 1,
        converged: tail < tol,
    })
}

fn diagonal_sum(phi: &[f64], q: f64) -> f64 {
    let mut qm = 1.0;
    let terms = phi.iter().enumerate().map(|(m, p)| {
        let w = if m == 0 { 1.0 } else { 2.0 * qm };
        qm *= q;
        w * p
    });
    stable_sum(terms) / (1.0 - q * q)
}

/// `sγ / (1 - q^2)` for models with independent increments (Brownian motion
/// and fbm with `H = 1/2`); `None` otherwise.
pub fn ou_limit_variance_closed_form(
    model: &VarianceFunction,
    gamma: f64,
    theta: f64,
) -> Result<Option<OUVarianceResult>, AnalyticError> {
    let q = contraction(gamma, theta)?;
    let white = match model.kind() {
        VarianceKind::Brownian => true,
        VarianceKind::Fbm => model.hurst() == Some(0.5),
        VarianceKind::Tabulated => false,
    };
    Ok(white.then(|| OUVarianceResult {
        gamma,
        method: OUMethod::ClosedForm,
        value: model.scale() * gamma / (1.0 - q * q),
        truncation_bound: 0.0,
        terms_used: 0,
        converged: true,
    }))
}

/// Summation order for the finite double sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumOrder {
    /// Row by row over `k`, then `l`.
    Rows,
    /// By lag `m = |l - k|`.
    Diagonals,
}

/// `Σ_{k,l<n} q^{k+l} φ(|l-k|)` at `θ = 1`.
pub fn ou_partial_doublesum(
    model: &VarianceFunction,
    gamma: f64,
    n: usize,
    order: SumOrder,
) -> Result<f64, AnalyticError> {
    let q = contraction(gamma, 1.0)?;
    if n == 0 {
        return Ok(0.0);
    }
    let cov = increment_autocovariance(model, gamma, n - 1)?;
    let phi = cov.phi();
    let pw: Vec<f64> = (0..=2 * n).map(|j| q.powi(j as i32)).collect();
    Ok(match order {
        SumOrder::Rows => stable_sum(
            (0..n)
                .flat_map(|k| (0..n).map(move |l| (k, l)))
                .map(|(k, l)| pw[k + l] * phi[k.abs_diff(l)]),
        ),
        SumOrder::Diagonals => {
            let norm = 1.0 - q * q;
            stable_sum((0..n).map(|m| {
                let pairs = if m == 0 { 1.0 } else { 2.0 };
                // Σ_{k=0}^{n-m-1} q^{2k+m}
                pairs * phi[m] * pw[m] * (1.0 - pw[2 * (n - m)]) / norm
            }))
        }
    })
}

/// Bound on `|v(γ) - partial(n)|` for `θ = 1`: with `|φ| <= φ(0)` the pairs
/// with `max(k, l) >= n` weigh at most `φ(0) (1 - (1 - q^n)^2) / (1 - q)^2`.
pub fn ou_partial_tail_bound(model: &VarianceFunction, gamma: f64, n: usize) -> f64 {
    let q = 1.0 - gamma;
    let head = 1.0 - q.powi(n as i32);
    model.eval(gamma) * (1.0 - head * head) / ((1.0 - q) * (1.0 - q))
}

/// Largest double-sum value over `points` equally spaced steps in `(0, gamma_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupReport {
    pub grid: Vec<(f64, f64)>,
    pub argmax: f64,
    pub max: f64,
}

pub fn doublesum_sup(
    model: &VarianceFunction,
    gamma_max: f64,
    points: usize,
    tol: f64,
) -> Result<SupReport, AnalyticError> {
    let mut grid = Vec::with_capacity(points);
    for i in 1..=points {
        let g = gamma_max * i as f64 / points as f64;
        grid.push((g, ou_limit_variance_doublesum(model, g, tol)?.value));
    }
    let (argmax, max) =
        grid.iter().copied().fold(
            (f64::NAN, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    Ok(SupReport { grid, argmax, max })
}

/// Limit of `v(γ) = L + A γ^p` from three steps in geometric progression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub limit: f64,
    pub order: f64,
}

/// `gammas` must be `(r^2 h, r h, h)` for some ratio `r > 1`.
pub fn richardson(gammas: [f64; 3], values: [f64; 3]) -> Result<Extrapolation, AnalyticError> {
    let r = gammas[0] / gammas[1];
    if !(r > 1.0) || ((gammas[1] / gammas[2]) / r - 1.0).abs() > 1e-9 {
        return Err(AnalyticError::Richardson);
    }
    let ratio = (values[0] - values[1]) / (values[1] - values[2]);
    if !(ratio > 0.0 && ratio.is_finite()) || ratio == 1.0 {
        return Err(AnalyticError::Richardson);
    }
    let order = ratio.ln() / r.ln();
    let limit = values[2] - (values[1] - values[2]) / (r.powf(order) - 1.0);
    Ok(Extrapolation { limit, order })
}

fn ou_sampler(
    model: &VarianceFunction,
    gamma: f64,
    n_steps: usize,
) -> Result<IncrementSampler, AnalyticError> {
    let cov: IncrementCovariance = increment_autocovariance(model, gamma, n_steps)?;
    Ok(IncrementSampler::new(&cov, n_steps, SamplerMethod::Auto)?)
}

fn ou_endpoint(noise: &[f64], q: f64) -> f64 {
    noise.iter().fold(0.0, |s, d| q * s + d)
}

/// `E[Σ_{nγ}^2]` at `θ = 1` from the final step of independent replicas.
pub fn ou_mc_variance(
    model: &VarianceFunction,
    gamma: f64,
    n_steps: usize,
    replicas: usize,
    seed: u64,
) -> Result<Estimate, AnalyticError> {
    ou_mc_variance_with_rate(model, gamma, 1.0, n_steps, replicas, seed)
}

pub fn ou_mc_variance_with_rate(
    model: &VarianceFunction,
    gamma: f64,
    theta: f64,
    n_steps: usize,
    replicas: usize,
    seed: u64,
) -> Result<Estimate, AnalyticError> {
    let q = contraction(gamma, theta)?;
    let bias = q.powi(n_steps as i32);
    if bias >= 1e-6 {
        return Err(AnalyticError::TooFewSteps { n_steps, bias });
    }
    let sampler = ou_sampler(model, gamma, n_steps)?;
    let squares: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let x = ou_endpoint(&sampler.draw(StreamKey::noise(seed, r, 0)), q);
            x * x
        })
        .collect();
    Ok(batch_means(&squares))
}

/// Time average of `Σ^2` after `burn_in` steps, averaged over replicas; the
/// standard error comes from the spread of the per-replica averages.
pub fn ou_ergodic_variance(
    model: &VarianceFunction,
    gamma: f64,
    theta: f64,
    n_steps: usize,
    burn_in: usize,
    replicas: usize,
    seed: u64,
) -> Result<Estimate, AnalyticError> {
    let q = contraction(gamma, theta)?;
    let sampler = ou_sampler(model, gamma, n_steps)?;
    let averages: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let noise = sampler.draw(StreamKey::noise(seed, r, 0));
            let mut x = 0.0;
            let mut kept = Vec::with_capacity(n_steps.saturating_sub(burn_in));
            for (k, d) in noise.iter().enumerate() {
                x = q * x + d;
                if k + 1 > burn_in {
                    kept.push(x * x);
                }
            }
            stable_sum(kept.iter().copied()) / kept.len().max(1) as f64
        })
        .collect();
    let mut e = iid_estimate(&averages);
    e.count = averages.len();
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> VarianceFunction {
        VarianceFunction::brownian(1.0).unwrap()
    }

    fn fbm(h: f64) -> VarianceFunction {
        VarianceFunction::fbm(h, 1.0).unwrap()
    }

    #[test]
    fn first_difference_examples() {
        for g in [0.01, 0.3] {
            for u in [0, 1, 17] {
                assert!((f_gamma(&bm(), g, u) - g).abs() < 1e-15);
            }
        }
        assert!((f_gamma(&fbm(0.75), 1.0, 1) - 1.828427).abs() < 1e-6);
        assert_eq!(f_gamma(&fbm(0.3), 0.2, 0), fbm(0.3).eval(0.2));
    }

    #[test]
    fn series_for_brownian_is_one() {
        let r = ou_limit_variance_series(&bm(), 0.5, 1e-13).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{r:?}");
        assert!(r.converged);
        let h = ou_limit_variance_series(&fbm(0.5), 0.5, 1e-13).unwrap();
        assert!((h.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn series_bound_is_consistent() {
        let m = fbm(0.7);
        let loose = ou_limit_variance_series(&m, 0.05, 1e-6).unwrap();
        let tight = ou_limit_variance_series(&m, 0.05, 1e-7).unwrap();
        assert!((loose.value - tight.value).abs() <= loose.truncation_bound);
        assert!(tight.truncation_bound < 1e-7);
    }

    #[test]
    fn doublesum_matches_closed_form() {
        for (g, expect) in [(0.5, 2.0 / 3.0), (0.1, 0.1 / 0.19)] {
            let r = ou_limit_variance_doublesum(&bm(), g, 1e-14).unwrap();
            assert!((r.value - expect).abs() < 1e-12, "{r:?}");
        }
        assert!((0.1f64 / 0.19 - 0.526316).abs() < 1e-6);
        for g in [0.01, 0.07, 0.2, 0.45] {
            let closed = ou_limit_variance_closed_form(&fbm(0.5), g, 1.0)
                .unwrap()
                .unwrap();
            let ds = ou_limit_variance_doublesum(&fbm(0.5), g, 1e-14).unwrap();
            assert!((ds.value - closed.value).abs() < 1e-12 * closed.value);
        }
        assert!(ou_limit_variance_closed_form(&fbm(0.7), 0.1, 1.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn summation_order_is_irrelevant() {
        for m in [fbm(0.75), fbm(0.25), bm()] {
            let a = ou_partial_doublesum(&m, 0.1, 300, SumOrder::Rows).unwrap();
            let b = ou_partial_doublesum(&m, 0.1, 300, SumOrder::Diagonals).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn partial_sums_respect_tail_bound() {
        let m = fbm(0.75);
        for n in [5, 20, 80] {
            let a = ou_partial_doublesum(&m, 0.1, n, SumOrder::Diagonals).unwrap();
            let b = ou_partial_doublesum(&m, 0.1, 2 * n, SumOrder::Diagonals).unwrap();
            assert!((a - b).abs() <= ou_partial_tail_bound(&m, 0.1, n));
        }
        let limit = ou_limit_variance_doublesum(&m, 0.1, 1e-14).unwrap().value;
        let far = ou_partial_doublesum(&m, 0.1, 600, SumOrder::Diagonals).unwrap();
        assert!((far - limit).abs() < 1e-12);
    }

    #[test]
    fn doublesum_values_against_direct_evaluation() {
        // independent route: plain lag loop with raw second differences
        let m = fbm(0.7);
        for (g, expect) in [(0.2, 0.66275), (0.1, 0.64077), (0.05, 0.63066)] {
            let q = 1.0 - g;
            let c = |t: f64| t.powf(1.4);
            let mut s = c(g);
            for k in 1..5000 {
                let kf = k as f64;
                let phi = 0.5 * (c((kf + 1.0) * g) - 2.0 * c(kf * g) + c((kf - 1.0) * g));
                s += 2.0 * q.powi(k) * phi;
            }
            let direct = s / (1.0 - q * q);
            let v = ou_limit_variance_doublesum(&m, g, 1e-13).unwrap().value;
            assert!((v - direct).abs() < 1e-10);
            assert!((v - expect).abs() < 5e-5, "{g}: {v}");
        }
    }

    #[test]
    fn richardson_recovers_power_law() {
        let f = |g: f64| 2.0 + 3.0 * g.powf(1.3);
        let e = richardson([0.04, 0.02, 0.01], [f(0.04), f(0.02), f(0.01)]).unwrap();
        assert!((e.limit - 2.0).abs() < 1e-10);
        assert!((e.order - 1.3).abs() < 1e-10);
        assert!(richardson([0.04, 0.03, 0.01], [1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn sup_over_grid_is_finite() {
        let r = doublesum_sup(&fbm(0.75), 0.5, 50, 1e-10).unwrap();
        assert_eq!(r.grid.len(), 50);
        assert!(r.max.is_finite() && r.grid.iter().all(|(_, v)| v.is_finite()));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ou_limit_variance_doublesum(&bm(), 1.0, 1e-10).is_err());
        assert!(ou_limit_variance_series(&bm(), 0.5, 0.0).is_err());
        assert!(matches!(
            ou_mc_variance(&bm(), 0.1, 10, 4, 0),
            Err(AnalyticError::TooFewSteps { .. })
        ));
    }

    #[test]
    fn mc_brownian_matches_closed_form() {
        let e = ou_mc_variance(&bm(), 0.5, 40, 20_000, 1).unwrap();
        assert!(e.normalized_deviation(2.0 / 3.0).abs() < 3.0, "{e:?}");
        let e = ou_mc_variance(&bm(), 0.1, 200, 20_000, 2).unwrap();
        assert!(e.normalized_deviation(0.1 / 0.19).abs() < 3.0, "{e:?}");
    }
}
