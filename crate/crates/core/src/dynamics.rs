//! Drifts and the constant-step Euler scheme
//! `X̄_{(n+1)γ} = X̄_{nγ} + γ b(X̄_{nγ}) + Δ_{n+1}`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::noise::NoiseSample;
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("noise provides {available} increments, {requested} requested")]
    NoiseTooShort { requested: usize, available: usize },
    #[error("step {given} does not match the noise step {noise}")]
    StepMismatch { given: f64, noise: f64 },
    #[error("dimension mismatch: drift {drift}, state {state}")]
    Dimension { drift: usize, state: usize },
    #[error("unknown drift kind `{0}`")]
    UnknownKind(String),
    #[error("invalid drift parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriftKind {
    Linear,
    SinePerturbed,
    Custom,
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftKind::Linear => "linear",
            DriftKind::SinePerturbed => "sine_perturbed",
            DriftKind::Custom => "custom",
        })
    }
}

impl FromStr for DriftKind {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "linear" => Ok(DriftKind::Linear),
            "sine_perturbed" => Ok(DriftKind::SinePerturbed),
            "custom" => Ok(DriftKind::Custom),
            other => Err(DynamicsError::UnknownKind(other.to_string())),
        }
    }
}

/// User-supplied drift `b`, writing `b(x)` into the output slice.
pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A drift together with the dissipativity constants it claims:
/// `<b(x) - b(y), x - y> <= beta - alpha |x - y|^2`.
#[derive(Clone)]
pub struct Drift {
    kind: DriftKind,
    theta: f64,
    dimension: usize,
    pub alpha: f64,
    pub beta: f64,
    lipschitz: f64,
    custom: Option<DriftFn>,
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drift")
            .field("kind", &self.kind)
            .field("theta", &self.theta)
            .field("dimension", &self.dimension)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Drift {
    /// `b(x) = -theta x`; dissipative with `alpha = theta`, `beta = 0`,
    /// Lipschitz constant `theta`.
    pub fn linear(theta: f64, dimension: usize) -> Self {
        Self {
            kind: DriftKind::Linear,
            theta,
            dimension,
            alpha: theta,
            beta: 0.0,
            lipschitz: theta.abs(),
            custom: None,
        }
    }

    /// `b(x) = -theta x + (theta / 2) sin(x)` componentwise; dissipative with
    /// `alpha = theta / 2`, `beta = 0`, Lipschitz constant `3 theta / 2`.
    pub fn sine_perturbed(theta: f64, dimension: usize) -> Self {
        Self {
            kind: DriftKind::SinePerturbed,
            theta,
            dimension,
            alpha: 0.5 * theta,
            beta: 0.0,
            lipschitz: 1.5 * theta.abs(),
            custom: None,
        }
    }

    /// Arbitrary drift. The claimed constants are the caller's responsibility;
    /// [`check_dissipativity`] screens them.
    pub fn custom(
        dimension: usize,
        alpha: f64,
        beta: f64,
        lipschitz: f64,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: DriftKind::Custom,
            theta: 0.0,
            dimension,
            alpha,
            beta,
            lipschitz,
            custom: Some(Arc::new(f)),
        }
    }

    /// `b ≡ 0`.
    pub fn zero(dimension: usize) -> Self {
        Self::custom(dimension, 0.0, 0.0, 0.0, |_, out| out.fill(0.0))
    }

    pub fn from_kind(kind: DriftKind, theta: f64, dimension: usize) -> Result<Self, DynamicsError> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!("theta={theta}")));
        }
        if dimension == 0 {
            return Err(DynamicsError::InvalidParameter("dimension=0".into()));
        }
        match kind {
            DriftKind::Linear => Ok(Self::linear(theta, dimension)),
            DriftKind::SinePerturbed => Ok(Self::sine_perturbed(theta, dimension)),
            DriftKind::Custom => Err(DynamicsError::InvalidParameter(
                "custom drifts are built with Drift::custom".into(),
            )),
        }
    }

    pub fn kind(&self) -> DriftKind {
        self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            DriftKind::Linear => {
                for (o, x) in out.iter_mut().zip(x) {
                    *o = -self.theta * x;
                }
            }
            DriftKind::SinePerturbed => {
                for (o, x) in out.iter_mut().zip(x) {
                    *o = -self.theta * x + 0.5 * self.theta * x.sin();
                }
            }
            DriftKind::Custom => (self.custom.as_ref().expect("custom drift"))(x, out),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Result of screening a drift against its claimed constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    /// `max <b(x)-b(y), x-y> + alpha |x-y|^2 - beta` over the pairs.
    pub max_violation: f64,
    /// `max <x, b(x)> + alpha |x|^2 - beta` over all points seen.
    pub max_origin_violation: f64,
    /// `max |b(x)| / (1 + |x|)` over all points seen.
    pub sublinear_constant: f64,
    pub pass: bool,
}

pub const DISSIPATIVITY_TOL: f64 = 1e-9;

pub fn check_dissipativity(drift: &Drift, pairs: &[(Vec<f64>, Vec<f64>)]) -> DissipativityReport {
    let d = drift.dimension();
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_origin = f64::NEG_INFINITY;
    let mut sublinear = 0.0f64;
    for (x, y) in pairs {
        drift.eval(x, &mut bx);
        drift.eval(y, &mut by);
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let bdiff: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
        worst = worst.max(dot(&bdiff, &diff) + drift.alpha * norm2(&diff) - drift.beta);
        for (p, bp) in [(x, &bx), (y, &by)] {
            worst_origin = worst_origin.max(dot(p, bp) + drift.alpha * norm2(p) - drift.beta);
            sublinear = sublinear.max(norm2(bp).sqrt() / (1.0 + norm2(p).sqrt()));
        }
    }
    DissipativityReport {
        max_violation: worst,
        max_origin_violation: worst_origin,
        sublinear_constant: sublinear,
        pass: worst <= DISSIPATIVITY_TOL && worst_origin <= DISSIPATIVITY_TOL,
    }
}

/// Deterministic grid on `[-radius, radius]^d` (at most 21 points per axis,
/// capped at 4096 points) paired with every other grid point, plus `random`
/// uniform pairs from the `(seed, Pairs)` stream.
pub fn sample_pairs(
    dimension: usize,
    radius: f64,
    random: usize,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let per_axis = ((4096f64).powf(1.0 / dimension as f64).floor() as usize).clamp(2, 21);
    let total = per_axis.pow(dimension as u32);
    let grid: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            (0..dimension)
                .map(|_| {
                    let k = idx % per_axis;
                    idx /= per_axis;
                    -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect();
    let stride = (grid.len() / 64).max(1);
    let mut pairs = Vec::new();
    for (i, x) in grid.iter().enumerate() {
        for y in grid.iter().skip(i % stride).step_by(stride) {
            pairs.push((x.clone(), y.clone()));
        }
    }
    let mut rng = StreamKey::new(seed, 0, 0, Purpose::Pairs).rng();
    for _ in 0..random {
        let x = (0..dimension)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        let y = (0..dimension)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        pairs.push((x, y));
    }
    pairs
}

/// Euler-scheme path with the increments that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub gamma: f64,
    pub start: Vec<f64>,
    /// `[step, coordinate]`; row 0 is the start.
    pub values: Array2<f64>,
    /// `[step, coordinate]`; row `k` is `Δ_{k+1}`.
    pub increments: Array2<f64>,
    pub seed: u64,
    pub replica: u64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn dimension(&self) -> usize {
        self.values.ncols()
    }

    /// Largest `|X̄_{k+1} - X̄_k - γ b(X̄_k) - Δ_{k+1}|` along the path.
    pub fn reconstruction_residual(&self, drift: &Drift) -> f64 {
        let d = self.dimension();
        let mut b = vec![0.0; d];
        let mut worst = 0.0f64;
        for k in 0..self.steps() {
            let x = self.values.row(k).to_vec();
            drift.eval(&x, &mut b);
            for i in 0..d {
                let r =
                    self.values[[k + 1, i]] - x[i] - self.gamma * b[i] - self.increments[[k, i]];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Comma-separated export: `step,t,x_1..x_d`.
    pub fn to_csv(&self) -> String {
        let d = self.dimension();
        let mut out = String::from("step,t");
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (k, row) in self.values.rows().into_iter().enumerate() {
            out.push_str(&format!("{k},{}", k as f64 * self.gamma));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn validate(
    drift: &Drift,
    gamma: f64,
    n_steps: usize,
    x0: &[f64],
    noise: &NoiseSample,
) -> Result<(), DynamicsError> {
    if noise.len() < n_steps {
        return Err(DynamicsError::NoiseTooShort {
            requested: n_steps,
            available: noise.len(),
        });
    }
    if gamma != noise.gamma {
        return Err(DynamicsError::StepMismatch {
            given: gamma,
            noise: noise.gamma,
        });
    }
    if x0.len() != drift.dimension() || noise.dimension() != drift.dimension() {
        return Err(DynamicsError::Dimension {
            drift: drift.dimension(),
            state: x0.len(),
        });
    }
    Ok(())
}

pub fn euler_simulate(
    drift: &Drift,
    gamma: f64,
    n_steps: usize,
    x0: &[f64],
    noise: &NoiseSample,
) -> Result<Trajectory, DynamicsError> {
    validate(drift, gamma, n_steps, x0, noise)?;
    let d = x0.len();
    let mut values = Array2::zeros((n_steps + 1, d));
    let mut increments = Array2::zeros((n_steps, d));
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    values.row_mut(0).assign(&Array1::from(x.clone()));
    for k in 0..n_steps {
        drift.eval(&x, &mut b);
        for i in 0..d {
            let delta = noise.increments[[i, k]];
            increments[[k, i]] = delta;
            x[i] = x[i] + gamma * b[i] + delta;
            if !x[i].is_finite() {
                return Err(DynamicsError::NonFinite { step: k + 1 });
            }
            values[[k + 1, i]] = x[i];
        }
    }
    Ok(Trajectory {
        gamma,
        start: x0.to_vec(),
        values,
        increments,
        seed: noise.seed,
        replica: noise.replica,
    })
}

/// Two paths from `x0` and `y0` driven by the same noise, with the distance
/// `|X̄^x_{kγ} - X̄^y_{kγ}|` at every step.
pub fn coupled_simulate(
    drift: &Drift,
    gamma: f64,
    n_steps: usize,
    x0: &[f64],
    y0: &[f64],
    noise: &NoiseSample,
) -> Result<(Trajectory, Trajectory, Vec<f64>), DynamicsError> {
    let a = euler_simulate(drift, gamma, n_steps, x0, noise)?;
    let b = euler_simulate(drift, gamma, n_steps, y0, noise)?;
    let dist = (0..=n_steps)
        .map(|k| {
            a.values
                .row(k)
                .iter()
                .zip(b.values.row(k))
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok((a, b, dist))
}

/// `m_n = (1/n) Σ_{k=1..n} |X̄_{(k-1)γ}|^2` for `n = 1..=steps+1`.
pub fn running_mean_square(traj: &Trajectory) -> Vec<f64> {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    traj.values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            let v: f64 = row.iter().map(|x| x * x).sum();
            // Neumaier update so long runs stay accurate
            let t = acc + v;
            if acc.abs() >= v.abs() {
                comp += (acc - t) + v;
            } else {
                comp += (v - t) + acc;
            }
            acc = t;
            (acc + comp) / (k + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningMomentReport {
    pub max: f64,
    pub last: f64,
    /// `(max - min) / last` of `m_n` over the last tenth of the index range.
    pub final_decade_fluctuation: f64,
}

pub fn running_moment_report(m: &[f64]) -> RunningMomentReport {
    let n = m.len();
    let tail = &m[n - n.div_ceil(10).max(1)..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let last = m[n - 1];
    RunningMomentReport {
        max: m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        last,
        final_decade_fluctuation: if hi == lo {
            0.0
        } else {
            (hi - lo) / last.abs()
        },
    }
}

/// Fit of the one-step bound `|X̄_{n+1}|^2 <= (1 - γ ã)|X̄_n|^2 + C (γ + |Δ_{n+1}|^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepBound {
    pub alpha_tilde: f64,
    /// Smallest `C` making the bound hold along the path for `alpha_tilde`.
    pub constant: f64,
}

/// Smallest `C` for a given `alpha_tilde` so the one-step square bound holds
/// at every step of the path.
pub fn fit_one_step_bound(traj: &Trajectory, alpha_tilde: f64) -> OneStepBound {
    let g = traj.gamma;
    let mut c = 0.0f64;
    for k in 0..traj.steps() {
        let now: f64 = traj.values.row(k).iter().map(|x| x * x).sum();
        let next: f64 = traj.values.row(k + 1).iter().map(|x| x * x).sum();
        let inc: f64 = traj.increments.row(k).iter().map(|x| x * x).sum();
        let excess = next - (1.0 - g * alpha_tilde) * now;
        c = c.max(excess / (g + inc));
    }
    OneStepBound {
        alpha_tilde,
        constant: c,
    }
}
