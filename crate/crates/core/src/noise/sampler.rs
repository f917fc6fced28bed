use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{IncrementCovariance, NoiseError, NoiseSample};
use crate::rng::{fill_standard_normal, StreamKey};

/// Eigenvalues above `-EIG_TOL * max_eigenvalue` are treated as rounding noise.
const EIG_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: u32 = 6;
/// Largest dense Cholesky factor the fallback will build.
pub const MAX_CHOLESKY_STEPS: usize = 4096;

/// Smallest `2^a 3^b 5^c` that is at least `n`.
fn smooth_at_least(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMethod {
    /// Circulant embedding, falling back to Cholesky when no admissible
    /// embedding is found.
    Auto,
    Circulant,
    Cholesky,
}

enum Kernel {
    Empty,
    Circulant {
        /// `sqrt(λ_k / m)` for the `m` circulant eigenvalues.
        weights: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    /// Row-major lower Cholesky factor.
    Cholesky {
        lower: Vec<f64>,
    },
}

/// Exact sampler of `n` consecutive increments with a fixed Toeplitz
/// covariance. Building it does the expensive factorization once; drawing
/// is then a pure function of `(seed, replica, coordinate)`.
pub struct IncrementSampler {
    n: usize,
    gamma: f64,
    method: SamplerMethod,
    kernel: Kernel,
    circulant_min: f64,
}

impl std::fmt::Debug for IncrementSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IncrementSampler")
            .field("n", &self.n)
            .field("gamma", &self.gamma)
            .field("method", &self.method)
            .finish()
    }
}

struct Embedding {
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

/// Searches embedding sizes `2 s * 2^j`, `j <= MAX_DOUBLINGS`, where `s` is
/// the smallest 5-smooth integer `>= n - 1`; the first `n` entries of a draw
/// are then an exact sample. Returns the most negative eigenvalue seen when
/// no size is admissible.
fn circulant_embedding(cov: &IncrementCovariance, n: usize) -> Result<Embedding, f64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut worst = f64::INFINITY;
    let base = smooth_at_least(n - 1);
    for j in 0..=MAX_DOUBLINGS {
        let m = (2 * base) << j;
        let half = m / 2;
        let ext = cov.extended(half);
        let phi = ext.phi();
        let mut buf: Vec<Complex<f64>> = (0..m)
            .map(|k| Complex::new(phi[if k <= half { k } else { m - k }], 0.0))
            .collect();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut buf);
        let max = buf.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let min = buf.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        worst = worst.min(min);
        if min >= -EIG_TOL * max {
            let weights = buf
                .iter()
                .map(|z| (z.re.max(0.0) / m as f64).sqrt())
                .collect();
            return Ok(Embedding { weights, fft });
        }
    }
    Err(worst)
}

/// Lower Cholesky factor of the `n x n` Toeplitz matrix; pivots within the
/// relative tolerance of zero are clamped. On failure returns `(row, pivot)`.
fn toeplitz_cholesky(phi: &[f64], n: usize) -> Result<Vec<f64>, (usize, f64)> {
    let tol = EIG_TOL * phi[0].abs();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = phi[i - j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s < -tol {
                    return Err((i, s));
                }
                l[i * n + i] = s.max(0.0).sqrt();
            } else {
                let d = l[j * n + j];
                l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
            }
        }
    }
    Ok(l)
}

impl IncrementSampler {
    pub fn new(
        cov: &IncrementCovariance,
        n: usize,
        method: SamplerMethod,
    ) -> Result<Self, NoiseError> {
        let gamma = cov.gamma();
        if n == 0 {
            return Ok(Self {
                n,
                gamma,
                method,
                kernel: Kernel::Empty,
                circulant_min: f64::NAN,
            });
        }
        let mut circulant_min = f64::NAN;
        if n >= 2 && method != SamplerMethod::Cholesky {
            match circulant_embedding(cov, n) {
                Ok(Embedding { weights, fft }) => {
                    return Ok(Self {
                        n,
                        gamma,
                        method: SamplerMethod::Circulant,
                        kernel: Kernel::Circulant { weights, fft },
                        circulant_min,
                    })
                }
                Err(min) => {
                    circulant_min = min;
                    if method == SamplerMethod::Circulant {
                        return Err(NoiseError::NotPositiveSemidefinite {
                            circulant_min,
                            row: 0,
                            pivot: f64::NAN,
                        });
                    }
                }
            }
        }
        if n > MAX_CHOLESKY_STEPS {
            return Err(NoiseError::TooManySteps {
                requested: n,
                available: MAX_CHOLESKY_STEPS,
            });
        }
        let ext = cov.extended(n - 1);
        match toeplitz_cholesky(ext.phi(), n) {
            Ok(lower) => Ok(Self {
                n,
                gamma,
                method: SamplerMethod::Cholesky,
                kernel: Kernel::Cholesky { lower },
                circulant_min,
            }),
            Err((row, pivot)) => Err(NoiseError::NotPositiveSemidefinite {
                circulant_min,
                row,
                pivot,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The method actually in use (`Circulant` or `Cholesky`).
    pub fn method(&self) -> SamplerMethod {
        self.method
    }

    /// Most negative circulant eigenvalue met before falling back, if any.
    pub fn rejected_circulant_min(&self) -> f64 {
        self.circulant_min
    }

    /// One coordinate's increments for the stream `key`.
    pub fn draw(&self, key: StreamKey) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.draw_into(key, &mut out);
        out
    }

    pub fn draw_into(&self, key: StreamKey, out: &mut [f64]) {
        assert_eq!(out.len(), self.n);
        let mut rng = key.rng();
        match &self.kernel {
            Kernel::Empty => {}
            Kernel::Circulant { weights, fft } => {
                let m = weights.len();
                let mut z = vec![0.0; 2 * m];
                fill_standard_normal(&mut rng, &mut z);
                let mut buf: Vec<Complex<f64>> = weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| Complex::new(w * z[2 * k], w * z[2 * k + 1]))
                    .collect();
                fft.process(&mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o = b.re;
                }
            }
            Kernel::Cholesky { lower } => {
                let n = self.n;
                let mut z = vec![0.0; n];
                fill_standard_normal(&mut rng, &mut z);
                for i in 0..n {
                    let row = &lower[i * n..i * n + i + 1];
                    out[i] = row.iter().zip(&z).map(|(l, z)| l * z).sum();
                }
            }
        }
    }

    /// Independent draws for `dimension` coordinates.
    pub fn sample(&self, seed: u64, replica: u64, dimension: usize) -> NoiseSample {
        let mut increments = Array2::zeros((dimension, self.n));
        let mut row = vec![0.0; self.n];
        for i in 0..dimension {
            self.draw_into(StreamKey::noise(seed, replica, i as u64), &mut row);
            increments
                .row_mut(i)
                .iter_mut()
                .zip(&row)
                .for_each(|(a, b)| *a = *b);
        }
        NoiseSample {
            gamma: self.gamma,
            increments,
            seed,
            replica,
        }
    }
}
