//! Small statistical toolbox shared by the diagnostics.
//!
//! All reductions run sequentially in index order with compensated
//! summation, so a result depends only on the data, never on how the data
//! was produced (thread count, chunking).

/// Neumaier-compensated sum.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    stable_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    stable_sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() - 1) as f64
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    /// `(value - target) / stderr`, with 0/0 read as 0.
    pub fn normalized_deviation(&self, target: f64) -> f64 {
        normalized(self.value - target, self.stderr)
    }
}

/// `diff / stderr`, treating an exact zero difference as zero discrepancy and
/// a nonzero difference with zero error as infinite.
pub fn normalized(diff: f64, stderr: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if stderr > 0.0 {
        diff / stderr
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Mean of i.i.d. values with the classical `s / sqrt(n)` standard error.
pub fn iid_estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    Estimate {
        value: mean(values),
        stderr: (variance(values) / n.max(1) as f64).sqrt(),
        count: n,
    }
}

/// Mean of a (possibly dependent) series with a batch-means standard error
/// using `floor(sqrt(n))` batches of equal size. The trailing remainder that
/// does not fill a batch enters the mean but not the error estimate.
pub fn batch_means(values: &[f64]) -> Estimate {
    let n = values.len();
    let value = mean(values);
    if n < 4 {
        return Estimate {
            value,
            stderr: iid_estimate(values).stderr,
            count: n,
        };
    }
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&values[b * size..(b + 1) * size]))
        .collect();
    Estimate {
        value,
        stderr: (variance(&means) / batches as f64).sqrt(),
        count: n,
    }
}

/// Ordinary least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    weighted_ols(x, y, None)
}

/// Weighted least squares with weights `1/sigma_i^2` when `sigma` is given.
/// Standard errors come from the weights when given, otherwise from the
/// residual variance.
pub fn weighted_ols(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; n],
    };
    let sw = stable_sum(w.iter().copied());
    let sx = stable_sum(w.iter().zip(x).map(|(w, x)| w * x));
    let sy = stable_sum(w.iter().zip(y).map(|(w, y)| w * y));
    let sxx = stable_sum(w.iter().zip(x).map(|(w, x)| w * x * x));
    let sxy = stable_sum(w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y));
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let scale = match sigma {
        Some(_) => 1.0,
        None if n > 2 => {
            stable_sum(
                x.iter()
                    .zip(y)
                    .map(|(x, y)| (y - intercept - slope * x).powi(2)),
            ) / (n - 2) as f64
        }
        None => 0.0,
    };
    LineFit {
        slope,
        intercept,
        slope_stderr: (scale * sw / det).sqrt(),
        intercept_stderr: (scale * sxx / det).sqrt(),
    }
}

/// Pearson correlation of paired samples and its t-statistic
/// `r sqrt((n-2)/(1-r^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub t_stat: f64,
    pub count: usize,
}

pub fn correlation(a: &[f64], b: &[f64]) -> Correlation {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ma = mean(a);
    let mb = mean(b);
    let sab = stable_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let saa = stable_sum(a.iter().map(|x| (x - ma) * (x - ma)));
    let sbb = stable_sum(b.iter().map(|y| (y - mb) * (y - mb)));
    let r = if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    };
    let t_stat = if n > 2 {
        r * ((n - 2) as f64 / (1.0 - r * r).max(f64::MIN_POSITIVE)).sqrt()
    } else {
        0.0
    };
    Correlation {
        r,
        t_stat,
        count: n,
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_sum_recovers_cancelled_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(stable_sum(v), 2.0);
    }

    #[test]
    fn variance_of_known_values() {
        assert_eq!(variance(&[1.0, 2.0, 3.0, 4.0]), 5.0 / 3.0);
        assert_eq!(variance(&[3.0]), 0.0);
    }

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = ols(&x, &y);
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 2.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-7);
    }

    #[test]
    fn batch_means_of_constant_is_exact() {
        let e = batch_means(&[2.5; 100]);
        assert_eq!(e.value, 2.5);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn ks_identical_is_zero_and_disjoint_is_one() {
        let a = [0.0, 1.0, 2.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&a, &[5.0, 6.0]), 1.0);
    }

    #[test]
    fn normalized_conventions() {
        assert_eq!(normalized(0.0, 0.0), 0.0);
        assert_eq!(normalized(1.0, 0.0), f64::INFINITY);
        assert_eq!(normalized(-2.0, 1.0), -2.0);
    }
}
