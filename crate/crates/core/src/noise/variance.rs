//! Variance functions `c(t) = E[(Z_{s+t} - Z_s)^2]` of the driving noise.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;
use std::sync::Arc;

use super::NoiseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarianceKind {
    Fbm,
    Brownian,
    Tabulated,
}

impl fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceKind::Fbm => "fbm",
            VarianceKind::Brownian => "brownian",
            VarianceKind::Tabulated => "tabulated",
        })
    }
}

impl FromStr for VarianceKind {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "fbm" => Ok(VarianceKind::Fbm),
            "brownian" => Ok(VarianceKind::Brownian),
            "tabulated" => Ok(VarianceKind::Tabulated),
            other => Err(NoiseError::UnknownKind(other.to_string())),
        }
    }
}

/// Parameters accepted by [`make_variance_model`]. Unused fields are ignored
/// for the chosen kind.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceParams {
    pub hurst: f64,
    pub scale: f64,
    /// `(t, c(t))` nodes for the tabulated kind.
    pub table: Vec<(f64, f64)>,
    /// Regularity exponents of a tabulated model; ignored otherwise.
    pub a_exp: f64,
    pub b_exp: f64,
}

impl Default for VarianceParams {
    fn default() -> Self {
        Self {
            hurst: 0.5,
            scale: 1.0,
            table: Vec::new(),
            a_exp: 1.0,
            b_exp: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// `t^(2H)`
    Power {
        hurst: f64,
    },
    Table(Arc<MonotoneCubic>),
}

/// Per-coordinate variance function of a Gaussian process with stationary
/// increments, together with its regularity exponents `(a, b)`: `|c''(t)|` is
/// bounded by a multiple of `t^-a` on `(0, 1)` and of `t^-b` on `[1, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFunction {
    kind: VarianceKind,
    shape: Shape,
    scale: f64,
    a_exp: f64,
    b_exp: f64,
}

pub fn make_variance_model(
    kind: VarianceKind,
    params: &VarianceParams,
) -> Result<VarianceFunction, NoiseError> {
    match kind {
        VarianceKind::Fbm => VarianceFunction::fbm(params.hurst, params.scale),
        VarianceKind::Brownian => VarianceFunction::brownian(params.scale),
        VarianceKind::Tabulated => {
            VarianceFunction::tabulated(&params.table, params.scale, params.a_exp, params.b_exp)
        }
    }
}

fn check_scale(scale: f64) -> Result<(), NoiseError> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(NoiseError::InvalidScale(scale))
    }
}

impl VarianceFunction {
    /// Fractional Brownian motion: `c(t) = scale * t^(2H)`.
    pub fn fbm(hurst: f64, scale: f64) -> Result<Self, NoiseError> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(NoiseError::InvalidHurst(hurst));
        }
        check_scale(scale)?;
        Ok(Self {
            kind: VarianceKind::Fbm,
            shape: Shape::Power { hurst },
            scale,
            a_exp: 2.0 - 2.0 * hurst,
            b_exp: 2.0 - 2.0 * hurst,
        })
    }

    /// Brownian motion: `c(t) = scale * t`.
    pub fn brownian(scale: f64) -> Result<Self, NoiseError> {
        check_scale(scale)?;
        Ok(Self {
            kind: VarianceKind::Brownian,
            shape: Shape::Power { hurst: 0.5 },
            scale,
            a_exp: 1.0,
            b_exp: 1.0,
        })
    }

    /// Monotone cubic interpolation of `(t, c(t))` nodes, extended linearly
    /// past the last node with slope `max(end slope, 0)`.
    pub fn tabulated(
        points: &[(f64, f64)],
        scale: f64,
        a_exp: f64,
        b_exp: f64,
    ) -> Result<Self, NoiseError> {
        check_scale(scale)?;
        if !(a_exp > 0.0 && a_exp < 2.0) || !(b_exp > 0.0 && b_exp.is_finite()) {
            return Err(NoiseError::InvalidExponents { a_exp, b_exp });
        }
        let interp = MonotoneCubic::new(points)?;
        Ok(Self {
            kind: VarianceKind::Tabulated,
            shape: Shape::Table(Arc::new(interp)),
            scale,
            a_exp,
            b_exp,
        })
    }

    pub fn kind(&self) -> VarianceKind {
        self.kind
    }

    /// Hurst index for power-law models.
    pub fn hurst(&self) -> Option<f64> {
        match self.shape {
            Shape::Power { hurst } => Some(hurst),
            Shape::Table(_) => None,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn a_exp(&self) -> f64 {
        self.a_exp
    }

    pub fn b_exp(&self) -> f64 {
        self.b_exp
    }

    /// Evaluates `c(t)`; `c` is even and `c(0) = 0` exactly.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        if t == 0.0 {
            return 0.0;
        }
        match &self.shape {
            Shape::Power { .. } if self.kind == VarianceKind::Brownian => self.scale * t,
            Shape::Power { hurst } => self.scale * t.powf(2.0 * hurst),
            Shape::Table(interp) => self.scale * interp.eval(t),
        }
    }

    /// `phi[n]` at step `gamma` for power-law models, evaluated as
    /// `scale γ^(2H) g(n)` so that the lag profile `g` does not depend on
    /// `gamma`.
    pub(super) fn power_second_difference(&self, gamma: f64, n: usize) -> Option<f64> {
        let Shape::Power { hurst } = self.shape else {
            return None;
        };
        let p = 2.0 * hurst;
        let g = if n == 0 {
            1.0
        } else if self.kind == VarianceKind::Brownian {
            0.0
        } else if n == 1 {
            0.5 * (2f64.powf(p) - 2.0)
        } else {
            // n^p [((1 + 1/n)^p - 1) + ((1 - 1/n)^p - 1)] / 2
            let x = 1.0 / n as f64;
            let up = (p * x.ln_1p()).exp_m1();
            let down = (p * (-x).ln_1p()).exp_m1();
            0.5 * (n as f64).powf(p) * (up + down)
        };
        let unit = if self.kind == VarianceKind::Brownian {
            gamma
        } else {
            gamma.powf(p)
        };
        Some(self.scale * unit * g)
    }

    /// Constants `(K, g)` with `c(t) <= K (1 + t^g)` for every `t >= 0`.
    pub fn growth_envelope(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Power { hurst } => (self.scale, 2.0 * hurst),
            Shape::Table(interp) => (self.scale * interp.linear_envelope(), 1.0),
        }
    }

    /// Step used for the central second difference at `t`.
    fn second_difference_step(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Power { .. } => 1e-3 * t,
            Shape::Table(interp) => 0.5 * interp.local_spacing(t),
        }
    }

    /// Central second-difference estimate of `c''(t)`.
    pub fn second_derivative(&self, t: f64) -> Result<f64, NoiseError> {
        let h = self.second_difference_step(t);
        if !(t - h > 0.0) {
            return Err(NoiseError::SecondDifference { t, step: h });
        }
        let d2 = (self.eval(t + h) - 2.0 * self.eval(t) + self.eval(t - h)) / (h * h);
        if d2.is_finite() {
            Ok(d2)
        } else {
            Err(NoiseError::SecondDifference { t, step: h })
        }
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
struct MonotoneCubic {
    t: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    fn new(points: &[(f64, f64)]) -> Result<Self, NoiseError> {
        if points.len() < 2 {
            return Err(NoiseError::Table("need at least two nodes".into()));
        }
        if points[0].0 != 0.0 {
            return Err(NoiseError::Table(format!(
                "grid must start at t=0, found {}",
                points[0].0
            )));
        }
        if points[0].1 != 0.0 {
            return Err(NoiseError::NonzeroAtOrigin(points[0].1));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(NoiseError::Table(format!(
                    "grid not strictly increasing at t={}",
                    w[1].0
                )));
            }
        }
        if let Some(&(t, y)) = points.iter().find(|(t, y)| !t.is_finite() || !(*y >= 0.0)) {
            return Err(NoiseError::Table(format!("invalid node ({t}, {y})")));
        }
        let t: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = t.len();
        let secant: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (t[i + 1] - t[i]))
            .collect();
        let mut slope = vec![0.0; n];
        slope[0] = secant[0];
        slope[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            slope[i] = if secant[i - 1] * secant[i] <= 0.0 {
                0.0
            } else {
                0.5 * (secant[i - 1] + secant[i])
            };
        }
        for i in 0..n - 1 {
            if secant[i] == 0.0 {
                slope[i] = 0.0;
                slope[i + 1] = 0.0;
                continue;
            }
            let a = slope[i] / secant[i];
            let b = slope[i + 1] / secant[i];
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slope[i] = tau * a * secant[i];
                slope[i + 1] = tau * b * secant[i];
            }
        }
        Ok(Self { t, y, slope })
    }

    fn interval(&self, t: f64) -> usize {
        match self.t.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(self.t.len() - 2),
        }
    }

    fn end_slope(&self) -> f64 {
        self.slope[self.slope.len() - 1].max(0.0)
    }

    fn eval(&self, t: f64) -> f64 {
        let last = self.t.len() - 1;
        if t >= self.t[last] {
            return self.y[last] + self.end_slope() * (t - self.t[last]);
        }
        let i = self.interval(t);
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i]
            + h10 * h * self.slope[i]
            + h01 * self.y[i + 1]
            + h11 * h * self.slope[i + 1]
    }

    fn local_spacing(&self, t: f64) -> f64 {
        let i = self.interval(t);
        self.t[i + 1] - self.t[i]
    }

    /// Smallest `K` certified by the node values with `c(t) <= K (1 + t)`.
    fn linear_envelope(&self) -> f64 {
        let n = self.t.len();
        let mut k = self.end_slope();
        for i in 0..n - 1 {
            k = k.max(self.y[i].max(self.y[i + 1]) / (1.0 + self.t[i]));
        }
        k.max(self.y[n - 1] / (1.0 + self.t[n - 1]))
    }
}

/// Reads `(t, c(t))` rows from comma-separated text. A first line that does
/// not parse as two numbers is treated as a header; blank lines and `#`
/// comments are skipped.
pub fn read_table<R: BufRead>(reader: R) -> Result<Vec<(f64, f64)>, NoiseError> {
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| NoiseError::Table(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = {
            let mut it = line.split(',').map(|f| f.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(t)), Some(Ok(c)), None) => Some((t, c)),
                _ => None,
            }
        };
        match parsed {
            Some(row) => rows.push(row),
            None if rows.is_empty() && lineno == 0 => continue,
            None => {
                return Err(NoiseError::Table(format!(
                    "line {}: expected `t,c`",
                    lineno + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// Outcome of the regularity screen on a variance function.
#[derive(Debug, Clone, PartialEq)]
pub struct H1Report {
    pub a_exp: f64,
    pub b_exp: f64,
    /// `max |c''(t)| t^a` over the fine grid.
    pub near_zero_constant: f64,
    /// `max |c''(t)| t^b` over the coarse grid.
    pub far_constant: f64,
    /// `max c(t) / envelope(t)` over the fine grid, where the envelope is
    /// `t`, `t (1 + |ln t|)` or `t^(2-a)` according to `a < 1`, `a = 1`,
    /// `a > 1`.
    pub envelope_constant: f64,
    pub ceiling: f64,
    pub pass: bool,
}

pub fn check_h1(
    model: &VarianceFunction,
    fine_grid: &[f64],
    coarse_grid: &[f64],
    ceiling: f64,
) -> Result<H1Report, NoiseError> {
    if let Some(&t) = fine_grid.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(NoiseError::GridOutOfRange { t });
    }
    if let Some(&t) = coarse_grid.iter().find(|&&t| !(t >= 1.0 && t.is_finite())) {
        return Err(NoiseError::GridOutOfRange { t });
    }
    let (a, b) = (model.a_exp(), model.b_exp());
    let mut near = 0.0f64;
    for &t in fine_grid {
        near = near.max(model.second_derivative(t)?.abs() * t.powf(a));
    }
    let mut far = 0.0f64;
    for &t in coarse_grid {
        far = far.max(model.second_derivative(t)?.abs() * t.powf(b));
    }
    let envelope = |t: f64| {
        if a < 1.0 {
            t
        } else if a == 1.0 {
            t * (1.0 + t.ln().abs())
        } else {
            t.powf(2.0 - a)
        }
    };
    let env = fine_grid
        .iter()
        .map(|&t| model.eval(t) / envelope(t))
        .fold(0.0f64, f64::max);
    let pass = near <= ceiling && far <= ceiling && env <= ceiling;
    Ok(H1Report {
        a_exp: a,
        b_exp: b,
        near_zero_constant: near,
        far_constant: far,
        envelope_constant: env,
        ceiling,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fine() -> Vec<f64> {
        (1..100).map(|i| i as f64 / 100.0).collect()
    }

    fn coarse() -> Vec<f64> {
        (0..50).map(|i| 1.0 + i as f64 * 0.5).collect()
    }

    #[test]
    fn catalog_evaluations() {
        let bm = VarianceFunction::brownian(1.0).unwrap();
        assert_eq!(bm.eval(2.0), 2.0);
        assert_eq!(bm.eval(0.0), 0.0);
        let f = VarianceFunction::fbm(0.75, 1.0).unwrap();
        assert!((f.eval(4.0) - 8.0).abs() < 1e-14);
        assert_eq!((f.a_exp(), f.b_exp()), (0.5, 0.5));
        let half = VarianceFunction::fbm(0.5, 1.0).unwrap();
        for i in 0..200 {
            let t = i as f64 * 0.037;
            assert_eq!(half.eval(t), bm.eval(t));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            VarianceFunction::fbm(1.0, 1.0),
            Err(NoiseError::InvalidHurst(_))
        ));
        assert!(matches!(
            VarianceFunction::fbm(0.0, 1.0),
            Err(NoiseError::InvalidHurst(_))
        ));
        assert!(VarianceFunction::brownian(0.0).is_err());
        assert!(matches!(
            VarianceFunction::tabulated(&[(0.0, 0.1), (1.0, 1.0)], 1.0, 1.0, 1.0),
            Err(NoiseError::NonzeroAtOrigin(_))
        ));
        assert!(VarianceFunction::tabulated(&[(0.0, 0.0), (0.0, 1.0)], 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_interpolates_nodes_and_stays_nonnegative() {
        let pts: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let t = i as f64 * 0.25;
                (t, t.powf(1.5))
            })
            .collect();
        let tab = VarianceFunction::tabulated(&pts, 1.0, 0.5, 0.5).unwrap();
        for &(t, c) in &pts {
            assert!((tab.eval(t) - c).abs() < 1e-12);
        }
        let exact = VarianceFunction::fbm(0.75, 1.0).unwrap();
        for i in 1..400 {
            let t = i as f64 * 0.0123;
            assert!(tab.eval(t) >= 0.0);
            assert!((tab.eval(t) - exact.eval(t)).abs() < 0.02);
        }
        let (k, g) = tab.growth_envelope();
        for i in 0..1000 {
            let t = i as f64 * 0.1;
            assert!(tab.eval(t) <= k * (1.0 + t.powf(g)) + 1e-12);
        }
    }

    #[test]
    fn h1_brownian_constants_vanish() {
        let bm = VarianceFunction::brownian(1.0).unwrap();
        let r = check_h1(&bm, &fine(), &coarse(), 1e3).unwrap();
        assert!(r.near_zero_constant < 1e-6, "{r:?}");
        assert!(r.far_constant < 1e-6, "{r:?}");
        assert!(r.pass);
    }

    #[test]
    fn h1_fbm_constants_match_analytic_derivative() {
        // |c''(t)| t^(2-2H) = 2H |2H - 1| for c = t^(2H)
        for (h, expected) in [(0.75, 0.75), (0.25, 0.25)] {
            let m = VarianceFunction::fbm(h, 1.0).unwrap();
            let r = check_h1(&m, &fine(), &coarse(), 1e3).unwrap();
            assert!((r.near_zero_constant - expected).abs() < 1e-4, "{r:?}");
            assert!((r.far_constant - expected).abs() < 1e-4, "{r:?}");
            assert!((r.a_exp - (2.0 - 2.0 * h)).abs() < 1e-15);
            assert!(r.envelope_constant <= 1.0 + 1e-12);
            assert!(r.pass);
        }
    }

    #[test]
    fn h1_rejects_grids_outside_their_ranges() {
        let bm = VarianceFunction::brownian(1.0).unwrap();
        assert!(check_h1(&bm, &[0.5, 1.0], &coarse(), 1.0).is_err());
        assert!(check_h1(&bm, &fine(), &[0.5], 1.0).is_err());
    }

    #[test]
    fn table_reader_accepts_optional_header() {
        let text = "t,c\n0,0\n0.5,0.5\n1,1\n";
        let rows = read_table(text.as_bytes()).unwrap();
        assert_eq!(rows, vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
        let rows = read_table("0,0\n1,2\n".as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(read_table("0,0\nx,y\n".as_bytes()).is_err());
    }
}
