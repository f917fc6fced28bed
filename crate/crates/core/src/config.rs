//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, unknown keys are rejected.
//! Lists are comma separated. Serialization writes every key in a fixed
//! order, so `parse(serialize(c)) == c`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::DriftKind;
use crate::noise::VarianceKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("bad value for `{key}`: {value}")]
    Value { key: String, value: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    SampleNoise,
    Simulate,
    StationaryStats,
    OuVariance,
    Innovations,
    Dependence,
    SupMoment,
    FullSuite,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::SampleNoise,
        Experiment::Simulate,
        Experiment::StationaryStats,
        Experiment::OuVariance,
        Experiment::Innovations,
        Experiment::Dependence,
        Experiment::SupMoment,
        Experiment::FullSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SampleNoise => "sample-noise",
            Experiment::Simulate => "simulate",
            Experiment::StationaryStats => "stationary-stats",
            Experiment::OuVariance => "ou-variance",
            Experiment::Innovations => "innovations",
            Experiment::Dependence => "dependence",
            Experiment::SupMoment => "sup-moment",
            Experiment::FullSuite => "full-suite",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| ConfigError::UnknownExperiment(s.trim().to_string()))
    }
}

pub const DEFAULT_SEED: u64 = 20_240_611;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model_kind: VarianceKind,
    pub model_hurst: f64,
    pub model_scale: f64,
    /// Two-column table, required for `tabulated`.
    pub model_table: Option<PathBuf>,
    pub drift_kind: DriftKind,
    pub drift_theta: f64,
    pub drift_dimension: usize,
    pub gamma: f64,
    /// Upper end of the admissible `γθ`; runs above it are refused.
    pub gamma0: f64,
    pub n_steps: usize,
    pub replicas: usize,
    /// Defaults to 5% of the path length.
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub lags: usize,
    pub noise_length: usize,
    pub noise_replicas: usize,
    pub shifts: Vec<usize>,
    pub shift_steps: usize,
    pub ramp_slope: f64,
    pub window_steps: usize,
    pub ladder: Vec<f64>,
    pub ladder_horizon: f64,
    pub ladder_replicas: usize,
    pub richardson: Vec<f64>,
    pub richardson_horizon: f64,
    pub richardson_replicas: usize,
    pub sup_t: Vec<f64>,
    pub sup_steps: usize,
    pub horizon: usize,
    pub split_burn: usize,
    pub gap: usize,
    pub burn_multiple: f64,
    pub dependence_hurst: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::FullSuite,
            model_kind: VarianceKind::Fbm,
            model_hurst: 0.75,
            model_scale: 1.0,
            model_table: None,
            drift_kind: DriftKind::Linear,
            drift_theta: 1.0,
            drift_dimension: 1,
            gamma: 0.1,
            gamma0: 0.5,
            n_steps: 1_000_000,
            replicas: 10_000,
            burn_in: None,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("results"),
            threads: None,
            lags: 10,
            noise_length: 20,
            noise_replicas: 200_000,
            shifts: vec![1, 7, 50],
            shift_steps: 200_000,
            ramp_slope: 1e-2,
            window_steps: 64,
            ladder: vec![0.2, 0.1, 0.05, 0.025],
            ladder_horizon: 2000.0,
            ladder_replicas: 16,
            richardson: vec![0.02, 0.01, 0.005],
            richardson_horizon: 16_384.0,
            richardson_replicas: 8,
            sup_t: vec![0.05, 0.1, 0.2, 0.4],
            sup_steps: 256,
            horizon: 128,
            split_burn: 100,
            gap: 10,
            burn_multiple: 10.0,
            dependence_hurst: vec![0.25, 0.5, 0.75],
        }
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad(key, value))
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse::<T>().map_err(|_| bad(key, value))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError> {
    if value.trim() == "auto" {
        Ok(None)
    } else {
        one(key, value).map(Some)
    }
}

fn show<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
            c.set(key, value)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "experiment" => self.experiment = v.parse()?,
            "model.kind" => self.model_kind = v.parse().map_err(|_| bad(key, v))?,
            "model.hurst" => self.model_hurst = one(key, v)?,
            "model.scale" => self.model_scale = one(key, v)?,
            "model.table" => {
                self.model_table = if v == "none" {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "drift.kind" => self.drift_kind = v.parse().map_err(|_| bad(key, v))?,
            "drift.theta" => self.drift_theta = one(key, v)?,
            "drift.dimension" => self.drift_dimension = one(key, v)?,
            "gamma" => self.gamma = one(key, v)?,
            "gamma0" => self.gamma0 = one(key, v)?,
            "n_steps" => self.n_steps = one(key, v)?,
            "replicas" => self.replicas = one(key, v)?,
            "burn_in" => self.burn_in = optional(key, v)?,
            "seed" => self.seed = one(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = optional(key, v)?,
            "lags" => self.lags = one(key, v)?,
            "noise_length" => self.noise_length = one(key, v)?,
            "noise_replicas" => self.noise_replicas = one(key, v)?,
            "shifts" => self.shifts = list(key, v)?,
            "shift_steps" => self.shift_steps = one(key, v)?,
            "ramp_slope" => self.ramp_slope = one(key, v)?,
            "window_steps" => self.window_steps = one(key, v)?,
            "ladder" => self.ladder = list(key, v)?,
            "ladder_horizon" => self.ladder_horizon = one(key, v)?,
            "ladder_replicas" => self.ladder_replicas = one(key, v)?,
            "richardson" => self.richardson = list(key, v)?,
            "richardson_horizon" => self.richardson_horizon = one(key, v)?,
            "richardson_replicas" => self.richardson_replicas = one(key, v)?,
            "sup_t" => self.sup_t = list(key, v)?,
            "sup_steps" => self.sup_steps = one(key, v)?,
            "horizon" => self.horizon = one(key, v)?,
            "split_burn" => self.split_burn = one(key, v)?,
            "gap" => self.gap = one(key, v)?,
            "burn_multiple" => self.burn_multiple = one(key, v)?,
            "dependence_hurst" => self.dependence_hurst = list(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let table = self
            .model_table
            .as_ref()
            .map_or_else(|| "none".to_string(), |p| p.display().to_string());
        let entries: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("model.kind", self.model_kind.to_string()),
            ("model.hurst", self.model_hurst.to_string()),
            ("model.scale", self.model_scale.to_string()),
            ("model.table", table),
            ("drift.kind", self.drift_kind.to_string()),
            ("drift.theta", self.drift_theta.to_string()),
            ("drift.dimension", self.drift_dimension.to_string()),
            ("gamma", self.gamma.to_string()),
            ("gamma0", self.gamma0.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("replicas", self.replicas.to_string()),
            ("burn_in", show(&self.burn_in)),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("threads", show(&self.threads)),
            ("lags", self.lags.to_string()),
            ("noise_length", self.noise_length.to_string()),
            ("noise_replicas", self.noise_replicas.to_string()),
            ("shifts", join(&self.shifts)),
            ("shift_steps", self.shift_steps.to_string()),
            ("ramp_slope", self.ramp_slope.to_string()),
            ("window_steps", self.window_steps.to_string()),
            ("ladder", join(&self.ladder)),
            ("ladder_horizon", self.ladder_horizon.to_string()),
            ("ladder_replicas", self.ladder_replicas.to_string()),
            ("richardson", join(&self.richardson)),
            ("richardson_horizon", self.richardson_horizon.to_string()),
            ("richardson_replicas", self.richardson_replicas.to_string()),
            ("sup_t", join(&self.sup_t)),
            ("sup_steps", self.sup_steps.to_string()),
            ("horizon", self.horizon.to_string()),
            ("split_burn", self.split_burn.to_string()),
            ("gap", self.gap.to_string()),
            ("burn_multiple", self.burn_multiple.to_string()),
            ("dependence_hurst", join(&self.dependence_hurst)),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// The entries relevant to reproducing a run; `threads` and `out_dir`
    /// are left out so outputs do not depend on them.
    pub fn provenance(&self) -> String {
        self.serialize()
            .lines()
            .filter(|l| !l.starts_with("threads ") && !l.starts_with("out_dir "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    pub fn burn_in_for(&self, len: usize) -> usize {
        self.burn_in.unwrap_or(len / 20)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if self.replicas == 0 || self.noise_replicas == 0 || self.ladder_replicas == 0 {
            return fail("replica counts must be at least 1");
        }
        if !(self.drift_theta > 0.0 && self.drift_theta.is_finite()) {
            return fail("drift.theta must be positive");
        }
        if self.drift_kind == DriftKind::Custom {
            return fail("custom drifts are only available through the library");
        }
        if self.drift_dimension == 0 {
            return fail("drift.dimension must be positive");
        }
        if self.model_kind == VarianceKind::Fbm
            && !(self.model_hurst > 0.0 && self.model_hurst < 1.0)
        {
            return fail("model.hurst must lie in (0, 1)");
        }
        if self.model_kind == VarianceKind::Tabulated && self.model_table.is_none() {
            return fail("model.table is required for tabulated models");
        }
        if !(self.model_scale > 0.0 && self.model_scale.is_finite()) {
            return fail("model.scale must be positive");
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 2.0) {
            return fail("gamma0 must lie in (0, 2)");
        }
        if self.n_steps < 2 || self.shift_steps < 2 {
            return fail("step counts must be at least 2");
        }
        if self
            .ladder
            .iter()
            .chain(&self.richardson)
            .any(|g| !(*g > 0.0 && *g < 1.0))
        {
            return fail("ladder steps must lie in (0, 1)");
        }
        if self.richardson.len() != 3 {
            return fail("richardson needs exactly three steps");
        }
        if self
            .dependence_hurst
            .iter()
            .any(|h| !(*h > 0.0 && *h < 1.0))
        {
            return fail("dependence_hurst entries must lie in (0, 1)");
        }
        if self.lags == 0 || self.lags >= self.noise_length || self.lags >= self.window_steps {
            return fail("lags must be positive and shorter than noise_length and window_steps");
        }
        if self.split_burn + self.gap >= self.horizon {
            return fail("split_burn + gap must stay below horizon");
        }
        if self.threads == Some(0) {
            return fail("threads must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# run\nexperiment = ou-variance\nmodel.kind = brownian # white\n\ngamma=0.5\nladder = 0.2, 0.1\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.experiment, Experiment::OuVariance);
        assert_eq!(c.model_kind, VarianceKind::Brownian);
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.ladder, vec![0.2, 0.1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ExperimentConfig::parse("nonsense"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            ExperimentConfig::parse("colour = red"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("experiment = fly"),
            Err(ConfigError::UnknownExperiment(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("gamma = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("gamma = x"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("seed = 1\nseed = 2"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(ExperimentConfig::parse("replicas = 0").is_err());
        assert!(ExperimentConfig::parse("model.kind = tabulated").is_err());
    }

    #[test]
    fn provenance_skips_runtime_knobs() {
        let mut c = ExperimentConfig::default();
        let base = c.provenance();
        c.threads = Some(4);
        c.out_dir = PathBuf::from("elsewhere");
        assert_eq!(c.provenance(), base);
    }
}
