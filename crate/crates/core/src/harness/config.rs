//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::error::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "SABTV_OUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    Quadratic {
        n: usize,
        dim: usize,
        condition_number: f64,
        seed: u64,
    },
    Logistic {
        n: usize,
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_pos")]
        digit_pos: u8,
        #[serde(default = "default_neg")]
        digit_neg: u8,
        /// Training samples kept; `None` keeps all.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
        /// Pool both files in order and split the pool by the limits.
        #[serde(default)]
        pooled: bool,
        /// Regularization; `None` means `1/N`.
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_scale")]
        feature_scale: f64,
    },
}

fn default_pos() -> u8 {
    3
}

fn default_neg() -> u8 {
    7
}

fn default_scale() -> f64 {
    255.0
}

impl ProblemConfig {
    pub fn n(&self) -> usize {
        match self {
            ProblemConfig::Quadratic { n, .. } | ProblemConfig::Logistic { n, .. } => *n,
        }
    }

    pub fn set_n(&mut self, value: usize) {
        match self {
            ProblemConfig::Quadratic { n, .. } | ProblemConfig::Logistic { n, .. } => *n = value,
        }
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self, ProblemConfig::Logistic { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKindConfig {
    Static,
    Rotating,
    Replayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKindConfig,
    #[serde(default)]
    pub extra_edges: usize,
    #[serde(default)]
    pub seed: u64,
    /// Edge-list blocks for replayed schedules.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Additive Gaussian noise level.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Samples per oracle call for data-backed objectives.
    #[serde(default)]
    pub minibatch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: String,
    /// `None` picks the documented default.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Alternative to `iterations`, in units of `N` gradient evaluations.
    #[serde(default)]
    pub epochs: Option<f64>,
    #[serde(default)]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write the theory report for the run's schedule.
    #[serde(default)]
    pub theory: bool,
    /// Iterations the constants are taken over; `None` means
    /// `min(iterations, 1000)`.
    #[serde(default)]
    pub theory_horizon: Option<usize>,
    #[serde(default)]
    pub phi_horizon: Option<usize>,
    #[serde(default = "default_phi_tol")]
    pub phi_tolerance: f64,
}

fn default_phi_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_oracle")]
    pub oracle: OracleSection,
    pub run: RunSection,
    pub experiment: ExperimentSection,
}

fn default_oracle() -> OracleSection {
    OracleSection {
        sigma: None,
        minibatch: None,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative dataset and schedule paths resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ProblemConfig::Logistic {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.problem
        {
            fix(train_images);
            fix(train_labels);
            fix(test_images);
            fix(test_labels);
        }
        if let Some(f) = &mut self.schedule.file {
            fix(f);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.run.algorithm.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.algorithm()?;
        if self.problem.n() == 0 {
            return bad("problem.n must be at least 1".into());
        }
        match &self.problem {
            ProblemConfig::Quadratic {
                dim,
                condition_number,
                ..
            } => {
                if *dim == 0 || !(*condition_number >= 1.0) {
                    return bad("quadratic problems need dim >= 1 and condition_number >= 1".into());
                }
                if self.oracle.minibatch.is_some() {
                    return bad("oracle.minibatch needs a logistic problem".into());
                }
            }
            ProblemConfig::Logistic {
                digit_pos,
                digit_neg,
                lambda,
                feature_scale,
                ..
            } => {
                if *digit_pos > 9 || *digit_neg > 9 || digit_pos == digit_neg {
                    return bad("digits must be distinct values in 0..=9".into());
                }
                if lambda.is_some_and(|l| !(l > 0.0)) || !(*feature_scale > 0.0) {
                    return bad("lambda and feature_scale must be positive".into());
                }
            }
        }
        if self.oracle.sigma.is_some() && self.oracle.minibatch.is_some() {
            return bad("set at most one of oracle.sigma and oracle.minibatch".into());
        }
        if self.oracle.sigma.is_some_and(|s| !(s >= 0.0)) {
            return bad("oracle.sigma must be nonnegative".into());
        }
        if self.oracle.minibatch == Some(0) {
            return bad("oracle.minibatch must be at least 1".into());
        }
        match (self.run.iterations, self.run.epochs) {
            (Some(_), Some(_)) => return bad("set only one of run.iterations and run.epochs".into()),
            (None, None) => return bad("set run.iterations or run.epochs".into()),
            (_, Some(e)) if !(e > 0.0) => return bad("run.epochs must be positive".into()),
            _ => {}
        }
        if self.run.alpha.is_some_and(|a| !(a > 0.0)) {
            return bad("run.alpha must be positive".into());
        }
        if self.experiment.theory_horizon == Some(0) {
            return bad("experiment.theory_horizon must be at least 1".into());
        }
        if self.experiment.seeds.is_empty() {
            return bad("experiment.seeds must not be empty".into());
        }
        if (self.schedule.kind == ScheduleKindConfig::Replayed) != self.schedule.file.is_some() {
            return bad("schedule.file is required for, and only for, replayed schedules".into());
        }
        Ok(())
    }

    /// Output directory: the configured one, else `$SABTV_OUT_ROOT/<name>`,
    /// else `runs/<name>`.
    pub fn output_dir(&self, name: &str) -> PathBuf {
        if let Some(d) = &self.experiment.output_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const QUAD: &str = r#"
[problem]
kind = "quadratic"
n = 4
dim = 2
condition_number = 3.0
seed = 1

[schedule]
kind = "rotating"
extra_edges = 2
seed = 5

[oracle]
sigma = 0.0

[run]
algorithm = "sabtv"
alpha = 0.05
iterations = 100

[experiment]
seeds = [1, 2]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(QUAD).unwrap();
        assert_eq!(cfg.problem.n(), 4);
        assert_eq!(cfg.algorithm().unwrap(), Algorithm::Sabtv);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = QUAD.replace("extra_edges", "extra_edge");
        assert!(matches!(ExperimentConfig::from_toml(&typo), Err(Error::Config(_))));
        let typo = QUAD.replace("dim = 2", "dim = 2\ndimm = 3");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
        let extra = format!("{QUAD}\n[extra]\nx = 1\n");
        assert!(ExperimentConfig::from_toml(&extra).is_err());
    }

    #[test]
    fn invalid_values_are_errors() {
        for (from, to) in [
            ("algorithm = \"sabtv\"", "algorithm = \"sgd\""),
            ("alpha = 0.05", "alpha = -1.0"),
            ("iterations = 100", "epochs = 0.0"),
            ("seeds = [1, 2]", "seeds = []"),
            ("n = 4", "n = 0"),
            ("sigma = 0.0", "minibatch = 1"),
            ("kind = \"rotating\"", "kind = \"replayed\""),
        ] {
            assert!(ExperimentConfig::from_toml(&QUAD.replace(from, to)).is_err(), "{to}");
        }
        let both = QUAD.replace("iterations = 100", "iterations = 100\nepochs = 2.0");
        assert!(ExperimentConfig::from_toml(&both).is_err());
    }

    #[test]
    fn output_dir_precedence() {
        let mut cfg = ExperimentConfig::from_toml(QUAD).unwrap();
        cfg.experiment.output_dir = Some(PathBuf::from("/tmp/x"));
        assert_eq!(cfg.output_dir("name"), PathBuf::from("/tmp/x"));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let text = r#"
[problem]
kind = "logistic"
n = 2
train_images = "d/ti"
train_labels = "d/tl"
test_images = "/abs/si"
test_labels = "d/sl"

[schedule]
kind = "static"

[run]
algorithm = "cgd"
epochs = 1.0

[experiment]
seeds = [0]
"#;
        let mut cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.resolve_paths(Path::new("/base"));
        let ProblemConfig::Logistic {
            train_images,
            test_images,
            digit_pos,
            pooled,
            ..
        } = &cfg.problem
        else {
            panic!()
        };
        assert_eq!(train_images, &PathBuf::from("/base/d/ti"));
        assert_eq!(test_images, &PathBuf::from("/abs/si"));
        assert_eq!(*digit_pos, 3);
        assert!(!pooled);
    }
}
