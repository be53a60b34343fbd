//! TOML experiment description.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Execution, SaturationPolicy};
use crate::constants::AnalysisOptions;
use crate::digraph::Digraph;
use crate::error::{Error, Result};
use crate::problems::{quadratic_fixture_scaled, sensor_fusion, QuadraticObjective, SensorFusionInstance};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: usize,
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Relative paths resolve against the config file's directory.
    /// `QDGT_OUTPUT_DIR` overrides this.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub execution: Execution,
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// The shipped 10-node directed fixture.
    Fixture,
    Ring { n: usize },
    Complete { n: usize },
    Random { n: usize, p: f64, seed: u64 },
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    SensorFusion { s: usize, m: usize, lambda: f64, seed: u64 },
    Quadratic {
        m: usize,
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// A `quadratic` or `sensor_fusion` text file.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

/// `x(1)`: zero, or i.i.d. uniform on `[-scale, scale]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Zeros,
    Uniform { scale: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Qdgt,
    Dgt,
    NaiveQdgt,
    PushPull,
}

impl AlgorithmKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Qdgt => "qdgt",
            Self::Dgt => "dgt",
            Self::NaiveQdgt => "naive_qdgt",
            Self::PushPull => "push_pull",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaKeyword {
    Auto,
}

/// A number, or `"auto"` for the certified bound `eta_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Value(f64),
    Keyword(EtaKeyword),
}

impl Default for EtaSpec {
    fn default() -> Self {
        Self::Keyword(EtaKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    Theorem1,
    #[default]
    Remark,
    Fixed,
}

/// How `C` changes across a fixed-`K` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CRule {
    #[default]
    Same,
    /// `C_K = C · 3 / (2K + 1)`: every `K` covers the same range as `K = 1`.
    EqualRange,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    /// Defaults to the kind, suffixed with `_K<levels>` in fixed sweeps.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub beta: f64,
    /// Initial scale `C`. For certified schedules `None` means 1.
    #[serde(default)]
    pub c: Option<f64>,
    /// `None` means halfway between `ρ̂` and 1.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// One run per entry for fixed schedules and the naive baseline.
    #[serde(default)]
    pub levels: Vec<u64>,
    #[serde(default)]
    pub c_rule: CRule,
    #[serde(default)]
    pub saturation: SaturationPolicy,
    #[serde(default)]
    pub record_symbols: bool,
}

fn half() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl GraphSpec {
    pub fn build(&self, base: &Path) -> Result<Digraph> {
        match self {
            Self::Fixture => Ok(Digraph::default_fixture()),
            Self::Ring { n } => Digraph::ring(*n),
            Self::Complete { n } => Digraph::complete(*n),
            Self::Random { n, p, seed } => Digraph::random_strongly_connected(*n, *p, *seed),
            Self::EdgeList { path } => Digraph::parse_edge_list(&std::fs::read_to_string(resolve(base, path))?),
        }
    }
}

impl ProblemSpec {
    pub fn build(&self, n: usize, base: &Path) -> Result<QuadraticObjective> {
        let f = match self {
            Self::SensorFusion { s, m, lambda, seed } => {
                sensor_fusion(&SensorFusionInstance::random(n, *s, *m, *lambda, *seed)?)?
            }
            Self::Quadratic { m, seed, scale } => quadratic_fixture_scaled(n, *m, *seed, *scale)?,
            Self::File { path } => {
                let text = std::fs::read_to_string(resolve(base, path))?;
                if text.trim_start().starts_with("sensor_fusion") {
                    sensor_fusion(&SensorFusionInstance::from_text(&text)?)?
                } else {
                    QuadraticObjective::from_text(&text)?
                }
            }
        };
        if crate::problems::Objective::nodes(&f) != n {
            return Err(Error::Dimension(format!(
                "problem has {} nodes but the graph has {n}",
                crate::problems::Objective::nodes(&f)
            )));
        }
        Ok(f)
    }
}

impl InitSpec {
    pub fn build(&self, n: usize, m: usize) -> DMatrix<f64> {
        match *self {
            Self::Zeros => DMatrix::zeros(n, m),
            Self::Uniform { scale, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-scale..=scale))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            name = "t"
            horizon = 10
            tolerance = 1e-6
            [graph]
            kind = "ring"
            n = 4
            [problem]
            kind = "quadratic"
            m = 2
            seed = 3
            [[algorithm]]
            kind = "qdgt"
            eta = "auto"
            schedule = "fixed"
            levels = [1, 3]
            c_rule = "equal_range"
            [[algorithm]]
            kind = "push_pull"
            eta = 0.01
            "#,
        )
        .unwrap();
        assert_eq!(cfg.graph, GraphSpec::Ring { n: 4 });
        assert_eq!(cfg.algorithms.len(), 2);
        assert_eq!(cfg.algorithms[0].eta, EtaSpec::Keyword(EtaKeyword::Auto));
        assert_eq!(cfg.algorithms[1].eta, EtaSpec::Value(0.01));
        assert_eq!(cfg.algorithms[0].levels, vec![1, 3]);
        assert_eq!(cfg.init, InitSpec::Zeros);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_eta() {
        let base = "name = \"t\"\nhorizon = 1\n[graph]\nkind = \"fixture\"\n[problem]\nkind = \"quadratic\"\nm = 1\nseed = 1\n";
        assert!(ExperimentConfig::from_toml(&format!("{base}[[algorithm]]\nkind = \"qdgt\"\nfoo = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}[[algorithm]]\nkind = \"qdgt\"\neta = \"fast\"\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}[[algorithm]]\nkind = \"sgd\"\n")).is_err());
    }

    #[test]
    fn uniform_init_is_seeded() {
        let a = InitSpec::Uniform { scale: 2.0, seed: 9 }.build(3, 2);
        assert_eq!(a, InitSpec::Uniform { scale: 2.0, seed: 9 }.build(3, 2));
        assert!(a.amax() <= 2.0);
    }
}
