//! TOML experiment configuration. `docs/config.md` documents every key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::PairConfig;
use crate::instance::{CapacityMode, GeneratorConfig, ProblemKind};
use crate::model::{ModelConfig, TrainConfig};
use crate::strategy::Strategy;
use crate::zoo::{default_zoo, validate_zoo, SolverHandle};

use super::ExperimentError;

/// Environment variable that overrides `dataset.root`.
pub const DATA_DIR_ENV: &str = "PS_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// Defaults to `<out_dir>/data`.
    pub root: Option<PathBuf>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub seed: u64,
    pub max_components: usize,
    pub capacity_mode: CapacityMode,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            root: None,
            train: 2000,
            val: 500,
            test: 500,
            n_min: 50,
            n_max: 150,
            seed: 2024,
            max_components: 15,
            capacity_mode: CapacityMode::Mixed,
        }
    }
}

impl DatasetSpec {
    pub fn generator(&self, kind: ProblemKind) -> GeneratorConfig {
        GeneratorConfig {
            kind,
            n_range: [self.n_min, self.n_max],
            max_components: self.max_components,
            capacity_mode: self.capacity_mode,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooSpec {
    /// Zoo file (TOML or JSON); the built-in zoo for `kind` when absent.
    pub path: Option<PathBuf>,
    pub eliminate: bool,
    /// Elimination threshold in percentage points.
    pub delta: f64,
    /// Root seed for per-cell solver randomness.
    pub table_seed: u64,
}

impl Default for ZooSpec {
    fn default() -> Self {
        Self { path: None, eliminate: false, delta: 0.01, table_seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Selection time plus recorded solver wall time.
    Wall,
    /// Leave the time column empty so reports are byte-reproducible.
    Omit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSpec {
    pub timing: Timing,
    /// Fixed-portfolio sizes compared against top-k.
    pub portfolio_sizes: Vec<usize>,
    pub sweeps: bool,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self { timing: Timing::Wall, portfolio_sizes: vec![1, 2, 3], sweeps: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSpec {
    pub model: PairConfig,
    pub train: TrainConfig,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self { model: PairConfig::default(), train: TrainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ProblemKind,
    /// One trained model per seed; data and table are shared.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub strategies: Vec<Strategy>,
    pub dataset: DatasetSpec,
    pub zoo: ZooSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub report: ReportSpec,
    pub pair: PairSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Tsp,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs/default"),
            jobs: 0,
            strategies: vec![
                Strategy::Greedy,
                Strategy::TopK(2),
                Strategy::TopK(3),
                Strategy::Reject { ratio: 0.2, k: 2 },
                Strategy::TopP(0.5),
            ],
            dataset: DatasetSpec::default(),
            zoo: ZooSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            report: ReportSpec::default(),
            pair: PairSpec::default(),
        }
    }
}

/// `[[solver]]` tables of a zoo file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZooFile {
    solver: Vec<SolverHandle>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        let d = &self.dataset;
        if d.train == 0 || d.val == 0 || d.test == 0 {
            return bad("dataset counts must be at least 1");
        }
        self.dataset.generator(self.kind).validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required");
        }
        if let Some(p) = &self.zoo.path {
            if !p.exists() {
                return Err(ExperimentError::Config(format!("zoo file {} does not exist", p.display())));
            }
        }
        if !(self.zoo.delta >= 0.0) {
            return bad("zoo.delta must be >= 0");
        }
        self.model.encoder.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// `PS_DATA_DIR`, else `dataset.root`, else `<out_dir>/data`.
    pub fn data_root(&self) -> PathBuf {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.dataset.root.clone().unwrap_or_else(|| self.out_dir.join("data")),
        }
    }

    /// Solvers from `zoo.path`, or the built-in zoo.
    pub fn zoo(&self) -> Result<Vec<SolverHandle>, ExperimentError> {
        let zoo = match &self.zoo.path {
            None => default_zoo(self.kind),
            Some(p) => load_zoo(p)?,
        };
        validate_zoo(&zoo).map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(zoo)
    }
}

/// Reads a zoo file: JSON (`.json`) holding a list of solvers, otherwise
/// TOML with `[[solver]]` tables.
pub fn load_zoo(path: &Path) -> Result<Vec<SolverHandle>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let fail = |m: String| ExperimentError::Config(format!("{}: {m}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| fail(e.to_string()))
    } else {
        toml::from_str::<ZooFile>(&text).map(|f| f.solver).map_err(|e| fail(e.to_string()))
    }
}
