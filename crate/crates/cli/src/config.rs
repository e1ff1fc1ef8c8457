//! Run configuration: one JSON document with a section per verb. Every key
//! has a default, unknown keys are rejected.

use std::path::{Path, PathBuf};

use armagm::bench::{LevelSetStudy, MonteCarloConfig};
use armagm::gml::{GmlConfig, Method};
use armagm::synth::ModelRecipe;
use armagm::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Noise seed for `simulate` and `levelsets`, master seed for
    /// `montecarlo`. Model structure comes from `recipe.seed`.
    pub seed: u64,
    /// Worker threads for Monte Carlo trials; all cores when absent.
    pub jobs: Option<usize>,
    pub out: PathBuf,
    pub simulate: SimulateConfig,
    pub identify: IdentifyConfig,
    pub montecarlo: MonteCarloConfig,
    pub levelsets: LevelsetsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: None,
            out: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            identify: IdentifyConfig::default(),
            montecarlo: MonteCarloConfig::default(),
            levelsets: LevelsetsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub recipe: ModelRecipe,
    pub n_obs: usize,
    pub burn_in: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { recipe: ModelRecipe::default(), n_obs: 500, burn_in: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    pub input: Option<PathBuf>,
    pub method: Method,
    pub gml: GmlConfig,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { input: None, method: Method::Gml, gml: GmlConfig::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsetsConfig {
    /// Series to sweep; simulated from `study.recipe` when absent.
    pub input: Option<PathBuf>,
    pub study: LevelSetStudy,
}

/// Command line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub jobs: Option<usize>,
    pub grid: Option<usize>,
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(j) = o.jobs {
            self.jobs = Some(j);
        }
        if let Some(m) = o.method {
            self.identify.method = m;
            self.montecarlo.estimators = vec![m];
        }
        if let Some(k) = o.grid {
            self.identify.gml.grid_points = k;
            self.montecarlo.gml.grid_points = k;
            self.levelsets.study.gml.grid_points = k;
        }
        if let Some(p) = &o.input {
            self.identify.input = Some(p.clone());
            self.levelsets.input = Some(p.clone());
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.jobs == Some(0) {
            return Err(Error::InvalidInput("jobs must be positive".into()));
        }
        if self.simulate.n_obs < 2 {
            return Err(Error::InvalidInput("simulate.n_obs must be at least 2".into()));
        }
        if self.levelsets.study.n_obs < 2 {
            return Err(Error::InvalidInput("levelsets.study.n_obs must be at least 2".into()));
        }
        self.simulate.recipe.validate()?;
        self.identify.gml.validate()?;
        self.montecarlo.validate()?;
        self.levelsets.study.recipe.validate()?;
        self.levelsets.study.gml.validate()?;
        self.levelsets.study.range.validate()
    }
}
