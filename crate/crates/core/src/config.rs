//! Declarative experiment configuration, read from TOML.
//!
//! Every section is optional; missing keys take the defaults shown by
//! `ExperimentConfig::default()`. Unknown keys are rejected so typos surface
//! as configuration errors instead of silently using a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptiveConfig;
use crate::bench::{EmulationStudy, ModelKind};
use crate::dynamics::DynSystem;
use crate::error::{Error, Result};
use crate::model::Hyperparameters;
use crate::testfns::TestFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Emulate,
    Recover,
    SimulatePrior,
    Benchmark,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Emulate => "emulate",
            Task::Recover => "recover",
            Task::SimulatePrior => "simulate-prior",
            Task::Benchmark => "benchmark",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub seed: u64,
    /// Output directory; defaults to `$HIERGP_OUT/<task>` or `runs/<task>`.
    pub out: Option<PathBuf>,
    pub model: ModelKind,
    pub branin_as_printed: bool,
    /// Hyperparameters of the fitted model.
    pub hyper: Hyperparameters,
    pub sampler: SamplerSection,
    pub adaptive: Option<AdaptiveConfig>,
    pub emulate: EmulateSection,
    pub recover: RecoverSection,
    pub simulate: SimulateSection,
    pub benchmark: EmulationStudy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: None,
            seed: 0,
            out: None,
            model: ModelKind::HierGp,
            branin_as_printed: false,
            hyper: Hyperparameters::default(),
            sampler: SamplerSection::default(),
            adaptive: None,
            emulate: EmulateSection::default(),
            recover: RecoverSection::default(),
            simulate: SimulateSection::default(),
            benchmark: EmulationStudy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub k: Vec<usize>,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub proposal_scale: f64,
    pub local_scale_bound: Option<f64>,
    pub center: Option<bool>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            k: vec![8, 8],
            iterations: 4000,
            burn_in: None,
            thinning: 1,
            proposal_scale: 1.0,
            local_scale_bound: None,
            center: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrainSource {
    /// `x1..xd,y` CSV.
    Csv { path: PathBuf },
    /// `{"points": [[..]], "responses": [..]}`.
    Json { path: PathBuf },
    /// A named test function on uniform random inputs.
    Function {
        name: TestFunction,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        noise_sd: f64,
    },
    /// A fresh draw from the prior (spike at zero) on uniform random inputs.
    Prior {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
    },
}

fn default_n() -> usize {
    70
}

fn default_noise_sd() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSource {
    /// Points from a CSV in the training layout; `y` becomes the truth column.
    Csv {
        path: PathBuf,
    },
    /// Regular grid with `per_dim` points per axis, cell centres.
    Grid {
        per_dim: usize,
    },
    Random {
        n: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulateSection {
    pub train: TrainSource,
    pub test: TestSource,
    pub level: f64,
    pub include_noise: bool,
}

impl Default for EmulateSection {
    fn default() -> Self {
        Self {
            train: TrainSource::Prior {
                n: default_n(),
                noise_sd: default_noise_sd(),
            },
            test: TestSource::Random { n: 400 },
            level: 0.95,
            include_noise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverSection {
    pub system: DynSystem,
    /// Defaults depend on the system: (2,0) for the cubic, (-8,7,27) for Lorenz.
    pub x0: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub n: Option<usize>,
    pub noise_var: f64,
    pub corrupt_states: bool,
    /// Monomial terms per dimension (powers `0..K-1`); defaults to 5 each.
    pub k: Option<Vec<usize>>,
    /// Spike variance used for recovery, replacing `hyper.sigma_inf_sq`.
    pub sigma_inf_sq: f64,
    pub iterations: usize,
    pub ensemble: usize,
    /// Forward-simulation steps; defaults to `n`.
    pub horizon: Option<usize>,
    pub substeps: usize,
    pub level: f64,
}

impl Default for RecoverSection {
    fn default() -> Self {
        Self {
            system: DynSystem::cubic_default(),
            x0: None,
            dt: None,
            n: None,
            noise_var: 0.01,
            corrupt_states: false,
            k: None,
            sigma_inf_sq: 1e-6,
            iterations: 4000,
            ensemble: 50,
            horizon: None,
            substeps: 10,
            level: 0.95,
        }
    }
}

/// Recovery settings with system-dependent defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRecover {
    pub x0: Vec<f64>,
    pub dt: f64,
    pub n: usize,
    pub k: Vec<usize>,
    pub horizon: usize,
}

impl RecoverSection {
    pub fn resolve(&self) -> ResolvedRecover {
        let (x0, dt, n) = match self.system {
            DynSystem::Lorenz { .. } => (vec![-8.0, 7.0, 27.0], 0.05, 200),
            DynSystem::Cubic2d { .. } => (vec![2.0, 0.0], 0.04, 500),
            DynSystem::Polynomial(ref c) => (vec![1.0; c.xi.ncols()], 0.04, 500),
        };
        let n = self.n.unwrap_or(n);
        ResolvedRecover {
            x0: self.x0.clone().unwrap_or(x0),
            dt: self.dt.unwrap_or(dt),
            n,
            k: self.k.clone().unwrap_or_else(|| vec![5; self.system.dim()]),
            horizon: self.horizon.unwrap_or(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub k: Vec<usize>,
    pub draws: usize,
    /// Grid points per axis used to tabulate each draw.
    pub grid: usize,
    pub hyper: Hyperparameters,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            k: vec![8, 8],
            draws: 5,
            grid: 30,
            hyper: Hyperparameters::simulation(),
        }
    }
}

/// Values given on the command line, applied on top of the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub replications: Option<usize>,
    pub branin_as_printed: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fixes the task and applies command-line values. The benchmark section
    /// inherits the top-level seed, model and Branin switch.
    pub fn apply(&mut self, task: Task, o: &Overrides) {
        self.task = Some(task);
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(m) = o.model {
            self.model = m;
            self.benchmark.models = vec![m];
        }
        if let Some(r) = o.replications {
            self.benchmark.replications = r;
        }
        self.branin_as_printed |= o.branin_as_printed;
        self.benchmark.seed = self.seed;
        self.benchmark.branin_as_printed = self.branin_as_printed;
    }

    pub fn validate(&self) -> Result<()> {
        let task = self
            .task
            .ok_or_else(|| Error::Config("no task given".into()))?;
        let cfg = |e: Error| Error::Config(e.to_string());
        match task {
            Task::Emulate => {
                if self.model == ModelKind::Sindy {
                    return Err(Error::Config(
                        "sindy is a dynamics baseline; use recover".into(),
                    ));
                }
                self.hyper.validate(false).map_err(cfg)?;
                let s = &self.sampler;
                if s.k.is_empty() || s.k.contains(&0) {
                    return Err(Error::Config(format!(
                        "sampler.k must be positive, got {:?}",
                        s.k
                    )));
                }
                if s.iterations == 0
                    || s.thinning == 0
                    || s.burn_in.is_some_and(|b| b >= s.iterations)
                {
                    return Err(Error::Config(
                        "need iterations > burn_in and thinning >= 1".into(),
                    ));
                }
                if let Some(a) = &self.adaptive {
                    a.validate().map_err(cfg)?;
                }
                if !(self.emulate.level > 0.0 && self.emulate.level < 1.0) {
                    return Err(Error::Config("emulate.level must be in (0,1)".into()));
                }
                for path in [self.train_path(), self.test_path()].into_iter().flatten() {
                    if !path.exists() {
                        return Err(Error::Config(format!("{} does not exist", path.display())));
                    }
                }
                if let TrainSource::Function { .. } = self.emulate.train {
                    if s.k.len() != 2 {
                        return Err(Error::Config(
                            "named test functions need a two-dimensional sampler.k".into(),
                        ));
                    }
                }
                match self.emulate.test {
                    TestSource::Grid { per_dim: 0 } | TestSource::Random { n: 0 } => {
                        Err(Error::Config("test set is empty".into()))
                    }
                    _ => Ok(()),
                }
            }
            Task::Recover => {
                if !matches!(self.model, ModelKind::HierGp | ModelKind::Sindy) {
                    return Err(Error::Config(format!(
                        "recover supports hiergp and sindy, not {}",
                        self.model.name()
                    )));
                }
                let r = &self.recover;
                let res = r.resolve();
                if res.x0.len() != r.system.dim() || res.k.len() != r.system.dim() {
                    return Err(Error::Config(
                        "recover.x0 and recover.k must match the system dimension".into(),
                    ));
                }
                if !(res.dt > 0.0) || res.n < 5 || r.substeps == 0 || !(r.noise_var >= 0.0) {
                    return Err(Error::Config(
                        "need dt > 0, n >= 5, substeps >= 1, noise_var >= 0".into(),
                    ));
                }
                if r.iterations < 2 || r.ensemble == 0 {
                    return Err(Error::Config(
                        "need iterations >= 2 and ensemble >= 1".into(),
                    ));
                }
                let mut h = self.hyper.clone();
                h.sigma_inf_sq = r.sigma_inf_sq;
                h.validate(false).map_err(cfg)
            }
            Task::SimulatePrior => {
                let s = &self.simulate;
                if s.k.is_empty() || s.k.contains(&0) || s.draws == 0 || s.grid == 0 {
                    return Err(Error::Config(
                        "simulate needs positive k, draws and grid".into(),
                    ));
                }
                if s.k.len() > 3 {
                    return Err(Error::Config(
                        "simulate tabulates on a grid; use at most three dimensions".into(),
                    ));
                }
                s.hyper.validate(true).map_err(cfg)
            }
            Task::Benchmark => self.benchmark.validate(),
        }
    }

    fn train_path(&self) -> Option<&Path> {
        match &self.emulate.train {
            TrainSource::Csv { path } | TrainSource::Json { path } => Some(path),
            _ => None,
        }
    }

    fn test_path(&self) -> Option<&Path> {
        match &self.emulate.test {
            TestSource::Csv { path } => Some(path),
            _ => None,
        }
    }
}
