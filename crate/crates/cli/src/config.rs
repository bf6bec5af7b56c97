//! Run configuration: one TOML file, versioned.
//!
//! ```toml
//! version = 1
//! seed = 2009
//!
//! [model]
//! framework = "SIR"     # or "SI"
//! gamma = 3             # SIR only
//! restricted = true
//! horizon = 20
//! epsilon = 0.0
//! rho = 0
//! include_alpha = false
//! alpha = 0.0           # value held fixed when alpha is not estimated
//!
//! [priors]
//! lambda = { kind = "beta", a = 4.0, b = 2.0 }
//! tau = { shape = 0.05, rate = 0.05 }
//!
//! [mcmc]
//! iterations = 300000
//! burn_in = 50000
//! thin = 10
//! chains = 1
//!
//! [simulate]
//! replicates = 10
//! initial = "random:1"          # or a list of ids
//! phi_source = "prior_shared"   # "fixed" | "prior_per_replicate"
//! [simulate.params]
//! alpha = 0.3
//! alpha1 = [0.4]
//! delta = 4.0
//! lambda = 0.8
//! sigma2 = 0.36
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use gdilm::history::Framework;
use gdilm::mcmc::{GammaPrior, HalfNormal, LambdaPrior, McmcConfig, PriorSpec, ProposalScales};
use gdilm::model::{ModelConfig, ModelParams};
use gdilm::population::DEFAULT_DISTANCE_FLOOR;
use gdilm::simulate::{InitialInfectives, PhiSource};
use gdilm::Pop;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub priors: PriorSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: default_seed(),
            model: ModelSection::default(),
            priors: PriorSection::default(),
            mcmc: McmcSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameworkName {
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "SIR")]
    Sir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub framework: FrameworkName,
    /// Must be given exactly when the framework is SIR.
    #[serde(default)]
    pub gamma: Option<usize>,
    pub restricted: bool,
    pub horizon: usize,
    pub epsilon: f64,
    pub rho: usize,
    pub include_alpha: bool,
    pub alpha: f64,
    pub distance_floor: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            framework: FrameworkName::Sir,
            gamma: Some(3),
            restricted: true,
            horizon: 20,
            epsilon: 0.0,
            rho: 0,
            include_alpha: false,
            alpha: 0.0,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
        }
    }
}

impl ModelSection {
    pub fn framework(&self) -> Result<Framework> {
        match (self.framework, self.gamma) {
            (FrameworkName::Si, None) => Ok(Framework::Si),
            (FrameworkName::Si, Some(_)) => {
                bail!("model.gamma is only valid for the SIR framework")
            }
            (FrameworkName::Sir, Some(g)) => Framework::sir(g).map_err(anyhow::Error::from),
            (FrameworkName::Sir, None) => bail!("model.gamma is required for the SIR framework"),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            restricted: self.restricted,
            framework: self.framework()?,
            include_alpha: self.include_alpha,
            distance_floor: self.distance_floor,
        })
    }

    /// Parameters that the sampler never moves, with everything else zero.
    pub fn template(&self, pop: &Pop) -> ModelParams<f64> {
        let mut t = ModelParams::zeros(pop);
        t.alpha = self.alpha;
        t.epsilon = self.epsilon;
        t.rho = self.rho;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub alpha: HalfNormal,
    pub alpha1: HalfNormal,
    pub alpha2: HalfNormal,
    pub alpha3: HalfNormal,
    pub delta: HalfNormal,
    pub lambda: LambdaPrior,
    pub tau: GammaPrior,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = PriorSpec::default();
        Self {
            alpha: p.alpha,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            alpha3: p.alpha3,
            delta: p.delta,
            lambda: p.lambda,
            tau: p.tau,
        }
    }
}

impl PriorSection {
    pub fn spec(&self) -> PriorSpec {
        PriorSpec {
            alpha: self.alpha,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            delta: self.delta,
            lambda: self.lambda,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    #[default]
    Prior,
    /// Start from `[mcmc.start]`.
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub adapt_window: usize,
    pub target_low: f64,
    pub target_high: f64,
    pub scales: ProposalScales,
    pub init: InitName,
    pub start: Option<ParamSection>,
}

impl Default for McmcSection {
    fn default() -> Self {
        let m = McmcConfig::default();
        Self {
            iterations: m.iterations,
            burn_in: m.burn_in,
            thin: m.thin,
            chains: m.chains,
            adapt_window: m.adapt_window,
            target_low: m.target_low,
            target_high: m.target_high,
            scales: m.scales,
            init: InitName::Prior,
            start: None,
        }
    }
}

impl McmcSection {
    pub fn mcmc_config(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            scales: self.scales,
            adapt_window: self.adapt_window,
            target_low: self.target_low,
            target_high: self.target_high,
            seed,
            chains: self.chains,
            full_recompute: false,
        }
    }
}

/// Parameter values given in a configuration file. Missing vectors mean
/// zeros of the population's dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSection {
    pub alpha: f64,
    pub alpha1: Option<Vec<f64>>,
    pub alpha2: Option<Vec<f64>>,
    pub alpha3: Option<Vec<f64>>,
    pub delta: f64,
    pub lambda: f64,
    pub sigma2: f64,
    pub phi: Option<Vec<f64>>,
}

impl Default for ParamSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            alpha1: None,
            alpha2: None,
            alpha3: None,
            delta: 1.0,
            lambda: 0.5,
            sigma2: 1.0,
            phi: None,
        }
    }
}

impl ParamSection {
    pub fn params(&self, pop: &Pop, model: &ModelSection) -> Result<ModelParams<f64>> {
        let mut t = model.template(pop);
        t.alpha = self.alpha;
        let fill = |v: &Option<Vec<f64>>, n: usize, name: &str| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![0.0; n]),
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => bail!("{name} has {} values, the data need {n}", v.len()),
            }
        };
        t.alpha1 = fill(&self.alpha1, pop.individual_covariate_dim(), "alpha1")?;
        t.alpha2 = fill(&self.alpha2, pop.area_covariate_dim(), "alpha2")?;
        t.alpha3 = fill(&self.alpha3, pop.time_covariate_dim(), "alpha3")?;
        t.phi = fill(&self.phi, pop.n_areas(), "phi")?;
        t.delta = self.delta;
        t.lambda = self.lambda;
        t.sigma2 = self.sigma2;
        t.validate(pop)?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub replicates: usize,
    pub initial: InitialInfectives,
    pub phi_source: PhiSource,
    pub params: ParamSection,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            replicates: 1,
            initial: InitialInfectives::Random(1),
            phi_source: PhiSource::PriorShared,
            params: ParamSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing configuration")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks that do not need the data files.
    pub fn check(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(
                "configuration version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            );
        }
        self.model.framework()?;
        if self.model.horizon < 2 {
            bail!("model.horizon must be at least 2");
        }
        if !(self.model.epsilon >= 0.0 && self.model.epsilon.is_finite()) {
            bail!("model.epsilon must be a nonnegative number");
        }
        if !(self.model.distance_floor > 0.0) {
            bail!("model.distance_floor must be positive");
        }
        self.priors.spec().validate()?;
        self.mcmc.mcmc_config(self.seed).validate()?;
        if self.mcmc.init == InitName::Supplied && self.mcmc.start.is_none() {
            bail!("mcmc.init = \"supplied\" needs an [mcmc.start] table");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}
