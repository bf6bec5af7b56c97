//! Forward simulation of discrete-time epidemics.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{EpidemicHistory, Framework};
use crate::lcar::{sample_prior, LcarError};
use crate::model::{infection_probability, ModelConfig, ModelError, ModelParams};
use crate::population::Population;
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon must be at least 2, got {0}")]
    Horizon(usize),
    #[error("initial infective id {0} not in the population")]
    UnknownInitial(u64),
    #[error("requested {requested} random initial infectives from {available} individuals")]
    TooManyInitial { requested: usize, available: usize },
    #[error("scenario {0:?} needs an explicit list of initial infectives")]
    MissingInitialList(Scenario),
    #[error("scenarios use exactly one individual covariate, population has {0}")]
    ScenarioCovariates(usize),
    #[error("bad initial infective directive {0:?}")]
    BadDirective(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lcar(#[from] LcarError),
}

/// Who is infectious at t = 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialInfectives {
    Ids(Vec<u64>),
    /// `random:n` in configuration files.
    #[serde(with = "random_directive")]
    Random(usize),
}

impl std::str::FromStr for InitialInfectives {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::BadDirective(s.to_string());
        if let Some(n) = s.strip_prefix("random:") {
            return n
                .trim()
                .parse()
                .map(InitialInfectives::Random)
                .map_err(|_| bad());
        }
        s.split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()
            .map(InitialInfectives::Ids)
    }
}

mod random_directive {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("random:{n}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let s = String::deserialize(d)?;
        s.strip_prefix("random:")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| D::Error::custom(format!("expected `random:<n>`, got {s:?}")))
    }
}

/// Where the area random effects of a simulation come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSource {
    /// Use `params.phi` as given.
    Fixed,
    /// One prior draw shared by every replicate of the batch.
    PriorShared,
    /// A fresh prior draw for each replicate.
    PriorPerReplicate,
}

#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub params: ModelParams<T>,
    pub phi_source: PhiSource,
    pub model: ModelConfig,
    pub horizon: usize,
    pub initial: InitialInfectives,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Replicate<T> {
    pub index: usize,
    pub history: EpidemicHistory,
    /// Random effects used to generate this replicate.
    pub phi: Vec<T>,
    /// Indices of the individuals infectious at t = 1.
    pub initial: Vec<usize>,
    pub attack_rate: f64,
}

/// One stochastic realisation. `initial` holds population indices.
pub fn simulate_epidemic<T: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
    horizon: usize,
    initial: &[usize],
    rng: &mut R,
) -> Result<EpidemicHistory, SimError> {
    if horizon < 2 {
        return Err(SimError::Horizon(horizon));
    }
    theta.validate(pop)?;
    let mut history = EpidemicHistory::empty(pop.len(), horizon);
    for &i in initial {
        history.set_infection(i, 1, cfg.framework);
    }
    let mut newly = Vec::new();
    for t in 1..horizon {
        newly.clear();
        for i in 0..pop.len() {
            if !history.is_susceptible(i, t) {
                continue;
            }
            let p = infection_probability(pop, i, t, &history, theta, cfg)?;
            if T::open01(rng) < p {
                newly.push(i);
            }
        }
        for &i in &newly {
            history.set_infection(i, t + 1, cfg.framework);
        }
    }
    Ok(history)
}

fn resolve_initial<T: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    initial: &InitialInfectives,
    rng: &mut R,
) -> Result<Vec<usize>, SimError> {
    match initial {
        InitialInfectives::Ids(ids) => ids
            .iter()
            .map(|&id| pop.index_of(id).ok_or(SimError::UnknownInitial(id)))
            .collect(),
        &InitialInfectives::Random(n) => {
            if n > pop.len() {
                return Err(SimError::TooManyInitial {
                    requested: n,
                    available: pop.len(),
                });
            }
            let mut v = sample(rng, pop.len(), n).into_vec();
            v.sort_unstable();
            Ok(v)
        }
    }
}

/// Runs every replicate of a configuration. Replicate `r` draws from the
/// named streams `simulate/replicate-{r}` (epidemic), `simulate/initial-{r}`
/// (random initial infectives) and `simulate/phi` or `simulate/phi-{r}`.
pub fn simulate<T: Scalar>(
    pop: &Population<T>,
    sim: &SimConfig<T>,
) -> Result<Vec<Replicate<T>>, SimError> {
    if sim.horizon < 2 {
        return Err(SimError::Horizon(sim.horizon));
    }
    let draw_phi = |name: &str| -> Result<Vec<T>, SimError> {
        let mut rng = substream(sim.seed, name);
        Ok(sample_prior(
            sim.params.lambda,
            sim.params.sigma2,
            pop.graph(),
            &mut rng,
        )?)
    };
    let shared_phi = match sim.phi_source {
        PhiSource::Fixed => Some(sim.params.phi.clone()),
        PhiSource::PriorShared => Some(draw_phi("simulate/phi")?),
        PhiSource::PriorPerReplicate => None,
    };
    (0..sim.replicates)
        .map(|r| {
            let phi = match &shared_phi {
                Some(p) => p.clone(),
                None => draw_phi(&format!("simulate/phi-{r}"))?,
            };
            let mut theta = sim.params.clone();
            theta.phi = phi.clone();
            let mut init_rng = substream(sim.seed, &format!("simulate/initial-{r}"));
            let initial = resolve_initial(pop, &sim.initial, &mut init_rng)?;
            let mut rng = substream(sim.seed, &format!("simulate/replicate-{r}"));
            let history =
                simulate_epidemic(pop, &theta, &sim.model, sim.horizon, &initial, &mut rng)?;
            Ok(Replicate {
                index: r,
                attack_rate: history.attack_rate(),
                history,
                phi,
                initial,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Fixed initial infectives, region-restricted generator.
    S1,
    /// Fixed initial infectives, global generator.
    S2,
    /// One random initial infective, global generator.
    S3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Weak,
    Moderate,
    Strong,
}

impl Dependence {
    pub fn lambda(self) -> f64 {
        match self {
            Dependence::Weak => 0.30,
            Dependence::Moderate => 0.50,
            Dependence::Strong => 0.80,
        }
    }
}

pub const SCENARIO_ALPHA: f64 = 0.30;
pub const SCENARIO_ALPHA1: f64 = 0.40;
pub const SCENARIO_DELTA: f64 = 4.0;
pub const SCENARIO_SIGMA: f64 = 0.60;
pub const SCENARIO_GAMMA: usize = 3;
pub const SCENARIO_HORIZON: usize = 20;

/// Truth and settings of a simulation scenario.
pub fn scenario_config<T: Scalar>(
    pop: &Population<T>,
    scenario: Scenario,
    dependence: Dependence,
    replicates: usize,
    initial_ids: Option<Vec<u64>>,
    seed: u64,
) -> Result<SimConfig<T>, SimError> {
    if pop.individual_covariate_dim() != 1 {
        return Err(SimError::ScenarioCovariates(pop.individual_covariate_dim()));
    }
    let initial = match scenario {
        Scenario::S1 | Scenario::S2 => {
            InitialInfectives::Ids(initial_ids.ok_or(SimError::MissingInitialList(scenario))?)
        }
        Scenario::S3 => InitialInfectives::Random(1),
    };
    let mut params = ModelParams::zeros(pop);
    params.alpha = T::lit(SCENARIO_ALPHA);
    params.alpha1 = vec![T::lit(SCENARIO_ALPHA1)];
    params.delta = T::lit(SCENARIO_DELTA);
    params.lambda = T::lit(dependence.lambda());
    params.sigma2 = T::lit(SCENARIO_SIGMA * SCENARIO_SIGMA);
    Ok(SimConfig {
        params,
        phi_source: PhiSource::PriorShared,
        model: ModelConfig {
            restricted: scenario == Scenario::S1,
            framework: Framework::Sir {
                gamma: SCENARIO_GAMMA,
            },
            include_alpha: true,
            ..ModelConfig::default()
        },
        horizon: SCENARIO_HORIZON,
        initial,
        replicates,
        seed,
    })
}

pub fn run_scenario<T: Scalar>(
    pop: &Population<T>,
    scenario: Scenario,
    dependence: Dependence,
    replicates: usize,
    initial_ids: Option<Vec<u64>>,
    seed: u64,
) -> Result<Vec<Replicate<T>>, SimError> {
    let cfg = scenario_config(pop, scenario, dependence, replicates, initial_ids, seed)?;
    simulate(pop, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Status;
    use crate::population::{Area, AreaGraph, Individual};

    fn line_pop(n: usize, spacing: f64, n_areas: usize) -> Population<f64> {
        let inds = (0..n)
            .map(|i| Individual {
                id: i as u64 + 1,
                x: i as f64 * spacing,
                y: 0.0,
                area: i * n_areas / n,
                covariates: vec![0.0],
            })
            .collect();
        Population::new(
            inds,
            vec![Area::default(); n_areas],
            AreaGraph::path(n_areas),
        )
        .unwrap()
    }

    fn cfg(restricted: bool, framework: Framework) -> ModelConfig {
        ModelConfig {
            restricted,
            framework,
            include_alpha: true,
            distance_floor: 0.01,
        }
    }

    #[test]
    fn huge_susceptibility_infects_everyone_at_step_two() {
        let pop = line_pop(20, 1.0, 2);
        let mut theta = ModelParams::zeros(&pop);
        theta.alpha = 20.0;
        theta.delta = 1.0;
        let mut rng = substream(3, "t");
        let h =
            simulate_epidemic(&pop, &theta, &cfg(false, Framework::Si), 4, &[0], &mut rng).unwrap();
        assert!((1..20).all(|i| h.infection_time(i) == Some(2)));
    }

    #[test]
    fn steep_kernel_stops_transmission() {
        let pop = line_pop(10, 1.5, 2);
        let mut theta = ModelParams::zeros(&pop);
        theta.delta = 50.0;
        let mut rng = substream(3, "t");
        let h = simulate_epidemic(
            &pop,
            &theta,
            &cfg(false, Framework::Sir { gamma: 3 }),
            20,
            &[4],
            &mut rng,
        )
        .unwrap();
        assert_eq!(
            h.infection_times().iter().filter(|t| t.is_some()).count(),
            1
        );
    }

    #[test]
    fn state_sequences_and_conservation() {
        let pop = line_pop(60, 0.7, 3);
        let mut theta = ModelParams::zeros(&pop);
        theta.alpha = 0.2;
        theta.delta = 2.0;
        for framework in [Framework::Si, Framework::Sir { gamma: 3 }] {
            let mut rng = substream(5, "t");
            let h = simulate_epidemic(&pop, &theta, &cfg(true, framework), 15, &[0, 30], &mut rng)
                .unwrap();
            assert!(h.check_framework(framework).is_ok());
            for t in 1..=15 {
                let (s, i, r) = h.counts(t);
                assert_eq!(s + i + r, 60);
                if framework == Framework::Si {
                    assert_eq!(r, 0);
                }
            }
            for ind in 0..60 {
                let seq: Vec<Status> = (1..=15).map(|t| h.status(ind, t)).collect();
                let rank = |s: &Status| match s {
                    Status::Susceptible => 0,
                    Status::Infectious => 1,
                    Status::Removed => 2,
                };
                assert!(seq.windows(2).all(|w| rank(&w[0]) <= rank(&w[1])));
                if let Framework::Sir { gamma } = framework {
                    let inf = seq.iter().filter(|s| **s == Status::Infectious).count();
                    let removed = seq.iter().any(|s| *s == Status::Removed);
                    if removed {
                        assert_eq!(inf, gamma);
                    }
                }
            }
        }
    }

    #[test]
    fn restricted_generator_respects_area_isolation() {
        // three areas on the path; an infective in area 0 cannot reach area 2
        let pop = line_pop(30, 0.1, 3);
        let mut theta = ModelParams::zeros(&pop);
        theta.alpha = 5.0;
        let mut rng = substream(9, "t");
        let h = simulate_epidemic(
            &pop,
            &theta,
            &cfg(true, Framework::Sir { gamma: 1 }),
            2,
            &[0],
            &mut rng,
        )
        .unwrap();
        for &i in pop.members(2) {
            assert_eq!(h.infection_time(i), None);
        }
    }

    #[test]
    fn scenarios_use_requested_initial_counts() {
        let pop = line_pop(40, 0.8, 4);
        let ids: Vec<u64> = (1..=9).collect();
        let reps = run_scenario(
            &pop,
            Scenario::S1,
            Dependence::Strong,
            3,
            Some(ids.clone()),
            1,
        )
        .unwrap();
        assert_eq!(reps.len(), 3);
        for r in &reps {
            assert_eq!(r.history.initial_infectives().len(), 9);
            assert_eq!(r.history.horizon(), 20);
        }
        let s3 = run_scenario(&pop, Scenario::S3, Dependence::Weak, 2, None, 1).unwrap();
        assert!(s3.iter().all(|r| r.history.initial_infectives().len() == 1));
        assert_eq!(
            run_scenario(&pop, Scenario::S2, Dependence::Weak, 2, None, 1).unwrap_err(),
            SimError::MissingInitialList(Scenario::S2)
        );
        let a = run_scenario(
            &pop,
            Scenario::S2,
            Dependence::Moderate,
            2,
            Some(ids.clone()),
            44,
        )
        .unwrap();
        let b = run_scenario(&pop, Scenario::S2, Dependence::Moderate, 2, Some(ids), 44).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.history, y.history);
            assert_eq!(x.phi, y.phi);
        }
    }

    #[test]
    fn directive_parsing() {
        assert_eq!(
            "random:3".parse::<InitialInfectives>().unwrap(),
            InitialInfectives::Random(3)
        );
        assert_eq!(
            "4, 5,6".parse::<InitialInfectives>().unwrap(),
            InitialInfectives::Ids(vec![4, 5, 6])
        );
        assert!("random:x".parse::<InitialInfectives>().is_err());
    }

    #[test]
    fn unknown_initial_id_rejected() {
        let pop = line_pop(5, 1.0, 1);
        let sim = SimConfig {
            params: ModelParams::zeros(&pop),
            phi_source: PhiSource::Fixed,
            model: cfg(false, Framework::Si),
            horizon: 3,
            initial: InitialInfectives::Ids(vec![99]),
            replicates: 1,
            seed: 0,
        };
        assert_eq!(
            simulate(&pop, &sim).unwrap_err(),
            SimError::UnknownInitial(99)
        );
    }
}
