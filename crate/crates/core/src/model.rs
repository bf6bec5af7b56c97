//! Evaluation of the geographically-dependent ILM: susceptibility,
//! power-law kernel, infectivity rate and per-step infection probability.
//!
//! Transmissibility is fixed at one; the only infectious-side quantity is the
//! distance kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{EpidemicHistory, Framework};
use crate::population::{Population, DEFAULT_DISTANCE_FLOOR};
use crate::scalar::{log1m_exp_neg, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("kernel distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("kernel decay delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("no time covariates for area {area} at step {step} (t = {t}, lag = {lag})")]
    MissingTimeCovariate {
        area: usize,
        t: usize,
        lag: usize,
        step: isize,
    },
    #[error("individual {index} is not susceptible at t = {t}")]
    NotSusceptible { index: usize, t: usize },
    #[error("parameter {name} has length {found}, expected {expected}")]
    Dimension {
        name: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("parameter {name} = {value} outside its domain")]
    Domain { name: &'static str, value: f64 },
}

/// Full parameter vector of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct ModelParams<T> {
    /// Constant infectivity.
    pub alpha: T,
    /// Individual-level covariate effects.
    pub alpha1: Vec<T>,
    /// Static area-level covariate effects.
    pub alpha2: Vec<T>,
    /// Lagged environmental covariate effects.
    pub alpha3: Vec<T>,
    /// Power-law kernel decay.
    pub delta: T,
    /// Spatial dependence of the random effects.
    pub lambda: T,
    /// Random effect variance.
    pub sigma2: T,
    /// Area random effects, one per area.
    pub phi: Vec<T>,
    /// Sparks rate; a fixed constant, never estimated.
    pub epsilon: T,
    /// Covariate lag in steps.
    pub rho: usize,
}

impl<T: Scalar> ModelParams<T> {
    /// All effects zero, delta = 1, lambda = 0, sigma2 = 1.
    pub fn zeros(pop: &Population<T>) -> Self {
        Self {
            alpha: T::zero(),
            alpha1: vec![T::zero(); pop.individual_covariate_dim()],
            alpha2: vec![T::zero(); pop.area_covariate_dim()],
            alpha3: vec![T::zero(); pop.time_covariate_dim()],
            delta: T::one(),
            lambda: T::zero(),
            sigma2: T::one(),
            phi: vec![T::zero(); pop.n_areas()],
            epsilon: T::zero(),
            rho: 0,
        }
    }

    /// Checks dimensions against the population and the domain of every
    /// constrained component.
    pub fn validate(&self, pop: &Population<T>) -> Result<(), ModelError> {
        let dims = [
            ("alpha1", self.alpha1.len(), pop.individual_covariate_dim()),
            ("alpha2", self.alpha2.len(), pop.area_covariate_dim()),
            ("alpha3", self.alpha3.len(), pop.time_covariate_dim()),
            ("phi", self.phi.len(), pop.n_areas()),
        ];
        for (name, found, expected) in dims {
            if found != expected {
                return Err(ModelError::Dimension {
                    name,
                    found,
                    expected,
                });
            }
        }
        let domain = [
            ("delta", self.delta, self.delta > T::zero()),
            ("sigma2", self.sigma2, self.sigma2 > T::zero()),
            (
                "lambda",
                self.lambda,
                self.lambda >= T::zero() && self.lambda <= T::one(),
            ),
            ("epsilon", self.epsilon, self.epsilon >= T::zero()),
        ];
        for (name, value, ok) in domain {
            if !ok || !value.is_finite() {
                return Err(ModelError::Domain {
                    name,
                    value: value.as_f64(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Region-restricted (own + adjacent areas) vs global transmission.
    pub restricted: bool,
    pub framework: Framework,
    /// Whether the sampler estimates alpha; when false alpha stays at its
    /// supplied value (zero by default).
    pub include_alpha: bool,
    /// Distance floor in km.
    pub distance_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            restricted: true,
            framework: Framework::Sir { gamma: 3 },
            include_alpha: false,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
        }
    }
}

/// Environmental term X(k, t - rho)'alpha3; zero when alpha3 is empty.
pub fn time_term<T: Scalar>(
    pop: &Population<T>,
    k: usize,
    t: usize,
    theta: &ModelParams<T>,
) -> Result<T, ModelError> {
    if theta.alpha3.is_empty() {
        return Ok(T::zero());
    }
    let step = t as isize - theta.rho as isize;
    let row = pop
        .area(k)
        .time_covariates_at(step)
        .ok_or(ModelError::MissingTimeCovariate {
            area: k,
            t,
            lag: theta.rho,
            step,
        })?;
    Ok(dot(row, &theta.alpha3))
}

/// Time-free part of the linear predictor: alpha + X(i)'a1 + X(k)'a2 + phi_k.
pub fn static_predictor<T: Scalar>(pop: &Population<T>, i: usize, theta: &ModelParams<T>) -> T {
    let ind = pop.individual(i);
    let k = ind.area;
    theta.alpha
        + dot(&ind.covariates, &theta.alpha1)
        + dot(&pop.area(k).covariates, &theta.alpha2)
        + theta.phi[k]
}

/// Full linear predictor of the susceptibility at step `t`.
pub fn log_susceptibility<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    theta: &ModelParams<T>,
) -> Result<T, ModelError> {
    Ok(static_predictor(pop, i, theta) + time_term(pop, pop.individual(i).area, t, theta)?)
}

/// Susceptibility of individual `i` at step `t`; strictly positive.
pub fn susceptibility<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    theta: &ModelParams<T>,
) -> Result<T, ModelError> {
    log_susceptibility(pop, i, t, theta).map(T::exp)
}

/// Power-law kernel d^(-delta).
pub fn kernel<T: Scalar>(d: T, delta: T) -> Result<T, ModelError> {
    if !(d > T::zero()) {
        return Err(ModelError::NonPositiveDistance(d.as_f64()));
    }
    if !(delta > T::zero()) {
        return Err(ModelError::NonPositiveDelta(delta.as_f64()));
    }
    Ok(d.powf(-delta))
}

/// Sum of kernel values over the infectious individuals `i` can contact at `t`.
pub fn kernel_sum<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    history: &EpidemicHistory,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<T, ModelError> {
    let me = pop.individual(i);
    let d_min = T::lit(cfg.distance_floor);
    let mut sum = T::zero();
    for a in pop.contactable_areas(me.area, cfg.restricted) {
        for &j in pop.members(a) {
            if j != i && history.is_infectious(j, t) {
                let d = crate::population::planar_distance(me, pop.individual(j)).max(d_min);
                sum += kernel(d, theta.delta)?;
            }
        }
    }
    Ok(sum)
}

/// Rate of infectivity to susceptible `i` at step `t`.
pub fn infectivity_rate<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    history: &EpidemicHistory,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<T, ModelError> {
    if !history.is_susceptible(i, t) {
        return Err(ModelError::NotSusceptible { index: i, t });
    }
    let sum = kernel_sum(pop, i, t, history, theta, cfg)?;
    if sum == T::zero() {
        return Ok(T::zero());
    }
    Ok(susceptibility(pop, i, t, theta)? * sum)
}

/// 1 - exp(-(rate + epsilon)).
#[inline]
pub fn probability_from_rate<T: Scalar>(rate: T, epsilon: T) -> T {
    -(-(rate + epsilon)).exp_m1()
}

/// log(1 - exp(-(rate + epsilon))), computed without forming the probability.
#[inline]
pub fn log_probability_from_rate<T: Scalar>(rate: T, epsilon: T) -> T {
    log1m_exp_neg(rate + epsilon)
}

/// Probability that susceptible `i` becomes infectious at `t + 1`.
pub fn infection_probability<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    history: &EpidemicHistory,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<T, ModelError> {
    let rate = infectivity_rate(pop, i, t, history, theta, cfg)?;
    Ok(probability_from_rate(rate, theta.epsilon))
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
