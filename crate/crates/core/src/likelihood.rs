//! Log-likelihood of an observed epidemic, plus an incremental engine that
//! the sampler uses to re-evaluate it after single-component updates.
//!
//! Contributions run over `t = 1..T-1`: an individual susceptible at `t`
//! contributes `log P(i,k,t)` if it is infectious at `t + 1` and
//! `log(1 - P(i,k,t))` otherwise. Each infection event is attributed to the
//! individual's own area exactly once. Individuals infectious at `t = 1` are
//! initial conditions and contribute nothing.

use thiserror::Error;

use crate::history::{EpidemicHistory, HistoryError};
use crate::model::{
    infectivity_rate, log_probability_from_rate, static_predictor, time_term, ModelConfig,
    ModelError, ModelParams,
};
use crate::population::{planar_distance, Population};
use crate::scalar::{log1m_exp_neg, Scalar};

pub use crate::history::{EpidemicHistory as History, Status};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LikelihoodError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("proposal changes {0} but the cache was told only {1:?} changed")]
    CacheMismatch(&'static str, Component),
    #[error("component index {0:?} out of range")]
    ComponentOutOfRange(Component),
}

fn check_inputs<T: Scalar>(
    history: &EpidemicHistory,
    pop: &Population<T>,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<(), LikelihoodError> {
    if history.len() != pop.len() {
        return Err(HistoryError::LengthMismatch {
            found: history.len(),
            expected: pop.len(),
        }
        .into());
    }
    history.check_framework(cfg.framework)?;
    theta.validate(pop)?;
    Ok(())
}

/// Direct evaluation over every (individual, step) term.
///
/// Returns negative infinity when an observed infection has probability zero.
pub fn log_likelihood<T: Scalar>(
    history: &EpidemicHistory,
    pop: &Population<T>,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<T, LikelihoodError> {
    check_inputs(history, pop, theta, cfg)?;
    let horizon = history.horizon();
    let mut total = T::zero();
    for t in 1..horizon {
        for k in 0..pop.n_areas() {
            for &i in pop.members(k) {
                if !history.is_susceptible(i, t) {
                    continue;
                }
                let rate = infectivity_rate(pop, i, t, history, theta, cfg)?;
                if history.infection_time(i) == Some(t + 1) {
                    total += log_probability_from_rate(rate, theta.epsilon);
                } else {
                    total -= rate + theta.epsilon;
                }
            }
        }
    }
    Ok(total)
}

/// Parameter component touched by a sampler update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    None,
    Alpha,
    Alpha1(usize),
    Alpha2(usize),
    Alpha3(usize),
    Delta,
    Lambda,
    Sigma2,
    Phi(usize),
}

/// One (susceptible, infectious) pairing over the epidemic: the kernel enters
/// the non-infection terms on steps `first..=last` and, if `event`, the
/// infection term.
#[derive(Debug, Clone, Copy)]
struct Exposure<T> {
    log_distance: T,
    first: usize,
    last: usize,
    event: bool,
}

#[derive(Debug, Clone)]
struct Subject {
    index: usize,
    area: usize,
    /// Non-infection steps are `1..=nonevent_steps`.
    nonevent_steps: usize,
    /// Step whose probability enters as an infection event.
    event_step: Option<usize>,
    exposures: std::ops::Range<usize>,
}

/// Cached pieces that depend on delta and alpha3 only.
#[derive(Debug, Clone)]
struct KernelTerms<T> {
    nonevent: Vec<T>,
    event: Vec<T>,
}

/// Pending result of a proposed parameter change.
#[derive(Debug, Clone)]
pub struct Proposal<T> {
    theta: ModelParams<T>,
    value: T,
    update: Update<T>,
}

impl<T: Scalar> Proposal<T> {
    /// Log-likelihood at the proposed parameters.
    pub fn log_likelihood(&self) -> T {
        self.value
    }

    pub fn theta(&self) -> &ModelParams<T> {
        &self.theta
    }
}

#[derive(Debug, Clone)]
enum Update<T> {
    Unchanged,
    Area {
        k: usize,
        value: T,
    },
    Areas(Vec<T>),
    Kernels {
        terms: KernelTerms<T>,
        areas: Vec<T>,
    },
}

/// Incremental log-likelihood for a fixed epidemic and population.
///
/// Per-pair kernel values are cached for the current delta; susceptibility
/// updates never touch them. Area subtotals are cached so that a change of
/// phi_k recomputes only the individuals in area k.
#[derive(Debug, Clone)]
pub struct LikelihoodEngine<'a, T> {
    pop: &'a Population<T>,
    horizon: usize,
    subjects: Vec<Subject>,
    by_area: Vec<Vec<usize>>,
    exposures: Vec<Exposure<T>>,
    theta: ModelParams<T>,
    terms: KernelTerms<T>,
    area_values: Vec<T>,
    total: T,
}

impl<'a, T: Scalar> LikelihoodEngine<'a, T> {
    pub fn new(
        pop: &'a Population<T>,
        history: &EpidemicHistory,
        theta: &ModelParams<T>,
        cfg: &ModelConfig,
    ) -> Result<Self, LikelihoodError> {
        check_inputs(history, pop, theta, cfg)?;
        let horizon = history.horizon();
        let last_step = horizon.saturating_sub(1);
        let d_min = T::lit(cfg.distance_floor);

        // closed-open infectious windows [start, end)
        let infectious: Vec<(usize, usize, usize)> = (0..pop.len())
            .filter_map(|j| {
                history.infection_time(j).map(|start| {
                    let end = history.removal_time(j).unwrap_or(usize::MAX);
                    (j, start, end)
                })
            })
            .collect();

        let mut subjects = Vec::new();
        let mut exposures = Vec::new();
        let mut by_area = vec![Vec::new(); pop.n_areas()];
        for k in 0..pop.n_areas() {
            for &i in pop.members(k) {
                let (nonevent_steps, event_step) = match history.infection_time(i) {
                    Some(1) => continue,
                    Some(tau) => (tau - 2, Some(tau - 1)),
                    None => (last_step, None),
                };
                if nonevent_steps == 0 && event_step.is_none() {
                    continue;
                }
                let me = pop.individual(i);
                let begin = exposures.len();
                for &(j, start, end) in &infectious {
                    if j == i || !pop.can_contact(k, pop.individual(j).area, cfg.restricted) {
                        continue;
                    }
                    let first = start.max(1);
                    let last = nonevent_steps.min(end.saturating_sub(1));
                    let event = event_step.is_some_and(|s| start <= s && s < end);
                    if first <= last || event {
                        let d = planar_distance(me, pop.individual(j)).max(d_min);
                        exposures.push(Exposure {
                            log_distance: d.ln(),
                            first,
                            last,
                            event,
                        });
                    }
                }
                by_area[k].push(subjects.len());
                subjects.push(Subject {
                    index: i,
                    area: k,
                    nonevent_steps,
                    event_step,
                    exposures: begin..exposures.len(),
                });
            }
        }

        let mut engine = Self {
            pop,
            horizon,
            subjects,
            by_area,
            exposures,
            theta: theta.clone(),
            terms: KernelTerms {
                nonevent: Vec::new(),
                event: Vec::new(),
            },
            area_values: Vec::new(),
            total: T::zero(),
        };
        engine.terms = engine.kernel_terms(theta)?;
        engine.area_values = engine.all_areas(theta, &engine.terms);
        engine.total = engine.area_values.iter().copied().sum();
        Ok(engine)
    }

    pub fn log_likelihood(&self) -> T {
        self.total
    }

    pub fn theta(&self) -> &ModelParams<T> {
        &self.theta
    }

    /// Per-area subtotals; their sum is the log-likelihood.
    pub fn area_values(&self) -> &[T] {
        &self.area_values
    }

    /// Number of (susceptible, infectious) pairings held in the cache.
    pub fn exposure_count(&self) -> usize {
        self.exposures.len()
    }

    /// Evaluates `theta` assuming it differs from the cached parameters only
    /// in `changed`, recomputing the smallest set of terms that can differ.
    pub fn propose(
        &self,
        theta: &ModelParams<T>,
        changed: Component,
    ) -> Result<Proposal<T>, LikelihoodError> {
        self.check_only_changed(theta, changed)?;
        let update = match changed {
            Component::None | Component::Lambda | Component::Sigma2 => Update::Unchanged,
            Component::Phi(k) => Update::Area {
                k,
                value: self.area_value(k, theta, &self.terms),
            },
            Component::Alpha | Component::Alpha1(_) | Component::Alpha2(_) => {
                Update::Areas(self.all_areas(theta, &self.terms))
            }
            Component::Delta | Component::Alpha3(_) => {
                theta.validate(self.pop)?;
                let terms = self.kernel_terms(theta)?;
                let areas = self.all_areas(theta, &terms);
                Update::Kernels { terms, areas }
            }
        };
        let value = match &update {
            Update::Unchanged => self.total,
            Update::Area { k, value } => self
                .area_values
                .iter()
                .enumerate()
                .map(|(a, &v)| if a == *k { *value } else { v })
                .sum(),
            Update::Areas(areas) | Update::Kernels { areas, .. } => areas.iter().copied().sum(),
        };
        Ok(Proposal {
            theta: theta.clone(),
            value,
            update,
        })
    }

    /// Evaluates `theta` from scratch through the same term functions.
    pub fn propose_full(&self, theta: &ModelParams<T>) -> Result<Proposal<T>, LikelihoodError> {
        theta.validate(self.pop)?;
        let terms = self.kernel_terms(theta)?;
        let areas = self.all_areas(theta, &terms);
        let value = areas.iter().copied().sum();
        Ok(Proposal {
            theta: theta.clone(),
            value,
            update: Update::Kernels { terms, areas },
        })
    }

    pub fn accept(&mut self, proposal: Proposal<T>) {
        match proposal.update {
            Update::Unchanged => {}
            Update::Area { k, value } => self.area_values[k] = value,
            Update::Areas(areas) => self.area_values = areas,
            Update::Kernels { terms, areas } => {
                self.terms = terms;
                self.area_values = areas;
            }
        }
        self.theta = proposal.theta;
        self.total = proposal.value;
    }

    /// Propose and accept in one step; returns the new log-likelihood.
    pub fn log_likelihood_delta(
        &mut self,
        theta: &ModelParams<T>,
        changed: Component,
    ) -> Result<T, LikelihoodError> {
        let p = self.propose(theta, changed)?;
        let v = p.value;
        self.accept(p);
        Ok(v)
    }

    fn check_only_changed(
        &self,
        theta: &ModelParams<T>,
        changed: Component,
    ) -> Result<(), LikelihoodError> {
        let old = &self.theta;
        let (free_vec, free_slot, len) = match changed {
            Component::Alpha1(n) => ("alpha1", n, old.alpha1.len()),
            Component::Alpha2(n) => ("alpha2", n, old.alpha2.len()),
            Component::Alpha3(n) => ("alpha3", n, old.alpha3.len()),
            Component::Phi(n) => ("phi", n, old.phi.len()),
            _ => ("", 0, 1),
        };
        if free_slot >= len {
            return Err(LikelihoodError::ComponentOutOfRange(changed));
        }
        let vectors: [(&'static str, &[T], &[T]); 4] = [
            ("alpha1", &theta.alpha1, &old.alpha1),
            ("alpha2", &theta.alpha2, &old.alpha2),
            ("alpha3", &theta.alpha3, &old.alpha3),
            ("phi", &theta.phi, &old.phi),
        ];
        for (name, new, cur) in vectors {
            let same = new.len() == cur.len()
                && new
                    .iter()
                    .zip(cur)
                    .enumerate()
                    .all(|(n, (a, b))| a == b || (name == free_vec && n == free_slot));
            if !same {
                return Err(LikelihoodError::CacheMismatch(name, changed));
            }
        }
        let scalars = [
            ("alpha", theta.alpha, old.alpha, Component::Alpha),
            ("delta", theta.delta, old.delta, Component::Delta),
            ("lambda", theta.lambda, old.lambda, Component::Lambda),
            ("sigma2", theta.sigma2, old.sigma2, Component::Sigma2),
        ];
        for (name, new, cur, owner) in scalars {
            if new != cur && changed != owner {
                return Err(LikelihoodError::CacheMismatch(name, changed));
            }
        }
        if theta.epsilon != old.epsilon {
            return Err(LikelihoodError::CacheMismatch("epsilon", changed));
        }
        if theta.rho != old.rho {
            return Err(LikelihoodError::CacheMismatch("rho", changed));
        }
        Ok(())
    }

    /// exp(environmental term) prefix sums per area over steps 1..T-1.
    fn time_weights(&self, theta: &ModelParams<T>) -> Result<Option<Vec<Vec<T>>>, LikelihoodError> {
        if theta.alpha3.is_empty() {
            return Ok(None);
        }
        let mut needed = vec![0usize; self.pop.n_areas()];
        for s in &self.subjects {
            let last = s.event_step.unwrap_or(0).max(s.nonevent_steps);
            needed[s.area] = needed[s.area].max(last);
        }
        let mut prefix = Vec::with_capacity(needed.len());
        for (k, &until) in needed.iter().enumerate() {
            let mut acc = vec![T::zero(); until + 1];
            for t in 1..=until {
                acc[t] = acc[t - 1] + time_term(self.pop, k, t, theta)?.exp();
            }
            prefix.push(acc);
        }
        Ok(Some(prefix))
    }

    fn kernel_terms(&self, theta: &ModelParams<T>) -> Result<KernelTerms<T>, LikelihoodError> {
        let prefix = self.time_weights(theta)?;
        let kernel: Vec<T> = self
            .exposures
            .iter()
            .map(|e| (-theta.delta * e.log_distance).exp())
            .collect();
        let mut nonevent = Vec::with_capacity(self.subjects.len());
        let mut event = Vec::with_capacity(self.subjects.len());
        for s in &self.subjects {
            let mut w = T::zero();
            let mut e_sum = T::zero();
            for (e, &kv) in self.exposures[s.exposures.clone()]
                .iter()
                .zip(&kernel[s.exposures.clone()])
            {
                if e.first <= e.last {
                    let steps = match &prefix {
                        None => T::from_usize_lossy(e.last - e.first + 1),
                        Some(p) => p[s.area][e.last] - p[s.area][e.first - 1],
                    };
                    w += kv * steps;
                }
                if e.event {
                    e_sum += kv;
                }
            }
            if let (Some(step), Some(p)) = (s.event_step, &prefix) {
                e_sum *= p[s.area][step] - p[s.area][step - 1];
            }
            nonevent.push(w);
            event.push(e_sum);
        }
        Ok(KernelTerms { nonevent, event })
    }

    fn subject_value(
        &self,
        s: &Subject,
        theta: &ModelParams<T>,
        terms: &KernelTerms<T>,
        idx: usize,
    ) -> T {
        let scale = static_predictor(self.pop, s.index, theta).exp();
        let mut v = -theta.epsilon * T::from_usize_lossy(s.nonevent_steps);
        let w = terms.nonevent[idx];
        if w > T::zero() {
            v -= scale * w;
        }
        if s.event_step.is_some() {
            let e = terms.event[idx];
            let rate = if e > T::zero() { scale * e } else { T::zero() };
            v += log1m_exp_neg(rate + theta.epsilon);
        }
        v
    }

    fn area_value(&self, k: usize, theta: &ModelParams<T>, terms: &KernelTerms<T>) -> T {
        self.by_area[k]
            .iter()
            .map(|&idx| self.subject_value(&self.subjects[idx], theta, terms, idx))
            .sum()
    }

    fn all_areas(&self, theta: &ModelParams<T>, terms: &KernelTerms<T>) -> Vec<T> {
        (0..self.pop.n_areas())
            .map(|k| self.area_value(k, theta, terms))
            .collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Convenience wrapper building a throwaway engine.
pub fn log_likelihood_cached<T: Scalar>(
    history: &EpidemicHistory,
    pop: &Population<T>,
    theta: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<T, LikelihoodError> {
    Ok(LikelihoodEngine::new(pop, history, theta, cfg)?.log_likelihood())
}
