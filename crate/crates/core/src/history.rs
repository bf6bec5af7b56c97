//! Observed or simulated epidemic: per-individual infection and removal
//! times over the discrete steps `1..=T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Framework {
    /// Infection is absorbing.
    #[serde(rename = "SI")]
    Si,
    /// Removal exactly `gamma` steps after infection.
    #[serde(rename = "SIR")]
    Sir { gamma: usize },
}

impl Framework {
    pub fn sir(gamma: usize) -> Result<Self, HistoryError> {
        if gamma == 0 {
            return Err(HistoryError::ZeroInfectiousPeriod);
        }
        Ok(Framework::Sir { gamma })
    }

    pub fn infectious_period(&self) -> Option<usize> {
        match *self {
            Framework::Si => None,
            Framework::Sir { gamma } => Some(gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Susceptible,
    Infectious,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("infectious period must be at least 1")]
    ZeroInfectiousPeriod,
    #[error("individual {index}: infection time {time} outside 1..={horizon}")]
    InfectionOutOfRange {
        index: usize,
        time: usize,
        horizon: usize,
    },
    #[error("individual {index}: removal time {removal} not after infection time {infection}")]
    RemovalBeforeInfection {
        index: usize,
        infection: usize,
        removal: usize,
    },
    #[error("individual {index}: removal time without an infection time")]
    RemovalWithoutInfection { index: usize },
    #[error("individual {index}: removal time present under the SI framework")]
    RemovalUnderSi { index: usize },
    #[error("individual {index}: removal time {found:?} != infection time + gamma ({expected})")]
    RemovalMismatch {
        index: usize,
        found: Option<usize>,
        expected: usize,
    },
    #[error("history covers {found} individuals, population has {expected}")]
    LengthMismatch { found: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpidemicHistory {
    horizon: usize,
    infection: Vec<Option<usize>>,
    removal: Vec<Option<usize>>,
}

impl EpidemicHistory {
    /// Validates the times without reference to a framework.
    pub fn new(
        horizon: usize,
        infection: Vec<Option<usize>>,
        removal: Vec<Option<usize>>,
    ) -> Result<Self, HistoryError> {
        if horizon == 0 {
            return Err(HistoryError::EmptyHorizon);
        }
        if infection.len() != removal.len() {
            return Err(HistoryError::LengthMismatch {
                found: removal.len(),
                expected: infection.len(),
            });
        }
        for (index, (&inf, &rem)) in infection.iter().zip(&removal).enumerate() {
            match (inf, rem) {
                (Some(time), _) if time == 0 || time > horizon => {
                    return Err(HistoryError::InfectionOutOfRange {
                        index,
                        time,
                        horizon,
                    })
                }
                (Some(infection), Some(removal)) if removal <= infection => {
                    return Err(HistoryError::RemovalBeforeInfection {
                        index,
                        infection,
                        removal,
                    })
                }
                (None, Some(_)) => return Err(HistoryError::RemovalWithoutInfection { index }),
                _ => {}
            }
        }
        Ok(Self {
            horizon,
            infection,
            removal,
        })
    }

    /// Builds a history from infection times alone, deriving removals from
    /// the framework.
    pub fn from_infections(
        horizon: usize,
        infection: Vec<Option<usize>>,
        framework: Framework,
    ) -> Result<Self, HistoryError> {
        let removal = infection
            .iter()
            .map(|t| match framework {
                Framework::Si => None,
                Framework::Sir { gamma } => t.map(|t| t + gamma),
            })
            .collect();
        Self::new(horizon, infection, removal)
    }

    /// No one is ever infected.
    pub fn empty(n: usize, horizon: usize) -> Self {
        Self {
            horizon,
            infection: vec![None; n],
            removal: vec![None; n],
        }
    }

    /// Checks that removal times follow from `framework`.
    pub fn check_framework(&self, framework: Framework) -> Result<(), HistoryError> {
        for (index, (&inf, &rem)) in self.infection.iter().zip(&self.removal).enumerate() {
            match framework {
                Framework::Si => {
                    if rem.is_some() {
                        return Err(HistoryError::RemovalUnderSi { index });
                    }
                }
                Framework::Sir { gamma } => {
                    if let Some(t) = inf {
                        if rem != Some(t + gamma) {
                            return Err(HistoryError::RemovalMismatch {
                                index,
                                found: rem,
                                expected: t + gamma,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Re-expresses the same infection times under another framework.
    pub fn with_framework(&self, framework: Framework) -> Self {
        Self::from_infections(self.horizon, self.infection.clone(), framework)
            .expect("infection times were already validated")
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.infection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infection.is_empty()
    }

    pub fn infection_time(&self, i: usize) -> Option<usize> {
        self.infection[i]
    }

    pub fn removal_time(&self, i: usize) -> Option<usize> {
        self.removal[i]
    }

    pub fn infection_times(&self) -> &[Option<usize>] {
        &self.infection
    }

    pub fn removal_times(&self) -> &[Option<usize>] {
        &self.removal
    }

    pub fn status(&self, i: usize, t: usize) -> Status {
        match self.infection[i] {
            Some(inf) if inf <= t => match self.removal[i] {
                Some(rem) if rem <= t => Status::Removed,
                _ => Status::Infectious,
            },
            _ => Status::Susceptible,
        }
    }

    #[inline]
    pub fn is_infectious(&self, i: usize, t: usize) -> bool {
        self.status(i, t) == Status::Infectious
    }

    #[inline]
    pub fn is_susceptible(&self, i: usize, t: usize) -> bool {
        self.status(i, t) == Status::Susceptible
    }

    /// `(susceptible, infectious, removed)` counts at step `t`.
    pub fn counts(&self, t: usize) -> (usize, usize, usize) {
        (0..self.len()).fold((0, 0, 0), |(s, i, r), ind| match self.status(ind, t) {
            Status::Susceptible => (s + 1, i, r),
            Status::Infectious => (s, i + 1, r),
            Status::Removed => (s, i, r + 1),
        })
    }

    /// Individuals infectious at t = 1.
    pub fn initial_infectives(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.infection[i] == Some(1))
            .collect()
    }

    /// Fraction of individuals ever infected.
    pub fn attack_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.infection.iter().filter(|t| t.is_some()).count() as f64 / self.len() as f64
    }

    /// Same history for a permuted population: `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            horizon: self.horizon,
            infection: perm.iter().map(|&o| self.infection[o]).collect(),
            removal: perm.iter().map(|&o| self.removal[o]).collect(),
        }
    }

    pub(crate) fn set_infection(&mut self, i: usize, t: usize, framework: Framework) {
        self.infection[i] = Some(t);
        self.removal[i] = framework.infectious_period().map(|g| t + g);
    }
}
