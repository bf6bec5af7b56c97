//! Spatial data model: individuals, areas, first-order adjacency and the
//! pairwise distance precomputation used by the likelihood engine.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::scalar::Scalar;

/// Default lower bound on pairwise distances, in kilometres.
pub const DEFAULT_DISTANCE_FLOOR: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("duplicate individual id {0}")]
    DuplicateId(u64),
    #[error("individual {id} references area {area} but only {n_areas} areas exist")]
    UnknownArea {
        id: u64,
        area: usize,
        n_areas: usize,
    },
    #[error("individual {id} has {found} covariates, expected {expected}")]
    CovariateDim {
        id: u64,
        found: usize,
        expected: usize,
    },
    #[error("area {area} has {found} covariates, expected {expected}")]
    AreaCovariateDim {
        area: usize,
        found: usize,
        expected: usize,
    },
    #[error("area {area} time covariates at t={t} have {found} columns, expected {expected}")]
    TimeCovariateDim {
        area: usize,
        t: isize,
        found: usize,
        expected: usize,
    },
    #[error("individual {0} has non-finite coordinates")]
    NonFiniteCoordinate(u64),
    #[error("adjacency references area {area} but only {n_areas} areas exist")]
    EdgeOutOfRange { area: usize, n_areas: usize },
    #[error("area {0} is listed as its own neighbour")]
    SelfAdjacency(usize),
    #[error("area graph has {graph} areas but {areas} area records were supplied")]
    AreaCountMismatch { graph: usize, areas: usize },
    #[error("distance queried between individual {0} and itself")]
    SameIndividual(usize),
    #[error("distance cache needs {pairs} pairs, budget is {budget}")]
    MemoryBudget { pairs: usize, budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<T> {
    pub id: u64,
    pub x: T,
    pub y: T,
    /// Zero-based area index.
    pub area: usize,
    pub covariates: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Area<T> {
    /// Static area-level covariates.
    pub covariates: Vec<T>,
    /// Environmental covariates by time step, `time_covariates[t - time_start]`.
    /// Empty when the area carries no time-varying covariates.
    pub time_covariates: Vec<Vec<T>>,
    /// Step of the first row of `time_covariates`; may be zero or negative so
    /// that lagged covariates exist for the first steps of the epidemic.
    pub time_start: isize,
}

impl<T> Default for Area<T> {
    fn default() -> Self {
        Self {
            covariates: Vec::new(),
            time_covariates: Vec::new(),
            time_start: 1,
        }
    }
}

impl<T: Scalar> Area<T> {
    /// Time-varying covariates at `step`, if recorded.
    pub fn time_covariates_at(&self, step: isize) -> Option<&[T]> {
        let idx = step - self.time_start;
        if idx < 0 {
            return None;
        }
        self.time_covariates.get(idx as usize).map(Vec::as_slice)
    }
}

/// Undirected first-order adjacency between areas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AreaGraph {
    /// Builds the graph from a zero-based edge list. Each edge is applied in
    /// both directions and duplicates are dropped.
    pub fn from_edges(n_areas: usize, edges: &[(usize, usize)]) -> Result<Self, PopulationError> {
        let mut sets = vec![BTreeSet::new(); n_areas];
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= n_areas {
                    return Err(PopulationError::EdgeOutOfRange { area: v, n_areas });
                }
            }
            if a == b {
                return Err(PopulationError::SelfAdjacency(a));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Graph with no edges.
    pub fn islands(n_areas: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n_areas],
        }
    }

    /// Path graph 0 - 1 - ... - (n-1).
    pub fn path(n_areas: usize) -> Self {
        let edges: Vec<_> = (1..n_areas).map(|k| (k - 1, k)).collect();
        Self::from_edges(n_areas, &edges).expect("path edges are valid")
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Sorted neighbour list ξ(k).
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    /// Neighbour count m_k.
    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(a, ns)| ns.iter().all(|&b| b != a && self.are_adjacent(b, a)))
    }
}

#[derive(Debug, Clone)]
pub struct Population<T> {
    individuals: Vec<Individual<T>>,
    areas: Vec<Area<T>>,
    graph: AreaGraph,
    members: Vec<Vec<usize>>,
    individual_dim: usize,
    area_dim: usize,
    time_dim: usize,
}

impl<T: Scalar> Population<T> {
    /// Validates and canonicalises a population. Individuals are sorted by id
    /// so every downstream result is independent of input row order.
    pub fn new(
        mut individuals: Vec<Individual<T>>,
        areas: Vec<Area<T>>,
        graph: AreaGraph,
    ) -> Result<Self, PopulationError> {
        if graph.len() != areas.len() {
            return Err(PopulationError::AreaCountMismatch {
                graph: graph.len(),
                areas: areas.len(),
            });
        }
        individuals.sort_by_key(|ind| ind.id);
        for w in individuals.windows(2) {
            if w[0].id == w[1].id {
                return Err(PopulationError::DuplicateId(w[0].id));
            }
        }
        let n_areas = areas.len();
        let individual_dim = individuals.first().map_or(0, |i| i.covariates.len());
        let mut members = vec![Vec::new(); n_areas];
        for (idx, ind) in individuals.iter().enumerate() {
            if ind.area >= n_areas {
                return Err(PopulationError::UnknownArea {
                    id: ind.id,
                    area: ind.area,
                    n_areas,
                });
            }
            if ind.covariates.len() != individual_dim {
                return Err(PopulationError::CovariateDim {
                    id: ind.id,
                    found: ind.covariates.len(),
                    expected: individual_dim,
                });
            }
            if !(ind.x.is_finite() && ind.y.is_finite()) {
                return Err(PopulationError::NonFiniteCoordinate(ind.id));
            }
            members[ind.area].push(idx);
        }
        let area_dim = areas.first().map_or(0, |a| a.covariates.len());
        let time_dim = areas
            .iter()
            .flat_map(|a| a.time_covariates.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0);
        for (k, area) in areas.iter().enumerate() {
            if area.covariates.len() != area_dim {
                return Err(PopulationError::AreaCovariateDim {
                    area: k,
                    found: area.covariates.len(),
                    expected: area_dim,
                });
            }
            for (t0, row) in area.time_covariates.iter().enumerate() {
                if row.len() != time_dim {
                    return Err(PopulationError::TimeCovariateDim {
                        area: k,
                        t: area.time_start + t0 as isize,
                        found: row.len(),
                        expected: time_dim,
                    });
                }
            }
        }
        Ok(Self {
            individuals,
            areas,
            graph,
            members,
            individual_dim,
            area_dim,
            time_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn individuals(&self) -> &[Individual<T>] {
        &self.individuals
    }

    pub fn individual(&self, i: usize) -> &Individual<T> {
        &self.individuals[i]
    }

    pub fn areas(&self) -> &[Area<T>] {
        &self.areas
    }

    pub fn area(&self, k: usize) -> &Area<T> {
        &self.areas[k]
    }

    pub fn graph(&self) -> &AreaGraph {
        &self.graph
    }

    /// Indices of the individuals living in area `k`, in id order.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn individual_covariate_dim(&self) -> usize {
        self.individual_dim
    }

    pub fn area_covariate_dim(&self) -> usize {
        self.area_dim
    }

    pub fn time_covariate_dim(&self) -> usize {
        self.time_dim
    }

    /// Position of the individual with the given id in canonical order.
    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.individuals
            .binary_search_by_key(&id, |ind| ind.id)
            .ok()
    }

    /// Areas whose infectious members can reach a susceptible in area `k`.
    pub fn contactable_areas(&self, k: usize, restricted: bool) -> Vec<usize> {
        if restricted {
            let mut out = Vec::with_capacity(self.graph.degree(k) + 1);
            out.push(k);
            out.extend_from_slice(self.graph.neighbors(k));
            out.sort_unstable();
            out
        } else {
            (0..self.n_areas()).collect()
        }
    }

    /// Individuals in area `k` and its neighbours (restricted), or everyone.
    pub fn contactable_set(&self, k: usize, restricted: bool) -> Vec<usize> {
        if !restricted {
            return (0..self.len()).collect();
        }
        let mut out: Vec<usize> = self
            .contactable_areas(k, true)
            .into_iter()
            .flat_map(|a| self.members[a].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Whether a susceptible in area `a` can be infected by someone in area `b`.
    pub fn can_contact(&self, a: usize, b: usize, restricted: bool) -> bool {
        !restricted || a == b || self.graph.are_adjacent(a, b)
    }
}

/// Euclidean distance between two individuals, floored at `d_min`.
pub fn distance<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    j: usize,
    d_min: T,
) -> Result<T, PopulationError> {
    if i == j {
        return Err(PopulationError::SameIndividual(i));
    }
    Ok(planar_distance(pop.individual(i), pop.individual(j)).max(d_min))
}

#[inline]
pub(crate) fn planar_distance<T: Scalar>(a: &Individual<T>, b: &Individual<T>) -> T {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Floored distances for every pair that can ever interact under the chosen
/// transmission scope, stored in both directions as a compressed row layout.
#[derive(Debug, Clone)]
pub struct DistanceCache<T> {
    restricted: bool,
    d_min: T,
    offsets: Vec<usize>,
    partners: Vec<u32>,
    distances: Vec<T>,
}

impl<T: Scalar> DistanceCache<T> {
    /// Number of unordered pairs held.
    pub fn pair_count(&self) -> usize {
        self.partners.len() / 2
    }

    pub fn restricted(&self) -> bool {
        self.restricted
    }

    pub fn distance_floor(&self) -> T {
        self.d_min
    }

    /// Contactable partners of `i` with their distances, in index order.
    pub fn partners(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.partners[range.clone()]
            .iter()
            .zip(&self.distances[range])
            .map(|(&j, &d)| (j as usize, d))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let range = self.offsets[i]..self.offsets[i + 1];
        let row = &self.partners[range.clone()];
        row.binary_search(&(j as u32))
            .ok()
            .map(|pos| self.distances[range.start + pos])
    }
}

/// Precomputes pair distances. `max_pairs` bounds the number of unordered
/// pairs held in memory.
pub fn build_distance_cache<T: Scalar>(
    pop: &Population<T>,
    restricted: bool,
    d_min: T,
    max_pairs: usize,
) -> Result<DistanceCache<T>, PopulationError> {
    let n = pop.len();
    let mut row_len = vec![0usize; n];
    for (i, ind) in pop.individuals().iter().enumerate() {
        row_len[i] = if restricted {
            pop.contactable_areas(ind.area, true)
                .iter()
                .map(|&a| pop.members(a).len())
                .sum::<usize>()
                - 1
        } else {
            n - 1
        };
    }
    let directed: usize = row_len.iter().sum();
    let pairs = directed / 2;
    if pairs > max_pairs {
        return Err(PopulationError::MemoryBudget {
            pairs,
            budget: max_pairs,
        });
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut partners = Vec::with_capacity(directed);
    let mut distances = Vec::with_capacity(directed);
    for i in 0..n {
        let ind = pop.individual(i);
        for j in pop.contactable_set(ind.area, restricted) {
            if j != i {
                partners.push(j as u32);
                distances.push(planar_distance(ind, pop.individual(j)).max(d_min));
            }
        }
        offsets.push(partners.len());
    }
    Ok(DistanceCache {
        restricted,
        d_min,
        offsets,
        partners,
        distances,
    })
}
