//! Synthetic study geography: a grid of rectangular areas with rook adjacency
//! and uniformly scattered individuals carrying one standardised covariate.
//!
//! The default is a row of eight long, narrow strips. With a steep kernel
//! most close contacts then cross a strip boundary, so whether transmission
//! is confined to neighbouring areas actually matters to the fit.

use rand::seq::index::sample;
use rand::Rng;

use crate::population::{Area, AreaGraph, Individual, Population, PopulationError};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeography {
    pub cols: usize,
    pub rows: usize,
    pub per_area: usize,
    /// Extent of each rectangular area in km.
    pub width_km: f64,
    pub height_km: f64,
    pub seed: u64,
}

impl Default for GridGeography {
    /// 8 strips of 1.5 km by 66 km, 296 individuals.
    fn default() -> Self {
        Self {
            cols: 8,
            rows: 1,
            per_area: 37,
            width_km: 1.5,
            height_km: 66.0,
            seed: 2009,
        }
    }
}

impl GridGeography {
    pub fn n_areas(&self) -> usize {
        self.cols * self.rows
    }

    /// Areas sharing an edge are neighbours; corner contact does not count.
    pub fn graph(&self) -> AreaGraph {
        let idx = |c: usize, r: usize| r * self.cols + c;
        let mut edges = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    edges.push((idx(c, r), idx(c + 1, r)));
                }
                if r + 1 < self.rows {
                    edges.push((idx(c, r), idx(c, r + 1)));
                }
            }
        }
        AreaGraph::from_edges(self.n_areas(), &edges).expect("grid edges are valid")
    }

    /// Individuals are uniform within their block. The covariate is a
    /// standardised unit size drawn uniformly on 400..700.
    pub fn build<T: Scalar>(&self) -> Result<Population<T>, PopulationError> {
        let mut rng = substream(self.seed, "synthetic/geography");
        let n = self.n_areas() * self.per_area;
        let sizes: Vec<f64> = (0..n).map(|_| rng.random_range(400.0..700.0)).collect();
        let mean = sizes.iter().sum::<f64>() / n as f64;
        let sd = (sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let mut individuals = Vec::with_capacity(n);
        for k in 0..self.n_areas() {
            let (c, r) = (k % self.cols, k / self.cols);
            for _ in 0..self.per_area {
                let id = individuals.len();
                let x = (c as f64 + rng.random::<f64>()) * self.width_km;
                let y = (r as f64 + rng.random::<f64>()) * self.height_km;
                individuals.push(Individual {
                    id: id as u64 + 1,
                    x: T::lit(x),
                    y: T::lit(y),
                    area: k,
                    covariates: vec![T::lit((sizes[id] - mean) / sd)],
                });
            }
        }
        Population::new(
            individuals,
            vec![Area::default(); self.n_areas()],
            self.graph(),
        )
    }

    /// A fixed set of `count` initial infective ids for this geography.
    pub fn default_initial_ids(&self, count: usize) -> Vec<u64> {
        let mut rng = substream(self.seed, "synthetic/initial");
        let n = self.n_areas() * self.per_area;
        let mut ids: Vec<u64> = sample(&mut rng, n, count.min(n))
            .into_iter()
            .map(|i| i as u64 + 1)
            .collect();
        ids.sort_unstable();
        ids
    }
}
