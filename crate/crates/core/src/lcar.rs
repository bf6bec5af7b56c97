//! Leroux conditional autoregressive prior on the area random effects.
//!
//! Phi ~ MVN(0, sigma2 * L^-1) with L = lambda R + (1 - lambda) I, where R is
//! the neighbourhood matrix with the neighbour counts on the diagonal and -1
//! for each adjacent pair.
//!
//! The matrices are stored dense; K is the number of areas and stays small.
//! L has the sparsity of the adjacency graph, and the quadratic form is
//! evaluated directly from the edge list.

use rand::Rng;
use thiserror::Error;

use crate::linalg::{DenseCholesky, NotPositiveDefinite};
use crate::population::AreaGraph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LcarError {
    #[error("lambda = {0} outside [0, 1) required for a proper prior")]
    LambdaOutOfRange(f64),
    #[error("sigma2 = {0} must be positive")]
    NonPositiveVariance(f64),
    #[error("phi has length {found}, graph has {expected} areas")]
    Dimension { found: usize, expected: usize },
    #[error("conditional for area {0} is degenerate (island area under lambda = 1)")]
    DegenerateConditional(usize),
    #[error(transparent)]
    NotPositiveDefinite(#[from] NotPositiveDefinite),
}

/// R with R_kk = m_k and R_kl = -1 for adjacent areas.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> NeighborhoodMatrix<T> {
    pub fn from_graph(graph: &AreaGraph) -> Self {
        let k = graph.len();
        let mut data = vec![T::zero(); k * k];
        for a in 0..k {
            data[a * k + a] = T::from_usize_lossy(graph.degree(a));
            for &b in graph.neighbors(a) {
                data[a * k + b] = -T::one();
            }
        }
        Self { dim: k, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.dim + c]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Unscaled precision L = lambda R + (1 - lambda) I; the prior precision is L / sigma2.
#[derive(Debug, Clone, PartialEq)]
pub struct LcarPrecision<T> {
    lambda: T,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> LcarPrecision<T> {
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.dim + c]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn factor(&self) -> Result<DenseCholesky<T>, LcarError> {
        Ok(DenseCholesky::new(&self.data, self.dim)?)
    }
}

fn check_proper<T: Scalar>(lambda: T) -> Result<(), LcarError> {
    if lambda >= T::zero() && lambda < T::one() {
        Ok(())
    } else {
        Err(LcarError::LambdaOutOfRange(lambda.as_f64()))
    }
}

pub fn build_precision<T: Scalar>(
    graph: &AreaGraph,
    lambda: T,
) -> Result<LcarPrecision<T>, LcarError> {
    check_proper(lambda)?;
    let r = NeighborhoodMatrix::<T>::from_graph(graph);
    let k = r.dim();
    let mut data: Vec<T> = r.as_slice().iter().map(|&v| lambda * v).collect();
    for a in 0..k {
        data[a * k + a] += T::one() - lambda;
    }
    Ok(LcarPrecision {
        lambda,
        dim: k,
        data,
    })
}

/// Phi' L Phi, computed from the edge list.
pub fn quadratic_form<T: Scalar>(phi: &[T], lambda: T, graph: &AreaGraph) -> T {
    let one_minus = T::one() - lambda;
    let mut q = T::zero();
    for (k, &p) in phi.iter().enumerate() {
        q += (lambda * T::from_usize_lossy(graph.degree(k)) + one_minus) * p * p;
    }
    let two = T::lit(2.0);
    for (a, b) in graph.edges() {
        q -= two * lambda * phi[a] * phi[b];
    }
    q
}

/// log det L.
pub fn log_det_precision<T: Scalar>(graph: &AreaGraph, lambda: T) -> Result<T, LcarError> {
    Ok(build_precision(graph, lambda)?.factor()?.log_det())
}

/// Joint log density of Phi under the prior.
pub fn log_density<T: Scalar>(
    phi: &[T],
    lambda: T,
    sigma2: T,
    graph: &AreaGraph,
) -> Result<T, LcarError> {
    if phi.len() != graph.len() {
        return Err(LcarError::Dimension {
            found: phi.len(),
            expected: graph.len(),
        });
    }
    if !(sigma2 > T::zero()) {
        return Err(LcarError::NonPositiveVariance(sigma2.as_f64()));
    }
    let log_det = log_det_precision(graph, lambda)?;
    Ok(log_density_with(phi, lambda, sigma2, graph, log_det))
}

/// Same as [`log_density`] with log det L already known.
pub fn log_density_with<T: Scalar>(
    phi: &[T],
    lambda: T,
    sigma2: T,
    graph: &AreaGraph,
    log_det: T,
) -> T {
    let k = T::from_usize_lossy(phi.len());
    let half = T::lit(0.5);
    half * (log_det - k * sigma2.ln())
        - half * k * (T::TAU()).ln()
        - half * quadratic_form(phi, lambda, graph) / sigma2
}

/// Mean and variance of phi_k given the other components.
pub fn full_conditional<T: Scalar>(
    k: usize,
    phi: &[T],
    lambda: T,
    sigma2: T,
    graph: &AreaGraph,
) -> Result<(T, T), LcarError> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(LcarError::LambdaOutOfRange(lambda.as_f64()));
    }
    let denom = T::from_usize_lossy(graph.degree(k)) * lambda + T::one() - lambda;
    if denom <= T::zero() {
        return Err(LcarError::DegenerateConditional(k));
    }
    let neighbor_sum: T = graph.neighbors(k).iter().map(|&l| phi[l]).sum();
    Ok((lambda * neighbor_sum / denom, sigma2 / denom))
}

/// Exact draw from the prior: phi = sigma * C'^-1 z where L = C C'.
pub fn sample_prior<T: Scalar, R: Rng + ?Sized>(
    lambda: T,
    sigma2: T,
    graph: &AreaGraph,
    rng: &mut R,
) -> Result<Vec<T>, LcarError> {
    if !(sigma2 > T::zero()) {
        return Err(LcarError::NonPositiveVariance(sigma2.as_f64()));
    }
    let chol = build_precision(graph, lambda)?.factor()?;
    let z: Vec<T> = (0..graph.len()).map(|_| T::standard_normal(rng)).collect();
    let sigma = sigma2.sqrt();
    Ok(chol
        .solve_upper(&z)
        .into_iter()
        .map(|v| v * sigma)
        .collect())
}
