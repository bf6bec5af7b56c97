//! Posterior summaries that feed maps and plots: area-level infectivity risk
//! and one-to-one infection probability against distance.

use rand::seq::index::sample;
use serde::Serialize;
use thiserror::Error;

use crate::history::EpidemicHistory;
use crate::mcmc::quantile_sorted;
use crate::model::{dot, kernel, susceptibility, time_term, ModelConfig, ModelError, ModelParams};
use crate::population::{planar_distance, Population};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostError {
    #[error("no posterior draws supplied")]
    NoDraws,
    #[error("area {0} has no individuals")]
    EmptyArea(usize),
    #[error("area {area} out of range for {areas} areas")]
    AreaOutOfRange { area: usize, areas: usize },
    #[error("time {t} outside 1..={horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("distance grid must be strictly positive and increasing")]
    BadGrid,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the per-individual posterior mean rate is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RiskEstimate {
    /// Average of the rate over draws.
    #[default]
    DrawAverage,
    /// Rate at the posterior mean of the parameters.
    PlugIn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskCell<T> {
    pub area: usize,
    pub t: usize,
    /// `None` when the area has no susceptible individual at `t`.
    pub mean_rate: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskMap<T> {
    pub estimate: RiskEstimate,
    /// Ordered by time, then area.
    pub cells: Vec<RiskCell<T>>,
}

impl<T: Scalar> RiskMap<T> {
    pub fn get(&self, area: usize, t: usize) -> Option<T> {
        self.cells
            .iter()
            .find(|c| c.area == area && c.t == t)
            .and_then(|c| c.mean_rate)
    }
}

/// Running mean; a constant sequence reproduces its value exactly.
#[derive(Debug, Clone, Copy)]
struct Mean<T> {
    n: usize,
    value: T,
}

impl<T: Scalar> Mean<T> {
    fn new() -> Self {
        Self {
            n: 0,
            value: T::zero(),
        }
    }

    fn push(&mut self, x: T) {
        self.n += 1;
        self.value += (x - self.value) / T::from_usize_lossy(self.n);
    }

    fn get(&self) -> Option<T> {
        (self.n > 0).then_some(self.value)
    }
}

/// Component-wise posterior mean of a set of draws.
pub fn posterior_mean<T: Scalar>(draws: &[ModelParams<T>]) -> Result<ModelParams<T>, PostError> {
    let first = draws.first().ok_or(PostError::NoDraws)?;
    let mut out = first.clone();
    let avg = |get: &dyn Fn(&ModelParams<T>) -> T| {
        let mut m = Mean::new();
        draws.iter().for_each(|d| m.push(get(d)));
        m.value
    };
    out.alpha = avg(&|d| d.alpha);
    out.delta = avg(&|d| d.delta);
    out.lambda = avg(&|d| d.lambda);
    out.sigma2 = avg(&|d| d.sigma2);
    for j in 0..out.alpha1.len() {
        out.alpha1[j] = avg(&|d| d.alpha1[j]);
    }
    for j in 0..out.alpha2.len() {
        out.alpha2[j] = avg(&|d| d.alpha2[j]);
    }
    for j in 0..out.alpha3.len() {
        out.alpha3[j] = avg(&|d| d.alpha3[j]);
    }
    for k in 0..out.phi.len() {
        out.phi[k] = avg(&|d| d.phi[k]);
    }
    Ok(out)
}

/// Floored distances from susceptible `i` to the infectious individuals it
/// can contact at `t`, in the same order the model sums them.
fn infectious_distances<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    history: &EpidemicHistory,
    cfg: &ModelConfig,
) -> Vec<T> {
    let me = pop.individual(i);
    let d_min = T::lit(cfg.distance_floor);
    let mut out = Vec::new();
    for a in pop.contactable_areas(me.area, cfg.restricted) {
        for &j in pop.members(a) {
            if j != i && history.is_infectious(j, t) {
                out.push(planar_distance(me, pop.individual(j)).max(d_min));
            }
        }
    }
    out
}

fn rate_from_distances<T: Scalar>(
    pop: &Population<T>,
    i: usize,
    t: usize,
    distances: &[T],
    theta: &ModelParams<T>,
) -> Result<T, ModelError> {
    let mut sum = T::zero();
    for &d in distances {
        sum += kernel(d, theta.delta)?;
    }
    if sum == T::zero() {
        return Ok(T::zero());
    }
    Ok(susceptibility(pop, i, t, theta)? * sum)
}

/// Per-area, per-time average over susceptible individuals of their
/// posterior mean infectivity rate.
pub fn risk_map<T: Scalar>(
    draws: &[ModelParams<T>],
    history: &EpidemicHistory,
    pop: &Population<T>,
    cfg: &ModelConfig,
    times: &[usize],
    estimate: RiskEstimate,
) -> Result<RiskMap<T>, PostError> {
    if draws.is_empty() {
        return Err(PostError::NoDraws);
    }
    let horizon = history.horizon();
    if let Some(&t) = times.iter().find(|&&t| t == 0 || t > horizon) {
        return Err(PostError::TimeOutOfRange { t, horizon });
    }
    for d in draws {
        d.validate(pop)?;
    }
    let plug_in;
    let used: &[ModelParams<T>] = match estimate {
        RiskEstimate::DrawAverage => draws,
        RiskEstimate::PlugIn => {
            plug_in = [posterior_mean(draws)?];
            &plug_in
        }
    };
    let mut cells = Vec::with_capacity(times.len() * pop.n_areas());
    for &t in times {
        for k in 0..pop.n_areas() {
            let mut area_mean = Mean::new();
            for &i in pop.members(k) {
                if !history.is_susceptible(i, t) {
                    continue;
                }
                let distances = infectious_distances(pop, i, t, history, cfg);
                let mut rate = Mean::new();
                for theta in used {
                    rate.push(rate_from_distances(pop, i, t, &distances, theta)?);
                }
                area_mean.push(rate.value);
            }
            cells.push(RiskCell {
                area: k,
                t,
                mean_rate: area_mean.get(),
            });
        }
    }
    Ok(RiskMap { estimate, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCurve<T> {
    pub area: usize,
    pub distances: Vec<T>,
    /// Row indices of the sampled draws.
    pub draw_indices: Vec<usize>,
    /// One curve per sampled draw, aligned with `draw_indices`.
    pub curves: Vec<Vec<T>>,
    /// Pointwise mean of the sampled curves.
    pub mean: Vec<T>,
}

/// Infection probability for a susceptible with log susceptibility
/// `log_omega` and one infectious individual at distance `d`.
pub fn one_to_one_probability<T: Scalar>(log_omega: T, d: T, delta: T) -> Result<T, ModelError> {
    Ok(-(-(log_omega.exp() * kernel(d, delta)?)).exp_m1())
}

/// Median of each individual covariate over the members of area `k`.
pub fn median_profile<T: Scalar>(pop: &Population<T>, k: usize) -> Result<Vec<T>, PostError> {
    if k >= pop.n_areas() {
        return Err(PostError::AreaOutOfRange {
            area: k,
            areas: pop.n_areas(),
        });
    }
    let members = pop.members(k);
    if members.is_empty() {
        return Err(PostError::EmptyArea(k));
    }
    Ok((0..pop.individual_covariate_dim())
        .map(|c| {
            let mut v: Vec<f64> = members
                .iter()
                .map(|&i| pop.individual(i).covariates[c].as_f64())
                .collect();
            v.sort_by(f64::total_cmp);
            T::lit(quantile_sorted(&v, 0.5))
        })
        .collect())
}

/// Log susceptibility of a median-profile individual in area `k`. The
/// environmental term enters only when `t` is given.
pub fn profile_log_susceptibility<T: Scalar>(
    pop: &Population<T>,
    k: usize,
    profile: &[T],
    theta: &ModelParams<T>,
    t: Option<usize>,
) -> Result<T, ModelError> {
    let mut lp = theta.alpha
        + dot(profile, &theta.alpha1)
        + dot(&pop.area(k).covariates, &theta.alpha2)
        + theta.phi[k];
    if let Some(t) = t {
        lp += time_term(pop, k, t, theta)?;
    }
    Ok(lp)
}

/// Probability-versus-distance curves for area `k` from `n_samples` draws
/// chosen without replacement on the stream `postprocess/kernel-curve`
/// (all draws when fewer are available).
pub fn kernel_curve<T: Scalar>(
    draws: &[ModelParams<T>],
    pop: &Population<T>,
    k: usize,
    d_grid: &[T],
    n_samples: usize,
    seed: u64,
    t: Option<usize>,
) -> Result<KernelCurve<T>, PostError> {
    if draws.is_empty() {
        return Err(PostError::NoDraws);
    }
    if d_grid.is_empty() || !(d_grid[0] > T::zero()) || d_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PostError::BadGrid);
    }
    let profile = median_profile(pop, k)?;
    let draw_indices: Vec<usize> = if n_samples >= draws.len() {
        (0..draws.len()).collect()
    } else {
        let mut rng = substream(seed, "postprocess/kernel-curve");
        let mut v = sample(&mut rng, draws.len(), n_samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut curves = Vec::with_capacity(draw_indices.len());
    let mut means = vec![Mean::new(); d_grid.len()];
    for &r in &draw_indices {
        let theta = &draws[r];
        let lo = profile_log_susceptibility(pop, k, &profile, theta, t)?;
        let curve = d_grid
            .iter()
            .map(|&d| one_to_one_probability(lo, d, theta.delta))
            .collect::<Result<Vec<T>, _>>()?;
        for (m, &p) in means.iter_mut().zip(&curve) {
            m.push(p);
        }
        curves.push(curve);
    }
    Ok(KernelCurve {
        area: k,
        distances: d_grid.to_vec(),
        draw_indices,
        curves,
        mean: means.iter().map(|m| m.value).collect(),
    })
}

/// `points` evenly spaced distances on (0, dmax], the first at dmax / points.
pub fn distance_grid<T: Scalar>(dmax: T, points: usize) -> Vec<T> {
    (1..=points)
        .map(|p| dmax * T::from_usize_lossy(p) / T::from_usize_lossy(points))
        .collect()
}
