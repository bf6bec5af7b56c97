//! Posterior sampling: one random-walk Metropolis-Hastings update per
//! parameter block, then a conjugate Gibbs draw of sigma2.
//!
//! A sweep updates alpha (when estimated), the alpha1, alpha2 and alpha3
//! components, delta, phi_1..phi_K and lambda in that order. Proposal scales
//! adapt during burn-in only and are frozen afterwards.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use thiserror::Error;

use crate::history::EpidemicHistory;
use crate::lcar::{log_density_with, log_det_precision, quadratic_form, sample_prior, LcarError};
use crate::likelihood::{log_likelihood, Component, LikelihoodEngine, LikelihoodError};
use crate::model::{ModelConfig, ModelParams};
use crate::population::{AreaGraph, Population};
use crate::rng::substream;
use crate::scalar::{ln_gamma, Scalar};

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("log-posterior at the initial state is {value} ({detail})")]
    NonFiniteInit { value: f64, detail: String },
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Lcar(#[from] LcarError),
}

/// Normal with mode 0 truncated to the positive half line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNormal {
    /// Variance of the underlying normal before truncation.
    pub variance: f64,
}

impl Default for HalfNormal {
    fn default() -> Self {
        Self { variance: 100.0 }
    }
}

impl HalfNormal {
    pub fn scale(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Log density; -inf below zero.
    pub fn log_density<T: Scalar>(&self, x: T) -> T {
        if !(x >= T::zero()) {
            return T::neg_infinity();
        }
        let v = T::lit(self.variance);
        T::LN_2() - T::lit(0.5) * (T::TAU() * v).ln() - x * x / (T::lit(2.0) * v)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        // P(X <= q) = 2 Phi(q / s) - 1
        self.scale() * standard_normal_quantile((1.0 + p) / 2.0)
    }

    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        T::standard_normal(rng).abs() * T::lit(self.scale())
    }
}

fn standard_normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LambdaPrior {
    Beta { a: f64, b: f64 },
    Uniform,
}

impl LambdaPrior {
    /// Log density on [0, 1); the LCAR prior needs lambda < 1.
    pub fn log_density<T: Scalar>(&self, x: T) -> T {
        if !(x >= T::zero() && x < T::one()) {
            return T::neg_infinity();
        }
        match *self {
            LambdaPrior::Uniform => T::zero(),
            LambdaPrior::Beta { a, b } => {
                let (ta, tb) = (T::lit(a), T::lit(b));
                (ta - T::one()) * x.ln() + (tb - T::one()) * (-x).ln_1p() - T::lit(ln_beta(a, b))
            }
        }
    }

    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            LambdaPrior::Uniform => T::open01(rng),
            LambdaPrior::Beta { a, b } => {
                let x = T::gamma_rate(T::lit(a), T::one(), rng);
                let y = T::gamma_rate(T::lit(b), T::one(), rng);
                x / (x + y)
            }
        }
    }
}

/// Gamma(shape, rate) on the precision tau = 1 / sigma2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            shape: 0.05,
            rate: 0.05,
        }
    }
}

impl GammaPrior {
    pub fn log_density<T: Scalar>(&self, tau: T) -> T {
        if !(tau > T::zero()) {
            return T::neg_infinity();
        }
        let (a, b) = (T::lit(self.shape), T::lit(self.rate));
        a * b.ln() - T::lit(ln_gamma(self.shape)) + (a - T::one()) * tau.ln() - b * tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha: HalfNormal,
    pub alpha1: HalfNormal,
    pub alpha2: HalfNormal,
    pub alpha3: HalfNormal,
    pub delta: HalfNormal,
    pub lambda: LambdaPrior,
    pub tau: GammaPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            alpha: HalfNormal::default(),
            alpha1: HalfNormal::default(),
            alpha2: HalfNormal::default(),
            alpha3: HalfNormal::default(),
            delta: HalfNormal::default(),
            lambda: LambdaPrior::Uniform,
            tau: GammaPrior::default(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), McmcError> {
        let mut values = vec![
            ("alpha variance", self.alpha.variance),
            ("alpha1 variance", self.alpha1.variance),
            ("alpha2 variance", self.alpha2.variance),
            ("alpha3 variance", self.alpha3.variance),
            ("delta variance", self.delta.variance),
            ("tau shape", self.tau.shape),
            ("tau rate", self.tau.rate),
        ];
        if let LambdaPrior::Beta { a, b } = self.lambda {
            values.push(("lambda a", a));
            values.push(("lambda b", b));
        }
        for (name, v) in values {
            if !(v > 0.0 && v.is_finite()) {
                return Err(McmcError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Initial random-walk standard deviations per block type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalScales {
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub delta: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            alpha1: 0.1,
            alpha2: 0.1,
            alpha3: 0.1,
            delta: 0.1,
            phi: 0.1,
            lambda: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub scales: ProposalScales,
    /// Iterations per adaptation window during burn-in.
    pub adapt_window: usize,
    /// Acceptance band targeted by the adaptation.
    pub target_low: f64,
    pub target_high: f64,
    pub seed: u64,
    pub chains: usize,
    /// Evaluate every proposal from scratch instead of incrementally.
    pub full_recompute: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 300_000,
            burn_in: 50_000,
            thin: 10,
            scales: ProposalScales::default(),
            adapt_window: 100,
            target_low: 0.20,
            target_high: 0.50,
            seed: 1,
            chains: 1,
            full_recompute: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        let err = |m: String| Err(McmcError::Config(m));
        if self.burn_in >= self.iterations {
            return err(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return err("thin must be at least 1".into());
        }
        if self.adapt_window == 0 {
            return err("adapt_window must be at least 1".into());
        }
        if self.chains == 0 {
            return err("chains must be at least 1".into());
        }
        if !(0.0 < self.target_low && self.target_low < self.target_high && self.target_high < 1.0)
        {
            return err(format!(
                "target band [{}, {}] is not inside (0, 1)",
                self.target_low, self.target_high
            ));
        }
        let s = self.scales;
        for v in [
            s.alpha, s.alpha1, s.alpha2, s.alpha3, s.delta, s.phi, s.lambda,
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("proposal scale {v} must be positive"));
            }
        }
        Ok(())
    }

    pub fn retained_rows(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Where a chain starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState<T> {
    /// Coefficients, delta and lambda drawn from their priors; phi starts
    /// at zero and sigma2 at the prior mean of tau inverted. `template`
    /// supplies the fixed pieces (epsilon, rho and alpha when not estimated).
    Prior {
        template: ModelParams<T>,
    },
    Supplied(ModelParams<T>),
}

/// Column order of the draws matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub include_alpha: bool,
    pub alpha1: usize,
    pub alpha2: usize,
    pub alpha3: usize,
    pub areas: usize,
}

impl ColumnLayout {
    pub fn new<T: Scalar>(pop: &Population<T>, include_alpha: bool) -> Self {
        Self {
            include_alpha,
            alpha1: pop.individual_covariate_dim(),
            alpha2: pop.area_covariate_dim(),
            alpha3: pop.time_covariate_dim(),
            areas: pop.n_areas(),
        }
    }

    /// Column names, 1-based vector indices: `alpha1[1]`, `phi[3]`.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.include_alpha {
            out.push("alpha".to_string());
        }
        for (name, n) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            out.extend((1..=n).map(|j| format!("{name}[{j}]")));
        }
        out.extend(["delta", "lambda", "sigma2"].map(String::from));
        out.extend((1..=self.areas).map(|k| format!("phi[{k}]")));
        out
    }

    pub fn len(&self) -> usize {
        self.include_alpha as usize + self.alpha1 + self.alpha2 + self.alpha3 + 3 + self.areas
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Recovers the layout from a header produced by [`ColumnLayout::names`].
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Option<Self> {
        let count = |prefix: &str| {
            names
                .iter()
                .filter(|n| n.as_ref().starts_with(prefix))
                .count()
        };
        let layout = Self {
            include_alpha: names.first().is_some_and(|n| n.as_ref() == "alpha"),
            alpha1: count("alpha1["),
            alpha2: count("alpha2["),
            alpha3: count("alpha3["),
            areas: count("phi["),
        };
        let ok = layout.names().len() == names.len()
            && layout
                .names()
                .iter()
                .zip(names)
                .all(|(a, b)| a == b.as_ref());
        ok.then_some(layout)
    }

    pub fn row<T: Scalar>(&self, theta: &ModelParams<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        if self.include_alpha {
            out.push(theta.alpha);
        }
        out.extend_from_slice(&theta.alpha1);
        out.extend_from_slice(&theta.alpha2);
        out.extend_from_slice(&theta.alpha3);
        out.extend([theta.delta, theta.lambda, theta.sigma2]);
        out.extend_from_slice(&theta.phi);
        out
    }

    /// Writes a draw into `theta`; components absent from the layout keep
    /// their values.
    pub fn apply<T: Scalar>(&self, row: &[T], theta: &mut ModelParams<T>) {
        assert_eq!(row.len(), self.len(), "draw width does not match layout");
        let mut it = row.iter().copied();
        if self.include_alpha {
            theta.alpha = it.next().unwrap();
        }
        theta.alpha1 = it.by_ref().take(self.alpha1).collect();
        theta.alpha2 = it.by_ref().take(self.alpha2).collect();
        theta.alpha3 = it.by_ref().take(self.alpha3).collect();
        theta.delta = it.next().unwrap();
        theta.lambda = it.next().unwrap();
        theta.sigma2 = it.next().unwrap();
        theta.phi = it.collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block: String,
    pub proposed: u64,
    pub accepted: u64,
    /// Acceptance over the retained phase.
    pub rate: f64,
    pub scale_after_burn_in: f64,
    pub scale_final: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput<T> {
    pub layout: ColumnLayout,
    /// Retained draws, row-major with `layout.len()` columns.
    pub draws: Vec<T>,
    pub log_posterior: Vec<T>,
    pub blocks: Vec<BlockStats>,
    pub chain: usize,
}

impl<T: Scalar> ChainOutput<T> {
    pub fn rows(&self) -> usize {
        self.draws.len() / self.layout.len()
    }

    pub fn row(&self, r: usize) -> &[T] {
        let w = self.layout.len();
        &self.draws[r * w..(r + 1) * w]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        let w = self.layout.len();
        self.draws.iter().skip(c).step_by(w).copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<T>> {
        let c = self.layout.names().iter().position(|n| n == name)?;
        Some(self.column(c))
    }
}

/// min(1, exp(delta)); NaN counts as rejection.
pub fn acceptance_probability<T: Scalar>(delta_log_posterior: T) -> T {
    if delta_log_posterior.is_nan() {
        T::zero()
    } else if delta_log_posterior >= T::zero() {
        T::one()
    } else {
        delta_log_posterior.exp()
    }
}

/// Log prior of everything except phi's LCAR term.
fn log_prior_fixed<T: Scalar>(
    theta: &ModelParams<T>,
    priors: &PriorSpec,
    include_alpha: bool,
) -> T {
    let mut lp = T::zero();
    if include_alpha {
        lp += priors.alpha.log_density(theta.alpha);
    }
    for (hn, v) in [
        (priors.alpha1, &theta.alpha1),
        (priors.alpha2, &theta.alpha2),
        (priors.alpha3, &theta.alpha3),
    ] {
        for &x in v {
            lp += hn.log_density(x);
        }
    }
    lp + priors.delta.log_density(theta.delta)
        + priors.lambda.log_density(theta.lambda)
        + log_prior_sigma2(theta.sigma2, priors)
}

/// Density of sigma2 implied by the Gamma prior on tau, including the
/// Jacobian |d tau / d sigma2| = sigma2^-2.
fn log_prior_sigma2<T: Scalar>(sigma2: T, priors: &PriorSpec) -> T {
    if !(sigma2 > T::zero()) {
        return T::neg_infinity();
    }
    priors.tau.log_density(sigma2.recip()) - T::lit(2.0) * sigma2.ln()
}

/// Sum of the log prior terms, LCAR included; -inf outside the support.
pub fn log_prior<T: Scalar>(
    theta: &ModelParams<T>,
    graph: &AreaGraph,
    priors: &PriorSpec,
    include_alpha: bool,
) -> T {
    let fixed = log_prior_fixed(theta, priors, include_alpha);
    if !fixed.is_finite() {
        return T::neg_infinity();
    }
    match log_det_precision(graph, theta.lambda) {
        Ok(ld) => fixed + log_density_with(&theta.phi, theta.lambda, theta.sigma2, graph, ld),
        Err(_) => T::neg_infinity(),
    }
}

/// Log-likelihood plus log prior. Out-of-support parameters and impossible
/// data give -inf; malformed inputs (dimensions, framework) are errors.
pub fn log_posterior<T: Scalar>(
    theta: &ModelParams<T>,
    history: &EpidemicHistory,
    pop: &Population<T>,
    priors: &PriorSpec,
    cfg: &ModelConfig,
) -> Result<T, LikelihoodError> {
    let lp = log_prior(theta, pop.graph(), priors, cfg.include_alpha);
    if !lp.is_finite() {
        return Ok(T::neg_infinity());
    }
    Ok(log_likelihood(history, pop, theta, cfg)? + lp)
}

/// Conjugate update: tau ~ Gamma(a + K/2, b + phi' L phi / 2), returns 1/tau.
pub fn gibbs_sigma2<T: Scalar, R: Rng + ?Sized>(
    phi: &[T],
    lambda: T,
    graph: &AreaGraph,
    prior: &GammaPrior,
    rng: &mut R,
) -> T {
    let k = T::from_usize_lossy(phi.len());
    let shape = T::lit(prior.shape) + k / T::lit(2.0);
    let rate = T::lit(prior.rate) + quadratic_form(phi, lambda, graph) / T::lit(2.0);
    T::gamma_rate(shape, rate, rng).recip()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Alpha,
    Alpha1(usize),
    Alpha2(usize),
    Alpha3(usize),
    Delta,
    Phi(usize),
    Lambda,
}

impl Block {
    fn component(self) -> Component {
        match self {
            Block::Alpha => Component::Alpha,
            Block::Alpha1(j) => Component::Alpha1(j),
            Block::Alpha2(j) => Component::Alpha2(j),
            Block::Alpha3(j) => Component::Alpha3(j),
            Block::Delta => Component::Delta,
            Block::Phi(k) => Component::Phi(k),
            Block::Lambda => Component::Lambda,
        }
    }

    fn name(self) -> String {
        match self {
            Block::Alpha => "alpha".into(),
            Block::Alpha1(j) => format!("alpha1[{}]", j + 1),
            Block::Alpha2(j) => format!("alpha2[{}]", j + 1),
            Block::Alpha3(j) => format!("alpha3[{}]", j + 1),
            Block::Delta => "delta".into(),
            Block::Phi(k) => format!("phi[{}]", k + 1),
            Block::Lambda => "lambda".into(),
        }
    }

    fn initial_scale(self, s: &ProposalScales) -> f64 {
        match self {
            Block::Alpha => s.alpha,
            Block::Alpha1(_) => s.alpha1,
            Block::Alpha2(_) => s.alpha2,
            Block::Alpha3(_) => s.alpha3,
            Block::Delta => s.delta,
            Block::Phi(_) => s.phi,
            Block::Lambda => s.lambda,
        }
    }

    fn get<T: Scalar>(self, theta: &ModelParams<T>) -> T {
        match self {
            Block::Alpha => theta.alpha,
            Block::Alpha1(j) => theta.alpha1[j],
            Block::Alpha2(j) => theta.alpha2[j],
            Block::Alpha3(j) => theta.alpha3[j],
            Block::Delta => theta.delta,
            Block::Phi(k) => theta.phi[k],
            Block::Lambda => theta.lambda,
        }
    }

    fn set<T: Scalar>(self, theta: &mut ModelParams<T>, v: T) {
        match self {
            Block::Alpha => theta.alpha = v,
            Block::Alpha1(j) => theta.alpha1[j] = v,
            Block::Alpha2(j) => theta.alpha2[j] = v,
            Block::Alpha3(j) => theta.alpha3[j] = v,
            Block::Delta => theta.delta = v,
            Block::Phi(k) => theta.phi[k] = v,
            Block::Lambda => theta.lambda = v,
        }
    }
}

fn sweep_order(layout: &ColumnLayout) -> Vec<Block> {
    let mut out = Vec::new();
    if layout.include_alpha {
        out.push(Block::Alpha);
    }
    out.extend((0..layout.alpha1).map(Block::Alpha1));
    out.extend((0..layout.alpha2).map(Block::Alpha2));
    out.extend((0..layout.alpha3).map(Block::Alpha3));
    out.push(Block::Delta);
    out.extend((0..layout.areas).map(Block::Phi));
    out.push(Block::Lambda);
    out
}

/// Sampler state for one chain.
pub struct ChainState<'a, T> {
    engine: LikelihoodEngine<'a, T>,
    graph: &'a AreaGraph,
    priors: PriorSpec,
    include_alpha: bool,
    full_recompute: bool,
    /// Prior terms other than the LCAR density, at the current state.
    fixed_prior: T,
    log_det: T,
}

impl<'a, T: Scalar> ChainState<'a, T> {
    pub fn new(
        pop: &'a Population<T>,
        history: &EpidemicHistory,
        theta: &ModelParams<T>,
        priors: &PriorSpec,
        cfg: &ModelConfig,
        full_recompute: bool,
    ) -> Result<Self, McmcError> {
        let fixed_prior = log_prior_fixed(theta, priors, cfg.include_alpha);
        if !fixed_prior.is_finite() {
            return Err(McmcError::NonFiniteInit {
                value: fixed_prior.as_f64(),
                detail: "initial parameters outside the prior support".into(),
            });
        }
        let log_det = log_det_precision(pop.graph(), theta.lambda)?;
        let engine = LikelihoodEngine::new(pop, history, theta, cfg)?;
        let state = Self {
            engine,
            graph: pop.graph(),
            priors: *priors,
            include_alpha: cfg.include_alpha,
            full_recompute,
            fixed_prior,
            log_det,
        };
        let lp = state.log_posterior();
        if !lp.is_finite() {
            let ll = state.engine.log_likelihood();
            let detail = if ll.is_finite() {
                "prior term is not finite".to_string()
            } else {
                format!("log-likelihood is {ll}; the data may be impossible under this model")
            };
            return Err(McmcError::NonFiniteInit {
                value: lp.as_f64(),
                detail,
            });
        }
        Ok(state)
    }

    pub fn theta(&self) -> &ModelParams<T> {
        self.engine.theta()
    }

    pub fn log_likelihood(&self) -> T {
        self.engine.log_likelihood()
    }

    fn lcar(&self, theta: &ModelParams<T>, log_det: T) -> T {
        log_density_with(&theta.phi, theta.lambda, theta.sigma2, self.graph, log_det)
    }

    pub fn log_posterior(&self) -> T {
        let theta = self.theta();
        self.engine.log_likelihood() + self.fixed_prior + self.lcar(theta, self.log_det)
    }

    /// One random-walk update of `block`; returns whether it was accepted.
    fn rwmh_step<R: Rng + ?Sized>(
        &mut self,
        block: Block,
        scale: T,
        rng: &mut R,
    ) -> Result<bool, McmcError> {
        let current = self.theta().clone();
        let mut proposed = current.clone();
        block.set(
            &mut proposed,
            block.get(&current) + scale * T::standard_normal(rng),
        );
        let u = T::open01(rng);

        let fixed = log_prior_fixed(&proposed, &self.priors, self.include_alpha);
        if !fixed.is_finite() {
            return Ok(false);
        }
        let log_det = if block == Block::Lambda {
            log_det_precision(self.graph, proposed.lambda)?
        } else {
            self.log_det
        };
        let proposal = if self.full_recompute {
            self.engine.propose_full(&proposed)?
        } else {
            self.engine.propose(&proposed, block.component())?
        };
        let delta = (proposal.log_likelihood() - self.engine.log_likelihood())
            + (fixed - self.fixed_prior)
            + (self.lcar(&proposed, log_det) - self.lcar(&current, self.log_det));
        if u.ln() < delta {
            self.engine.accept(proposal);
            self.fixed_prior = fixed;
            self.log_det = log_det;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn gibbs_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), McmcError> {
        let theta = self.theta();
        let sigma2 = gibbs_sigma2(&theta.phi, theta.lambda, self.graph, &self.priors.tau, rng);
        let mut next = theta.clone();
        next.sigma2 = sigma2;
        let proposal = if self.full_recompute {
            self.engine.propose_full(&next)?
        } else {
            self.engine.propose(&next, Component::Sigma2)?
        };
        self.engine.accept(proposal);
        self.fixed_prior = log_prior_fixed(self.theta(), &self.priors, self.include_alpha);
        Ok(())
    }
}

/// Resolves the starting parameters for `chain`, drawing from the stream
/// `mcmc/init-{chain}`.
pub fn initial_theta<T: Scalar>(
    init: &InitialState<T>,
    pop: &Population<T>,
    priors: &PriorSpec,
    include_alpha: bool,
    seed: u64,
    chain: usize,
) -> ModelParams<T> {
    match init {
        InitialState::Supplied(theta) => theta.clone(),
        InitialState::Prior { template } => {
            let mut rng = substream(seed, &format!("mcmc/init-{chain}"));
            let mut theta = template.clone();
            if include_alpha {
                theta.alpha = priors.alpha.sample(&mut rng);
            }
            theta.alpha1 = (0..pop.individual_covariate_dim())
                .map(|_| priors.alpha1.sample(&mut rng))
                .collect();
            theta.alpha2 = (0..pop.area_covariate_dim())
                .map(|_| priors.alpha2.sample(&mut rng))
                .collect();
            theta.alpha3 = (0..pop.time_covariate_dim())
                .map(|_| priors.alpha3.sample(&mut rng))
                .collect();
            theta.delta = priors.delta.sample(&mut rng);
            theta.lambda = priors.lambda.sample(&mut rng);
            theta.sigma2 = T::lit(priors.tau.rate / priors.tau.shape);
            theta.phi = vec![T::zero(); pop.n_areas()];
            theta
        }
    }
}

/// A draw of phi from its LCAR prior at the chain's lambda and sigma2; exposed
/// for callers that want random-effect starting values.
pub fn prior_phi<T: Scalar, R: Rng + ?Sized>(
    theta: &ModelParams<T>,
    graph: &AreaGraph,
    rng: &mut R,
) -> Result<Vec<T>, McmcError> {
    Ok(sample_prior(theta.lambda, theta.sigma2, graph, rng)?)
}

/// Runs chain number `chain` using the stream `mcmc/chain-{chain}`.
pub fn run_chain<T: Scalar>(
    history: &EpidemicHistory,
    pop: &Population<T>,
    priors: &PriorSpec,
    mcmc: &McmcConfig,
    model: &ModelConfig,
    init: &InitialState<T>,
    chain: usize,
) -> Result<ChainOutput<T>, McmcError> {
    mcmc.validate()?;
    priors.validate()?;
    let theta0 = initial_theta(init, pop, priors, model.include_alpha, mcmc.seed, chain);
    let layout = ColumnLayout::new(pop, model.include_alpha);
    let mut state = ChainState::new(pop, history, &theta0, priors, model, mcmc.full_recompute)?;
    let mut rng = substream(mcmc.seed, &format!("mcmc/chain-{chain}"));

    let blocks = sweep_order(&layout);
    let mut scales: Vec<f64> = blocks
        .iter()
        .map(|b| b.initial_scale(&mcmc.scales))
        .collect();
    let mut window = vec![0u64; blocks.len()];
    let mut proposed = vec![0u64; blocks.len()];
    let mut accepted = vec![0u64; blocks.len()];
    let mut scales_at_burn_in = scales.clone();

    let rows = mcmc.retained_rows();
    let mut draws = Vec::with_capacity(rows * layout.len());
    let mut trace = Vec::with_capacity(rows);

    for iter in 1..=mcmc.iterations {
        let burning = iter <= mcmc.burn_in;
        for (b, &block) in blocks.iter().enumerate() {
            let ok = state.rwmh_step(block, T::lit(scales[b]), &mut rng)?;
            if burning {
                window[b] += ok as u64;
            } else {
                proposed[b] += 1;
                accepted[b] += ok as u64;
            }
        }
        state.gibbs_step(&mut rng)?;

        if burning && iter % mcmc.adapt_window == 0 {
            for b in 0..blocks.len() {
                let rate = window[b] as f64 / mcmc.adapt_window as f64;
                if rate > mcmc.target_high {
                    scales[b] *= 1.1;
                } else if rate < mcmc.target_low {
                    scales[b] *= 0.9;
                }
                window[b] = 0;
            }
        }
        if iter == mcmc.burn_in {
            scales_at_burn_in = scales.clone();
        }
        if !burning && (iter - mcmc.burn_in) % mcmc.thin == 0 {
            draws.extend(layout.row(state.theta()));
            trace.push(state.log_posterior());
        }
    }

    let blocks = blocks
        .iter()
        .enumerate()
        .map(|(b, block)| BlockStats {
            block: block.name(),
            proposed: proposed[b],
            accepted: accepted[b],
            rate: if proposed[b] == 0 {
                0.0
            } else {
                accepted[b] as f64 / proposed[b] as f64
            },
            scale_after_burn_in: scales_at_burn_in[b],
            scale_final: scales[b],
        })
        .collect();
    Ok(ChainOutput {
        layout,
        draws,
        log_posterior: trace,
        blocks,
        chain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Sample quantile by linear interpolation between order statistics
/// (position (n - 1) p in the sorted sample).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and equal-tailed `prob` interval of one column.
pub fn summarize_column(name: &str, values: &[f64], prob: f64) -> ParamSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - prob) / 2.0;
    ParamSummary {
        parameter: name.to_string(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
    }
}

pub fn summarize<T: Scalar>(chain: &ChainOutput<T>, prob: f64) -> Vec<ParamSummary> {
    assert!(chain.rows() > 0, "cannot summarise an empty chain");
    chain
        .layout
        .names()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let col: Vec<f64> = chain.column(c).into_iter().map(T::as_f64).collect();
            summarize_column(name, &col, prob)
        })
        .collect()
}
