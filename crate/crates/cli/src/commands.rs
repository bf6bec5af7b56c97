//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gdilm::mcmc::{run_chain, summarize_column, InitialState};
use gdilm::postprocess::{distance_grid, kernel_curve, risk_map, RiskEstimate};
use gdilm::simulate::{simulate, Dependence, Scenario, SimConfig};
use gdilm::synthetic::GridGeography;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{InitName, RunConfig};
use crate::draws;
use crate::io::{self, DataPaths, HistorySpec};
use crate::manifest::Manifest;
use crate::recovery::{self, RecoverySpec};

#[derive(Debug, Parser)]
#[command(
    name = "gdilm",
    version,
    about = "Simulate and fit geographically-dependent individual-level epidemic models"
)]
pub struct Cli {
    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic study geography.
    Geography(GeographyArgs),
    /// Simulate epidemics from the [simulate] section of a configuration.
    Simulate(SimulateArgs),
    /// Fit the model to an observed epidemic by MCMC.
    Fit(FitArgs),
    /// Posterior mean and equal-tailed interval per parameter.
    Summarize(SummarizeArgs),
    /// Area-level posterior mean infectivity rate over time.
    Riskmap(RiskmapArgs),
    /// One-to-one infection probability against distance.
    Kernelcurve(KernelArgs),
    /// Check input files and write a machine-readable report.
    Validate(ValidateArgs),
    /// Simulate, fit and summarise a batch of replicates of a scenario.
    Recovery(RecoveryArgs),
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Individuals: id,x,y,area_id,cov_1..
    #[arg(long)]
    pub population: PathBuf,
    /// Area covariates: area_id,acov_1..
    #[arg(long)]
    pub areas: Option<PathBuf>,
    /// Time-varying area covariates: area_id,t,tcov_1..
    #[arg(long)]
    pub time_covariates: Option<PathBuf>,
    /// Undirected edge list: area_a,area_b
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self, epidemic: Option<&Path>) -> DataPaths {
        DataPaths {
            population: self.population.clone(),
            areas: self.areas.clone(),
            time_covariates: self.time_covariates.clone(),
            adjacency: self.adjacency.clone(),
            epidemic: epidemic.map(Path::to_path_buf),
        }
    }
}

#[derive(Debug, Args)]
pub struct GeographyArgs {
    #[arg(long, default_value_t = GridGeography::default().cols)]
    pub cols: usize,
    #[arg(long, default_value_t = GridGeography::default().rows)]
    pub rows: usize,
    #[arg(long, default_value_t = GridGeography::default().per_area)]
    pub per_area: usize,
    /// Area width in km.
    #[arg(long, default_value_t = GridGeography::default().width_km)]
    pub width: f64,
    /// Area height in km.
    #[arg(long, default_value_t = GridGeography::default().height_km)]
    pub height: f64,
    #[arg(long, default_value_t = GridGeography::default().seed)]
    pub seed: u64,
    /// Size of the suggested fixed initial-infective list.
    #[arg(long, default_value_t = 9)]
    pub initial: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl GeographyArgs {
    fn geography(&self) -> GridGeography {
        GridGeography {
            cols: self.cols,
            rows: self.rows,
            per_area: self.per_area,
            width_km: self.width,
            height_km: self.height,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Epidemic: id,infection_time,removal_time
    #[arg(long)]
    pub epidemic: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub draws: PathBuf,
    /// Credible interval probability.
    #[arg(long, default_value_t = 0.95)]
    pub prob: f64,
    /// Output CSV (default: summary.csv next to the draws).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RiskmapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epidemic: PathBuf,
    #[arg(long)]
    pub draws: PathBuf,
    /// Configuration used for the fit (model section).
    #[arg(long)]
    pub config: PathBuf,
    /// Times as `t1..t2` or a comma list.
    #[arg(long)]
    pub times: String,
    /// Rate at the posterior mean instead of the draw-wise average.
    #[arg(long)]
    pub plug_in: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub draws: PathBuf,
    /// Configuration used for the fit; supplies fixed alpha and the seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// External id of the area whose median individual is profiled.
    #[arg(long)]
    pub area: i64,
    /// Largest distance in km.
    #[arg(long)]
    pub dmax: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Include environmental covariates at this time step.
    #[arg(long)]
    pub time: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Mean curve output (default: `<out stem>_mean.csv`).
    #[arg(long)]
    pub mean_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epidemic: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    S1,
    S2,
    S3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DependenceArg {
    Weak,
    Moderate,
    Strong,
}

#[derive(Debug, Args)]
pub struct RecoveryArgs {
    #[arg(long, value_enum, default_value = "s1")]
    pub scenario: ScenarioArg,
    #[arg(long, value_enum, default_value = "strong")]
    pub dependence: DependenceArg,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value_t = 50_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Sparks term of the fitted model (default 0 for S1, 1e-4 otherwise).
    #[arg(long)]
    pub fit_epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub prob: f64,
    /// Study population; the synthetic default geography when absent.
    #[arg(long, requires = "adjacency")]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Initial infective ids for S1/S2, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub initial: Option<Vec<u64>>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("starting worker threads")?;
    pool.install(|| match cli.command {
        Command::Geography(a) => geography(&a),
        Command::Simulate(a) => simulate_cmd(&a),
        Command::Fit(a) => fit(&a),
        Command::Summarize(a) => summarize(&a),
        Command::Riskmap(a) => riskmap(&a),
        Command::Kernelcurve(a) => kernelcurve(&a),
        Command::Validate(a) => validate(&a),
        Command::Recovery(a) => recovery_cmd(&a),
    })
}

fn history_spec(cfg: &RunConfig) -> Result<HistorySpec> {
    Ok(HistorySpec {
        framework: cfg.model.framework()?,
        horizon: cfg.model.horizon,
        rho: cfg.model.rho,
    })
}

fn geography(a: &GeographyArgs) -> Result<()> {
    let geo = a.geography();
    let pop: gdilm::Pop = geo.build()?;
    let ids: Vec<i64> = (1..=geo.n_areas() as i64).collect();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::write_individuals(&a.out.join("individuals.csv"), &pop, &ids)?;
    io::write_adjacency(&a.out.join("adjacency.csv"), pop.graph(), &ids)?;
    let mut w = io::csv_writer(&a.out.join("areas.csv"))?;
    w.write_record(["area_id"])?;
    for id in &ids {
        w.write_record([id.to_string()])?;
    }
    w.flush()?;
    let mut m = Manifest::new("geography", geo.seed);
    m.extra = json!({
        "cols": geo.cols, "rows": geo.rows, "per_area": geo.per_area,
        "width_km": geo.width_km, "height_km": geo.height_km,
        "initial_ids": geo.default_initial_ids(a.initial),
    });
    m.outputs = vec![
        "individuals.csv".into(),
        "adjacency.csv".into(),
        "areas.csv".into(),
    ];
    m.write(&a.out)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let paths = a.data.paths(None);
    let data = io::load_valid(&paths, None)?;
    let pop = &data.pop;
    let sc = &cfg.simulate;
    let params = sc.params.params(pop, &cfg.model)?;
    let sim = SimConfig {
        params: params.clone(),
        phi_source: sc.phi_source,
        model: cfg.model.model_config()?,
        horizon: cfg.model.horizon,
        initial: sc.initial.clone(),
        replicates: sc.replicates,
        seed: cfg.seed,
    };
    let reps = simulate(pop, &sim)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut outputs = Vec::new();
    for r in &reps {
        let name = format!("epidemic_{:03}.csv", r.index);
        io::write_epidemic(&a.out.join(&name), pop, &r.history)?;
        outputs.push(name);
    }
    let mut w = io::csv_writer(&a.out.join("phi.csv"))?;
    w.write_record(["replicate", "area_id", "phi"])?;
    for r in &reps {
        for (k, phi) in r.phi.iter().enumerate() {
            w.write_record([
                r.index.to_string(),
                data.area_ids[k].to_string(),
                phi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    outputs.push("phi.csv".into());

    let mut m = Manifest::with_config("simulate", &cfg, &a.config, &paths)?;
    m.extra = json!({
        "parameters": params,
        "replicates": reps.iter().map(|r| json!({
            "replicate": r.index,
            "attack_rate": r.attack_rate,
            "initial_ids": r.initial.iter().map(|&i| pop.individual(i).id).collect::<Vec<_>>(),
            "phi": r.phi,
        })).collect::<Vec<_>>(),
    });
    m.outputs = outputs;
    m.write(&a.out)?;
    log::info!("wrote {} replicate(s) to {}", reps.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ChainAcceptance<'a> {
    chain: usize,
    blocks: &'a [gdilm::mcmc::BlockStats],
}

fn fit(a: &FitArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let paths = a.data.paths(Some(&a.epidemic));
    let data = io::load_valid(&paths, Some(history_spec(&cfg)?))?;
    let pop = &data.pop;
    let history = data
        .history
        .as_ref()
        .context("epidemic file produced no history")?;
    let model = cfg.model.model_config()?;
    let priors = cfg.priors.spec();
    let mcmc = cfg.mcmc.mcmc_config(cfg.seed);
    let init = match cfg.mcmc.init {
        InitName::Prior => InitialState::Prior {
            template: cfg.model.template(pop),
        },
        InitName::Supplied => {
            let start = cfg.mcmc.start.as_ref().context("mcmc.start missing")?;
            InitialState::Supplied(start.params(pop, &cfg.model)?)
        }
    };
    log::info!(
        "fitting {} chain(s) of {} iterations to {} individuals in {} areas",
        mcmc.chains,
        mcmc.iterations,
        pop.len(),
        pop.n_areas()
    );
    let chains = (0..mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(history, pop, &priors, &mcmc, &model, &init, c))
        .collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    draws::write(&a.out.join("draws.csv"), &chains, mcmc.burn_in, mcmc.thin)?;
    let acc: Vec<ChainAcceptance> = chains
        .iter()
        .map(|c| ChainAcceptance {
            chain: c.chain,
            blocks: &c.blocks,
        })
        .collect();
    io::write_json(&a.out.join("acceptance.json"), &acc)?;
    let mut m = Manifest::with_config("fit", &cfg, &a.config, &paths)?;
    m.extra = json!({
        "retained_rows_per_chain": mcmc.retained_rows(),
        "columns": chains[0].layout.names(),
    });
    m.outputs = vec!["draws.csv".into(), "acceptance.json".into()];
    m.write(&a.out)?;
    for c in &chains {
        for b in &c.blocks {
            log::debug!(
                "chain {} block {}: acceptance {:.3}",
                c.chain,
                b.block,
                b.rate
            );
        }
    }
    Ok(())
}

fn summarize(a: &SummarizeArgs) -> Result<()> {
    if !(a.prob > 0.0 && a.prob < 1.0) {
        bail!("--prob must lie in (0, 1)");
    }
    let t = draws::read(&a.draws)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.draws.with_file_name("summary.csv"));
    let mut w = io::csv_writer(&out)?;
    w.write_record(["parameter", "mean", "lower", "upper"])?;
    for (c, name) in t.names.iter().enumerate() {
        let s = summarize_column(name, &t.column(c), a.prob);
        w.write_record([
            s.parameter,
            s.mean.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `3..7` or `1,4,9`.
pub fn parse_times(s: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty time range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("bad time {p:?}"))
        })
        .collect()
}

fn riskmap(a: &RiskmapArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let paths = a.data.paths(Some(&a.epidemic));
    let data = io::load_valid(&paths, Some(history_spec(&cfg)?))?;
    let history = data
        .history
        .as_ref()
        .context("epidemic file produced no history")?;
    let table = draws::read(&a.draws)?;
    table.check_against(&data.pop)?;
    let draws = table.params(&cfg.model.template(&data.pop));
    let estimate = if a.plug_in {
        RiskEstimate::PlugIn
    } else {
        RiskEstimate::DrawAverage
    };
    let times = parse_times(&a.times)?;
    let map = risk_map(
        &draws,
        history,
        &data.pop,
        &cfg.model.model_config()?,
        &times,
        estimate,
    )?;
    let mut w = io::csv_writer(&a.out)?;
    w.write_record(["area_id", "t", "mean_rate"])?;
    for c in &map.cells {
        w.write_record([
            data.area_ids[c.area].to_string(),
            c.t.to_string(),
            c.mean_rate.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn kernelcurve(a: &KernelArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let data = io::load_valid(&a.data.paths(None), None)?;
    let k = data
        .area_index(a.area)
        .with_context(|| format!("area {} is not in the data", a.area))?;
    let table = draws::read(&a.draws)?;
    table.check_against(&data.pop)?;
    let draws = table.params(&cfg.model.template(&data.pop));
    if !(a.dmax > 0.0) || a.points == 0 {
        bail!("--dmax must be positive and --points at least 1");
    }
    let grid = distance_grid(a.dmax, a.points);
    let curve = kernel_curve(&draws, &data.pop, k, &grid, a.samples, cfg.seed, a.time)?;
    let mut w = io::csv_writer(&a.out)?;
    w.write_record(["d", "draw_index", "probability"])?;
    for (idx, c) in curve.draw_indices.iter().zip(&curve.curves) {
        for (d, p) in grid.iter().zip(c) {
            w.write_record([d.to_string(), idx.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    let mean_out = a.mean_out.clone().unwrap_or_else(|| {
        let stem = a
            .out
            .file_stem()
            .map_or("kernel".into(), |s| s.to_string_lossy().into_owned());
        a.out.with_file_name(format!("{stem}_mean.csv"))
    });
    let mut w = io::csv_writer(&mean_out)?;
    w.write_record(["d", "probability"])?;
    for (d, p) in grid.iter().zip(&curve.mean) {
        w.write_record([d.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let cfg = a.config.as_ref().map(|p| RunConfig::load(p)).transpose()?;
    let spec = cfg.as_ref().map(history_spec).transpose()?;
    let paths = a.data.paths(a.epidemic.as_deref());
    let (mut report, data) = io::load(&paths, spec)?;
    if let (Some(cfg), Some(data)) = (&cfg, &data) {
        // the configuration must agree with the data dimensions
        let mut check = |what: &str, r: Result<gdilm::Params>| {
            if let Err(e) = r {
                report.violations.push(io::Finding {
                    file: a.config.as_ref().unwrap().display().to_string(),
                    line: None,
                    message: format!("{what}: {e:#}"),
                });
            }
        };
        check(
            "simulate.params",
            cfg.simulate.params.params(&data.pop, &cfg.model),
        );
        if let Some(start) = &cfg.mcmc.start {
            check("mcmc.start", start.params(&data.pop, &cfg.model));
        }
        report.ok = report.violations.is_empty();
    }
    match &a.out {
        Some(p) => io::write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if !report.ok {
        return Err(io::ValidationFailed(report).into());
    }
    Ok(())
}

fn recovery_cmd(a: &RecoveryArgs) -> Result<()> {
    let spec = RecoverySpec {
        scenario: match a.scenario {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S2 => Scenario::S2,
            ScenarioArg::S3 => Scenario::S3,
        },
        dependence: match a.dependence {
            DependenceArg::Weak => Dependence::Weak,
            DependenceArg::Moderate => Dependence::Moderate,
            DependenceArg::Strong => Dependence::Strong,
        },
        replicates: a.replicates,
        iterations: a.iterations,
        burn_in: a.burn_in,
        thin: a.thin,
        seed: a.seed,
        fit_epsilon: a.fit_epsilon,
        prob: a.prob,
    };
    let (pop, ids, inputs) = match &a.population {
        Some(p) => {
            let paths = DataPaths {
                population: p.clone(),
                adjacency: a.adjacency.clone(),
                ..DataPaths::default()
            };
            let data = io::load_valid(&paths, None)?;
            (data.pop, a.initial.clone(), Some(paths))
        }
        None => {
            let geo = GridGeography::default();
            let ids = a
                .initial
                .clone()
                .unwrap_or_else(|| geo.default_initial_ids(9));
            (geo.build()?, Some(ids), None)
        }
    };
    let report = recovery::run(&pop, ids, &spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    recovery::write(&a.out, &report)?;
    let mut m = Manifest::new("recovery", spec.seed);
    if let Some(paths) = &inputs {
        m.add_inputs(paths)?;
    }
    m.extra = json!({
        "scenario": report.scenario,
        "dependence": report.dependence,
        "replicates": spec.replicates,
        "iterations": spec.iterations,
        "burn_in": spec.burn_in,
        "thin": spec.thin,
        "fit_epsilon": report.fit_epsilon,
        "prob": spec.prob,
        "coverage": report.coverage,
    });
    m.outputs = vec!["coverage.csv".into(), "replicates.csv".into()];
    m.write(&a.out)?;
    for row in &report.coverage {
        log::info!(
            "{}: truth {} covered {}/{} (mean below truth in {})",
            row.parameter,
            row.truth,
            row.covered,
            row.replicates,
            row.mean_below_truth
        );
    }
    Ok(())
}
