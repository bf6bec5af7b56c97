//! The draws table written by `fit` and read back by the post-processing
//! commands. Values use the shortest decimal form that round-trips, so a
//! table read back reproduces the sampler's numbers exactly.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gdilm::mcmc::{ChainOutput, ColumnLayout};
use gdilm::{Params, Pop};

const LEAD: [&str; 3] = ["chain", "iteration", "log_posterior"];

#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub names: Vec<String>,
    pub layout: ColumnLayout,
    pub chain: Vec<usize>,
    pub iteration: Vec<usize>,
    pub log_posterior: Vec<f64>,
    /// Row-major, `names.len()` values per row.
    pub values: Vec<f64>,
}

impl DrawTable {
    pub fn rows(&self) -> usize {
        self.chain.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.names.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.row(r)[c]).collect()
    }

    /// Every row as full parameters, with the unsampled pieces taken from
    /// `template`.
    pub fn params(&self, template: &Params) -> Vec<Params> {
        (0..self.rows())
            .map(|r| {
                let mut t = template.clone();
                self.layout.apply(self.row(r), &mut t);
                t
            })
            .collect()
    }

    /// Checks that the columns fit the population.
    pub fn check_against(&self, pop: &Pop) -> Result<()> {
        let want = ColumnLayout::new(pop, self.layout.include_alpha);
        if want != self.layout {
            bail!(
                "draw columns {:?} do not match the data (expected {:?})",
                self.layout,
                want
            );
        }
        Ok(())
    }
}

/// Iteration number of retained row `r` of a chain.
pub fn iteration_of(row: usize, burn_in: usize, thin: usize) -> usize {
    burn_in + (row + 1) * thin
}

pub fn write(path: &Path, chains: &[ChainOutput<f64>], burn_in: usize, thin: usize) -> Result<()> {
    let first = chains.first().context("no chains to write")?;
    let mut w = crate::io::csv_writer(path)?;
    let mut header: Vec<String> = LEAD.iter().map(|s| s.to_string()).collect();
    header.extend(first.layout.names());
    w.write_record(&header)?;
    for out in chains {
        for r in 0..out.rows() {
            let mut rec = vec![
                out.chain.to_string(),
                iteration_of(r, burn_in, thin).to_string(),
                out.log_posterior[r].to_string(),
            ];
            rec.extend(out.row(r).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<DrawTable> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < LEAD.len() || header[..3] != LEAD {
        bail!(
            "{}: header must start with {}",
            path.display(),
            LEAD.join(",")
        );
    }
    let names = header[3..].to_vec();
    let layout = ColumnLayout::from_names(&names)
        .with_context(|| format!("{}: unrecognised parameter columns", path.display()))?;
    let mut t = DrawTable {
        names,
        layout,
        chain: Vec::new(),
        iteration: Vec::new(),
        log_posterior: Vec::new(),
        values: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| format!("{}:{line}: cannot parse {what}", path.display());
        t.chain.push(rec[0].parse().with_context(|| bad("chain"))?);
        t.iteration
            .push(rec[1].parse().with_context(|| bad("iteration"))?);
        t.log_posterior
            .push(rec[2].parse().with_context(|| bad("log_posterior"))?);
        for (c, v) in rec.iter().skip(3).enumerate() {
            t.values.push(v.parse().with_context(|| bad(&t.names[c]))?);
        }
    }
    if t.rows() == 0 {
        bail!("{}: no draws", path.display());
    }
    Ok(t)
}
