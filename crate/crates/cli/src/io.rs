//! CSV ingestion with line-level validation, and the writers for every
//! output table.
//!
//! Area ids in the files are arbitrary integers. Internally areas are
//! indexed `0..K` in ascending id order, and outputs translate back.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gdilm::history::{EpidemicHistory, Framework};
use gdilm::population::{Area, AreaGraph, Individual, Population};
use gdilm::Pop;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub file: String,
    /// 1-based line in the file; absent for whole-file findings.
    pub line: Option<u64>,
    pub message: String,
}

/// Problems that block a run, plus notes about silent repairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub ok: bool,
    pub violations: Vec<Finding>,
    pub notes: Vec<Finding>,
}

impl Report {
    fn violation(&mut self, file: &Path, line: Option<u64>, message: impl Into<String>) {
        self.violations.push(Finding {
            file: file.display().to_string(),
            line,
            message: message.into(),
        });
    }

    fn note(&mut self, file: &Path, line: Option<u64>, message: impl Into<String>) {
        self.notes.push(Finding {
            file: file.display().to_string(),
            line,
            message: message.into(),
        });
    }

    fn finish(&mut self) {
        self.ok = self.violations.is_empty();
    }
}

/// Raised when validation finds violations; carries the full report.
#[derive(Debug)]
pub struct ValidationFailed(pub Report);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} input violation(s)", self.0.violations.len())?;
        for v in self.0.violations.iter().take(20) {
            match v.line {
                Some(l) => writeln!(f, "  {}:{}: {}", v.file, l, v.message)?,
                None => writeln!(f, "  {}: {}", v.file, v.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ValidationFailed {}

#[derive(Debug, Clone, Default)]
pub struct DataPaths {
    pub population: PathBuf,
    pub areas: Option<PathBuf>,
    pub time_covariates: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub epidemic: Option<PathBuf>,
}

impl DataPaths {
    pub fn files(&self) -> Vec<&Path> {
        let mut v = vec![self.population.as_path()];
        v.extend(self.areas.as_deref());
        v.extend(self.time_covariates.as_deref());
        v.extend(self.adjacency.as_deref());
        v.extend(self.epidemic.as_deref());
        v
    }
}

/// What the epidemic reader needs from the configuration.
#[derive(Debug, Clone, Copy)]
pub struct HistorySpec {
    pub framework: Framework,
    pub horizon: usize,
    /// Covariate lag; time covariates must cover `1 - rho ..= horizon - rho`.
    pub rho: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub pop: Pop,
    /// External id of each internal area index.
    pub area_ids: Vec<i64>,
    pub history: Option<EpidemicHistory>,
    pub report: Report,
}

impl Dataset {
    pub fn area_index(&self, id: i64) -> Option<usize> {
        self.area_ids.binary_search(&id).ok()
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

struct Row {
    line: u64,
    fields: Vec<String>,
}

/// Header plus every record; malformed records become violations.
fn read_table(path: &Path, report: &mut Report) -> Result<(Vec<String>, Vec<Row>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        match rec {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line());
                if r.len() != header.len() {
                    report.violation(
                        path,
                        Some(line),
                        format!("{} fields, header has {}", r.len(), header.len()),
                    );
                    continue;
                }
                rows.push(Row {
                    line,
                    fields: r.iter().map(str::to_string).collect(),
                });
            }
            Err(e) if e.is_io_error() => {
                return Err(e).with_context(|| format!("reading {}", path.display()))
            }
            Err(e) => {
                let line = e.position().map(|p| p.line());
                report.violation(path, line, e.to_string());
            }
        }
    }
    Ok((header, rows))
}

fn expect_prefix(path: &Path, header: &[String], want: &[&str], report: &mut Report) -> bool {
    let ok = header.len() >= want.len() && header.iter().zip(want).all(|(h, w)| h == w);
    if !ok {
        report.violation(
            path,
            Some(1),
            format!("header must start with {}", want.join(",")),
        );
    }
    ok
}

fn parse<T: std::str::FromStr>(
    path: &Path,
    row: &Row,
    col: usize,
    name: &str,
    report: &mut Report,
) -> Option<T> {
    let raw = &row.fields[col];
    match raw.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            report.violation(
                path,
                Some(row.line),
                format!("{name}: cannot parse {raw:?}"),
            );
            None
        }
    }
}

fn parse_finite(
    path: &Path,
    row: &Row,
    col: usize,
    name: &str,
    report: &mut Report,
) -> Option<f64> {
    let v: f64 = parse(path, row, col, name, report)?;
    if !v.is_finite() {
        report.violation(path, Some(row.line), format!("{name} is not finite"));
        return None;
    }
    Some(v)
}

struct RawIndividual {
    line: u64,
    id: u64,
    x: f64,
    y: f64,
    area: i64,
    covariates: Vec<f64>,
}

fn read_individuals(path: &Path, report: &mut Report) -> Result<Vec<RawIndividual>> {
    let (header, rows) = read_table(path, report)?;
    if !expect_prefix(path, &header, &["id", "x", "y", "area_id"], report) {
        return Ok(Vec::new());
    }
    let ncov = header.len() - 4;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen = HashMap::new();
    for row in &rows {
        let id = parse::<u64>(path, row, 0, "id", report);
        let x = parse_finite(path, row, 1, "x", report);
        let y = parse_finite(path, row, 2, "y", report);
        let area = parse::<i64>(path, row, 3, "area_id", report);
        let cov: Option<Vec<f64>> = (0..ncov)
            .map(|c| parse_finite(path, row, 4 + c, &header[4 + c], report))
            .collect();
        let (Some(id), Some(x), Some(y), Some(area), Some(covariates)) = (id, x, y, area, cov)
        else {
            continue;
        };
        if let Some(first) = seen.insert(id, row.line) {
            report.violation(
                path,
                Some(row.line),
                format!("duplicate id {id} (first on line {first})"),
            );
            continue;
        }
        out.push(RawIndividual {
            line: row.line,
            id,
            x,
            y,
            area,
            covariates,
        });
    }
    if out.is_empty() && report.violations.is_empty() {
        report.violation(path, None, "no individuals");
    }
    Ok(out)
}

fn read_areas(path: &Path, report: &mut Report) -> Result<BTreeMap<i64, Vec<f64>>> {
    let (header, rows) = read_table(path, report)?;
    let mut out = BTreeMap::new();
    if !expect_prefix(path, &header, &["area_id"], report) {
        return Ok(out);
    }
    for row in &rows {
        let id = parse::<i64>(path, row, 0, "area_id", report);
        let cov: Option<Vec<f64>> = (1..header.len())
            .map(|c| parse_finite(path, row, c, &header[c], report))
            .collect();
        if let (Some(id), Some(cov)) = (id, cov) {
            if out.insert(id, cov).is_some() {
                report.violation(path, Some(row.line), format!("duplicate area_id {id}"));
            }
        }
    }
    Ok(out)
}

fn read_adjacency(path: &Path, report: &mut Report) -> Result<Vec<(u64, i64, i64)>> {
    let (header, rows) = read_table(path, report)?;
    if !expect_prefix(path, &header, &["area_a", "area_b"], report) {
        return Ok(Vec::new());
    }
    if header.len() != 2 {
        report.violation(path, Some(1), "adjacency has exactly two columns");
    }
    Ok(rows
        .iter()
        .filter_map(|row| {
            let a = parse::<i64>(path, row, 0, "area_a", report)?;
            let b = parse::<i64>(path, row, 1, "area_b", report)?;
            Some((row.line, a, b))
        })
        .collect())
}

type TimeRows = BTreeMap<i64, BTreeMap<isize, (u64, Vec<f64>)>>;

fn read_time_covariates(path: &Path, report: &mut Report) -> Result<(usize, TimeRows)> {
    let (header, rows) = read_table(path, report)?;
    let mut out: TimeRows = BTreeMap::new();
    if !expect_prefix(path, &header, &["area_id", "t"], report) {
        return Ok((0, out));
    }
    for row in &rows {
        let id = parse::<i64>(path, row, 0, "area_id", report);
        let t = parse::<isize>(path, row, 1, "t", report);
        let cov: Option<Vec<f64>> = (2..header.len())
            .map(|c| parse_finite(path, row, c, &header[c], report))
            .collect();
        if let (Some(id), Some(t), Some(cov)) = (id, t, cov) {
            if let Some((first, _)) = out.entry(id).or_default().insert(t, (row.line, cov)) {
                report.violation(
                    path,
                    Some(row.line),
                    format!("area {id} time {t} repeated (first on line {first})"),
                );
            }
        }
    }
    Ok((header.len() - 2, out))
}

fn read_epidemic(
    path: &Path,
    individuals: &[Individual<f64>],
    spec: HistorySpec,
    report: &mut Report,
) -> Result<Option<EpidemicHistory>> {
    let violations_before = report.violations.len();
    let (header, rows) = read_table(path, report)?;
    let want = ["id", "infection_time", "removal_time"];
    if !expect_prefix(path, &header, &want, report) {
        return Ok(None);
    }
    if header.len() != 3 {
        report.violation(path, Some(1), "epidemic file has exactly three columns");
    }
    let index: HashMap<u64, usize> = individuals
        .iter()
        .enumerate()
        .map(|(i, ind)| (ind.id, i))
        .collect();
    let n = individuals.len();
    let mut infection = vec![None; n];
    let mut removal = vec![None; n];
    let mut seen: HashMap<usize, u64> = HashMap::new();
    let mut derived = 0usize;
    let horizon = spec.horizon;
    for row in &rows {
        let Some(id) = parse::<u64>(path, row, 0, "id", report) else {
            continue;
        };
        let Some(&i) = index.get(&id) else {
            report.violation(
                path,
                Some(row.line),
                format!("id {id} is not in the population"),
            );
            continue;
        };
        if let Some(first) = seen.insert(i, row.line) {
            report.violation(
                path,
                Some(row.line),
                format!("id {id} repeated (first on line {first})"),
            );
            continue;
        }
        let opt = |col: usize, name: &str, report: &mut Report| -> Result<Option<usize>, ()> {
            if row.fields[col].is_empty() {
                Ok(None)
            } else {
                parse::<usize>(path, row, col, name, report)
                    .map(Some)
                    .ok_or(())
            }
        };
        let (Ok(inf), Ok(rem)) = (
            opt(1, "infection_time", report),
            opt(2, "removal_time", report),
        ) else {
            continue;
        };
        let line = Some(row.line);
        match (inf, rem, spec.framework) {
            (None, Some(_), _) => report.violation(
                path,
                line,
                format!("id {id}: removal time without infection time"),
            ),
            (Some(t), _, _) if t == 0 || t > horizon => report.violation(
                path,
                line,
                format!("id {id}: infection time {t} outside 1..={horizon}"),
            ),
            (Some(_), Some(_), Framework::Si) => report.violation(
                path,
                line,
                format!("id {id}: removal time given under the SI framework"),
            ),
            (Some(t), Some(r), _) if r <= t => report.violation(
                path,
                line,
                format!("id {id}: removal time {r} is not after infection time {t}"),
            ),
            (Some(t), Some(r), Framework::Sir { gamma }) if r != t + gamma => report.violation(
                path,
                line,
                format!(
                    "id {id}: removal time {r} differs from infection time + gamma = {}",
                    t + gamma
                ),
            ),
            (Some(t), None, Framework::Sir { gamma }) => {
                infection[i] = Some(t);
                removal[i] = Some(t + gamma);
                derived += 1;
            }
            (inf, rem, _) => {
                infection[i] = inf;
                removal[i] = rem;
            }
        }
    }
    let missing = n - seen.len();
    if missing > 0 {
        report.note(
            path,
            None,
            format!("{missing} individual(s) absent from the file are taken as never infected"),
        );
    }
    if derived > 0 {
        report.note(
            path,
            None,
            format!("{derived} blank removal time(s) derived as infection time + gamma"),
        );
    }
    if !infection.contains(&Some(1)) {
        report.note(path, None, "no individual is infectious at t = 1");
    }
    if report.violations.len() > violations_before {
        return Ok(None);
    }
    match EpidemicHistory::new(horizon, infection, removal) {
        Ok(h) => Ok(Some(h)),
        Err(e) => {
            report.violation(path, None, e.to_string());
            Ok(None)
        }
    }
}

/// Reads and cross-checks every input file. File-level I/O failures are
/// errors; content problems are collected in the returned report, in which
/// case the population may be absent.
pub fn load(paths: &DataPaths, spec: Option<HistorySpec>) -> Result<(Report, Option<Dataset>)> {
    let mut report = Report::default();
    let pop_path = paths.population.as_path();
    let raw = read_individuals(pop_path, &mut report)?;

    let area_table = match &paths.areas {
        Some(p) => Some((p.as_path(), read_areas(p, &mut report)?)),
        None => None,
    };
    let edges = match &paths.adjacency {
        Some(p) => read_adjacency(p, &mut report)?,
        None => {
            report.note(pop_path, None, "no adjacency file: every area is an island");
            Vec::new()
        }
    };
    let area_ids: Vec<i64> = match &area_table {
        Some((_, t)) => t.keys().copied().collect(),
        None => {
            let mut s: BTreeSet<i64> = raw.iter().map(|r| r.area).collect();
            s.extend(edges.iter().flat_map(|&(_, a, b)| [a, b]));
            s.into_iter().collect()
        }
    };
    let lookup = |id: i64| area_ids.binary_search(&id).ok();

    let mut individuals = Vec::with_capacity(raw.len());
    for r in &raw {
        match lookup(r.area) {
            Some(k) => individuals.push(Individual {
                id: r.id,
                x: r.x,
                y: r.y,
                area: k,
                covariates: r.covariates.clone(),
            }),
            None => report.violation(
                pop_path,
                Some(r.line),
                format!("area_id {} is not in the areas file", r.area),
            ),
        }
    }
    let mut member_count = vec![0usize; area_ids.len()];
    for ind in &individuals {
        member_count[ind.area] += 1;
    }
    if let Some((p, _)) = &area_table {
        for (k, &c) in member_count.iter().enumerate() {
            if c == 0 {
                report.note(p, None, format!("area {} has no individuals", area_ids[k]));
            }
        }
    }

    let mut canonical = BTreeSet::new();
    let mut directed = BTreeSet::new();
    if let Some(adj) = &paths.adjacency {
        let mut duplicates = Vec::new();
        for &(line, a, b) in &edges {
            let (Some(ka), Some(kb)) = (lookup(a), lookup(b)) else {
                report.violation(
                    adj,
                    Some(line),
                    format!("edge ({a},{b}) references an unknown area"),
                );
                continue;
            };
            if ka == kb {
                report.violation(
                    adj,
                    Some(line),
                    format!("area {a} listed as its own neighbour"),
                );
                continue;
            }
            if !directed.insert((ka, kb)) {
                duplicates.push(line);
            }
            canonical.insert((ka.min(kb), ka.max(kb)));
        }
        if !duplicates.is_empty() {
            report.note(
                adj,
                None,
                format!(
                    "{} duplicate edge(s) ignored (lines {:?})",
                    duplicates.len(),
                    duplicates
                ),
            );
        }
        let one_way = canonical
            .iter()
            .filter(|&&(a, b)| !(directed.contains(&(a, b)) && directed.contains(&(b, a))))
            .count();
        if one_way > 0 {
            report.note(
                adj,
                None,
                format!("{one_way} edge(s) listed in one direction only were symmetrised"),
            );
        }
    }

    let mut areas: Vec<Area<f64>> = area_ids
        .iter()
        .map(|id| Area {
            covariates: area_table
                .as_ref()
                .map(|(_, t)| t[id].clone())
                .unwrap_or_default(),
            ..Area::default()
        })
        .collect();
    if let Some((p, t)) = &area_table {
        if let Some(dim) = t.values().next().map(Vec::len) {
            if t.values().any(|c| c.len() != dim) {
                report.violation(p, None, "areas carry different numbers of covariates");
            }
        }
    }

    if let Some(tp) = &paths.time_covariates {
        let (dim, rows) = read_time_covariates(tp, &mut report)?;
        for (&id, by_t) in &rows {
            let Some(k) = lookup(id) else {
                let line = by_t.values().next().map(|(l, _)| *l);
                report.violation(tp, line, format!("area_id {id} is not a known area"));
                continue;
            };
            let start = *by_t.keys().next().expect("non-empty");
            let mut expected = start;
            for (&t, (line, _)) in by_t {
                if t != expected {
                    report.violation(
                        tp,
                        Some(*line),
                        format!("area {id}: times jump from {} to {t}", expected - 1),
                    );
                    break;
                }
                expected += 1;
            }
            areas[k].time_start = start;
            areas[k].time_covariates = by_t.values().map(|(_, v)| v.clone()).collect();
        }
        if dim > 0 {
            if let Some(spec) = spec {
                let lo = 1 - spec.rho as isize;
                let hi = spec.horizon as isize - spec.rho as isize;
                for (k, area) in areas.iter().enumerate() {
                    let start = area.time_start;
                    let end = start + area.time_covariates.len() as isize - 1;
                    if area.time_covariates.is_empty() || start > lo || end < hi {
                        report.violation(
                            tp,
                            None,
                            format!(
                                "area {} needs time covariates for t = {lo}..={hi}",
                                area_ids[k]
                            ),
                        );
                    }
                }
            }
        }
    }

    if !report.violations.is_empty() {
        report.finish();
        return Ok((report, None));
    }

    let edge_list: Vec<(usize, usize)> = canonical.into_iter().collect();
    let built = AreaGraph::from_edges(area_ids.len(), &edge_list)
        .and_then(|g| Population::new(individuals, areas, g));
    let pop = match built {
        Ok(p) => p,
        Err(e) => {
            report.violation(pop_path, None, e.to_string());
            report.finish();
            return Ok((report, None));
        }
    };

    let history = match (&paths.epidemic, spec) {
        (Some(ep), Some(spec)) => read_epidemic(ep, pop.individuals(), spec, &mut report)?,
        (Some(ep), None) => {
            report.violation(
                ep,
                None,
                "epidemic file given without a model configuration",
            );
            None
        }
        _ => None,
    };
    report.finish();
    if !report.ok {
        return Ok((report, None));
    }
    let report_copy = report.clone();
    Ok((
        report,
        Some(Dataset {
            pop,
            area_ids,
            history,
            report: report_copy,
        }),
    ))
}

/// Loads the inputs, failing with [`ValidationFailed`] on any violation.
pub fn load_valid(paths: &DataPaths, spec: Option<HistorySpec>) -> Result<Dataset> {
    let (report, data) = load(paths, spec)?;
    for n in &report.notes {
        log::info!("{}: {}", n.file, n.message);
    }
    data.ok_or_else(|| ValidationFailed(report).into())
}

pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Epidemic table in population order; blanks for absent times.
pub fn write_epidemic(path: &Path, pop: &Pop, history: &EpidemicHistory) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "infection_time", "removal_time"])?;
    let show = |t: Option<usize>| t.map_or(String::new(), |t| t.to_string());
    for (i, ind) in pop.individuals().iter().enumerate() {
        w.write_record([
            ind.id.to_string(),
            show(history.infection_time(i)),
            show(history.removal_time(i)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_individuals(path: &Path, pop: &Pop, area_ids: &[i64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["id".to_string(), "x".into(), "y".into(), "area_id".into()];
    header.extend((1..=pop.individual_covariate_dim()).map(|c| format!("cov_{c}")));
    w.write_record(&header)?;
    for ind in pop.individuals() {
        let mut rec = vec![
            ind.id.to_string(),
            ind.x.to_string(),
            ind.y.to_string(),
            area_ids[ind.area].to_string(),
        ];
        rec.extend(ind.covariates.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adjacency(path: &Path, graph: &AreaGraph, area_ids: &[i64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["area_a", "area_b"])?;
    for (a, b) in graph.edges() {
        w.write_record([area_ids[a].to_string(), area_ids[b].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
