//! Batch sweeps over random ensembles.
//!
//! A sweep writes two files into its output directory:
//!
//! * `raw.csv`, one row per (point, instance, method):
//!   `point,value,instance,method,seed,status,decisions,conflicts,solutions,propagations,wall_time,timed_out`
//! * `summary.csv`, one row per (point, method), recomputed from `raw.csv`:
//!   `point,value,method,instances,timeouts,p_sat,frac_unsat,mean_decisions,median_decisions,
//!   mean_conflicts,median_conflicts,mean_solutions,median_solutions,mean_propagations,
//!   median_propagations,mean_wall_time,median_wall_time`
//!
//! Instance `i` of point `p` uses seed `derive(derive(seed, p), i)` for the
//! generator and `derive(that, 1)` for BP. Raw rows are appended as they
//! finish; a rerun with the same spec only computes the missing cells and
//! then rewrites both files in canonical order.
//!
//! Spec file format:
//!
//! ```toml
//! seed = 1
//! instances = 50          # per point
//! methods = ["qdpll:vsids", "qdpll:bph", "qdpll:bpdh", "bpdu", "greedy"]
//! time_limit = 60.0       # seconds per qdpll run, optional
//! record_wall_time = true # false writes 0 so reruns are byte-identical
//!
//! [generator]
//! model = "lk"            # or "model_b" with t, n, u, v
//! l = 1
//! k = 3
//! nu = 15
//! ne = 15
//! alpha = 5.0             # used when the axis is "n"
//!
//! [axis]
//! name = "alpha"          # "alpha" sets M = round(alpha * N_e); "n" sets N_u = N_e = n
//! values = [2.0, 3.0, 4.0]
//!
//! [bp]                    # optional
//! t_max = 300
//! epsilon = 1e-7
//! damping = 0.0
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bp::BpParams;
use crate::decimation::{prove_unsat, ProverMethod};
use crate::formula::QbfFormula;
use crate::gen::{clauses_for, gen_lk, gen_model_b, GenError, LkSpec, ModelBSpec};
use crate::heuristics::Heuristic;
use crate::qdpll::{qdpll_solve_timeout, QbfStatus};
use crate::seeds::derive;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "QBFMP_WORKERS";

pub const RAW_FILE: &str = "raw.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GeneratorTemplate {
    Lk {
        l: usize,
        k: usize,
        nu: usize,
        ne: usize,
        #[serde(default)]
        alpha: Option<f64>,
    },
    ModelB {
        t: usize,
        n: usize,
        u: usize,
        v: usize,
        #[serde(default)]
        alpha: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    Alpha,
    N,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpSection {
    pub t_max: usize,
    pub epsilon: f64,
    pub damping: f64,
}

impl Default for BpSection {
    fn default() -> Self {
        let p = BpParams::<f64>::default();
        BpSection {
            t_max: p.t_max,
            epsilon: p.epsilon,
            damping: p.damping,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub generator: GeneratorTemplate,
    pub axis: Axis,
    pub instances: usize,
    pub methods: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub time_limit: Option<f64>,
    #[serde(default = "yes")]
    pub record_wall_time: bool,
    #[serde(default)]
    pub bp: BpSection,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Qdpll(Heuristic),
    Prover(ProverMethod),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Qdpll(h) => write!(f, "qdpll:{}", h.name()),
            Method::Prover(m) => f.write_str(m.name()),
        }
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BenchError::UnknownMethod(s.to_string());
        match s.strip_prefix("qdpll:") {
            Some(h) => h.parse().map(Method::Qdpll).map_err(|_| bad()),
            None => s.parse().map(Method::Prover).map_err(|_| bad()),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("generator: {0}")]
    Gen(#[from] GenError),
    #[error("spec file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: header does not match this version's raw schema")]
    Schema { path: PathBuf },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let spec: SweepSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let err = |m: &str| Err(BenchError::Spec(m.to_string()));
        if self.instances < 1 {
            return err("instances per point must be at least 1");
        }
        if self.axis.values.is_empty() {
            return err("axis has no values");
        }
        if self.methods.is_empty() {
            return err("no methods");
        }
        let methods = self.parsed_methods()?;
        if methods.iter().collect::<HashSet<_>>().len() != methods.len() {
            return err("duplicate method");
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0 && t.is_finite()) {
                return err("time_limit must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.bp.damping) || self.bp.epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return err("bp damping must lie in [0, 1) and epsilon be positive");
        }
        let fixed_alpha = match &self.generator {
            GeneratorTemplate::Lk { alpha, .. } | GeneratorTemplate::ModelB { alpha, .. } => *alpha,
        };
        if self.axis.name == AxisName::N && fixed_alpha.is_none() {
            return err("an n axis needs generator.alpha");
        }
        for &x in &self.axis.values {
            if !(x >= 0.0 && x.is_finite()) {
                return err("axis values must be finite and non-negative");
            }
            if self.axis.name == AxisName::N && x.fract() != 0.0 {
                return err("n values must be integers");
            }
        }
        for p in 0..self.axis.values.len() {
            self.instance(p, 0)?;
        }
        Ok(())
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, BenchError> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn bp_params(&self, seed: u64) -> BpParams<f64> {
        BpParams {
            t_max: self.bp.t_max,
            epsilon: self.bp.epsilon,
            damping: self.bp.damping,
            seed,
        }
    }

    pub fn instance_seed(&self, point: usize, instance: usize) -> u64 {
        derive(derive(self.seed, point as u64), instance as u64)
    }

    /// Generates instance `instance` of sweep point `point`.
    pub fn instance(&self, point: usize, instance: usize) -> Result<QbfFormula, BenchError> {
        let x = self.axis.values[point];
        let seed = self.instance_seed(point, instance);
        match self.generator.clone() {
            GeneratorTemplate::Lk { l, k, mut nu, mut ne, alpha } => {
                let alpha = match self.axis.name {
                    AxisName::Alpha => x,
                    AxisName::N => {
                        nu = x as usize;
                        ne = x as usize;
                        alpha.unwrap_or_default()
                    }
                };
                let m = clauses_for(alpha, ne);
                Ok(gen_lk(&LkSpec { l, k, nu, ne, m, seed })?)
            }
            GeneratorTemplate::ModelB { t, mut n, u, v, alpha } => {
                let alpha = match self.axis.name {
                    AxisName::Alpha => x,
                    AxisName::N => {
                        n = x as usize;
                        alpha.unwrap_or_default()
                    }
                };
                let m = clauses_for(alpha, n);
                Ok(gen_model_b(&ModelBSpec { t, n, u, v, m, seed })?)
            }
        }
    }
}

/// One raw result cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub point: usize,
    pub value: f64,
    pub instance: usize,
    pub method: String,
    pub seed: u64,
    /// `sat`, `unsat` or `unknown`; provers only ever report `unsat` or `unknown`.
    pub status: String,
    pub decisions: u64,
    pub conflicts: u64,
    pub solutions: u64,
    pub propagations: u64,
    pub wall_time: f64,
    pub timed_out: bool,
}

/// Aggregate over the instances of one (point, method).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub value: f64,
    pub method: String,
    pub instances: usize,
    pub timeouts: usize,
    pub p_sat: f64,
    pub frac_unsat: f64,
    pub mean_decisions: f64,
    pub median_decisions: f64,
    pub mean_conflicts: f64,
    pub median_conflicts: f64,
    pub mean_solutions: f64,
    pub median_solutions: f64,
    pub mean_propagations: f64,
    pub median_propagations: f64,
    pub mean_wall_time: f64,
    pub median_wall_time: f64,
}

/// Runs one method on one instance.
pub fn run_cell(spec: &SweepSpec, point: usize, instance: usize, method: Method) -> Result<RawRow, BenchError> {
    let f = spec.instance(point, instance)?;
    let seed = spec.instance_seed(point, instance);
    let p = spec.bp_params(derive(seed, 1));
    let mut row = RawRow {
        point,
        value: spec.axis.values[point],
        instance,
        method: method.to_string(),
        seed,
        status: "unknown".into(),
        decisions: 0,
        conflicts: 0,
        solutions: 0,
        propagations: 0,
        wall_time: 0.0,
        timed_out: false,
    };
    let start = Instant::now();
    match method {
        Method::Qdpll(h) => {
            let mut brancher = h.brancher(&f, &p);
            let limit = spec
                .time_limit
                .map(Duration::from_secs_f64)
                .unwrap_or(Duration::MAX / 4);
            let (status, stats) = qdpll_solve_timeout(&f, &mut brancher, limit);
            row.status = status.map_or("unknown", QbfStatus::as_str).into();
            row.timed_out = status.is_none();
            row.decisions = stats.decisions;
            row.conflicts = stats.conflicts;
            row.solutions = stats.solutions;
            row.propagations = stats.propagations;
        }
        Method::Prover(m) => {
            let attempt = prove_unsat(&f, m, &p).map_err(|e| BenchError::Spec(e.to_string()))?;
            if attempt.outcome.is_unsat() {
                row.status = "unsat".into();
            }
            row.decisions = attempt.steps.len() as u64;
        }
    }
    if spec.record_wall_time {
        row.wall_time = start.elapsed().as_secs_f64();
    }
    Ok(row)
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs the sweep into `out_dir` with the worker count from the environment.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<Vec<SweepRow>, BenchError> {
    run_sweep_with(spec, out_dir, workers_from_env())
}

pub fn run_sweep_with(spec: &SweepSpec, out_dir: &Path, workers: Option<usize>) -> Result<Vec<SweepRow>, BenchError> {
    spec.validate()?;
    let methods = spec.parsed_methods()?;
    fs::create_dir_all(out_dir)?;
    let raw_path = out_dir.join(RAW_FILE);

    let existing = load_raw_lenient(&raw_path)?;
    let done: HashSet<(usize, usize, String)> = existing
        .iter()
        .map(|r| (r.point, r.instance, r.method.clone()))
        .collect();
    // drop any torn trailing line before appending
    write_raw(&raw_path, &existing)?;

    let mut todo = Vec::new();
    for point in 0..spec.axis.values.len() {
        for instance in 0..spec.instances {
            for &m in &methods {
                if !done.contains(&(point, instance, m.to_string())) {
                    todo.push((point, instance, m));
                }
            }
        }
    }

    let sink = Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(
        OpenOptions::new().append(true).open(&raw_path)?,
    ));
    let work = || {
        todo.par_iter().try_for_each(|&(point, instance, m)| -> Result<(), BenchError> {
            let row = run_cell(spec, point, instance, m)?;
            let mut w = sink.lock().expect("raw writer poisoned");
            w.serialize(&row)?;
            w.flush()?;
            Ok(())
        })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build()?;
    pool.install(work)?;
    drop(sink);

    let mut rows = read_raw(&raw_path)?;
    rows.retain(|r| r.point < spec.axis.values.len() && r.instance < spec.instances);
    let rank = |name: &str| methods.iter().position(|m| m.to_string() == name).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (a.point, a.instance, rank(&a.method), &a.method).cmp(&(b.point, b.instance, rank(&b.method), &b.method))
    });
    write_raw(&raw_path, &rows)?;

    let summary = summarize(&rows, &methods.iter().map(|m| m.to_string()).collect::<Vec<_>>());
    write_summary(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn raw_header() -> Vec<&'static str> {
    vec![
        "point", "value", "instance", "method", "seed", "status", "decisions", "conflicts", "solutions",
        "propagations", "wall_time", "timed_out",
    ]
}

/// Reads a raw file strictly.
pub fn read_raw(path: &Path) -> Result<Vec<RawRow>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(raw_header()) {
        return Err(BenchError::Schema { path: path.into() });
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Reads whatever complete rows an interrupted run left behind.
fn load_raw_lenient(path: &Path) -> Result<Vec<RawRow>, BenchError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.is_empty() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_reader(complete.as_bytes());
    if r.headers()?.iter().ne(raw_header()) {
        return Err(BenchError::Schema { path: path.into() });
    }
    Ok(r.deserialize().filter_map(Result::ok).collect())
}

fn write_raw(path: &Path, rows: &[RawRow]) -> Result<(), BenchError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(File::create(&tmp)?);
        w.write_record(raw_header())?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SweepRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SweepRow>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Aggregates raw rows per (point, method); `methods` fixes the method order
/// within a point.
pub fn summarize(rows: &[RawRow], methods: &[String]) -> Vec<SweepRow> {
    let mut points: Vec<(usize, f64)> = rows.iter().map(|r| (r.point, r.value)).collect();
    points.sort_by_key(|p| p.0);
    points.dedup_by_key(|p| p.0);
    let mut out = Vec::new();
    for (point, value) in points {
        for method in methods {
            let cell: Vec<&RawRow> = rows.iter().filter(|r| r.point == point && &r.method == method).collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len();
            let frac = |status: &str| cell.iter().filter(|r| r.status == status).count() as f64 / n as f64;
            let stat = |get: fn(&RawRow) -> f64| {
                let xs: Vec<f64> = cell.iter().map(|r| get(r)).collect();
                (mean(&xs), median(&xs))
            };
            let (mean_decisions, median_decisions) = stat(|r| r.decisions as f64);
            let (mean_conflicts, median_conflicts) = stat(|r| r.conflicts as f64);
            let (mean_solutions, median_solutions) = stat(|r| r.solutions as f64);
            let (mean_propagations, median_propagations) = stat(|r| r.propagations as f64);
            let (mean_wall_time, median_wall_time) = stat(|r| r.wall_time);
            out.push(SweepRow {
                point,
                value,
                method: method.clone(),
                instances: n,
                timeouts: cell.iter().filter(|r| r.timed_out).count(),
                p_sat: frac("sat"),
                frac_unsat: frac("unsat"),
                mean_decisions,
                median_decisions,
                mean_conflicts,
                median_conflicts,
                mean_solutions,
                median_solutions,
                mean_propagations,
                median_propagations,
                mean_wall_time,
                median_wall_time,
            });
        }
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Writes the stats of one solver run as a header plus one CSV line.
pub fn stats_csv(status: &str, stats: &crate::qdpll::SolverStats) -> String {
    format!(
        "status,decisions,conflicts,solutions,propagations,wall_time\n{},{},{},{},{},{}\n",
        status, stats.decisions, stats.conflicts, stats.solutions, stats.propagations, stats.wall_time
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
seed = 3
instances = 4
methods = ["qdpll:vsids", "qdpll:bph", "bpdu", "greedy"]
record_wall_time = false

[generator]
model = "lk"
l = 1
k = 3
nu = 6
ne = 6

[axis]
name = "alpha"
values = [2.0, 6.0]
"#;

    #[test]
    fn parses_methods() {
        assert_eq!("qdpll:bpdh".parse::<Method>().unwrap(), Method::Qdpll(Heuristic::Bpdh));
        assert_eq!("bpspdu".parse::<Method>().unwrap(), Method::Prover(ProverMethod::Bpspdu));
        assert!("qdpll:foo".parse::<Method>().is_err());
        assert!("vsids".parse::<Method>().is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SweepSpec::from_toml(&SPEC.replace("instances = 4", "instances = 0")).is_err());
        assert!(SweepSpec::from_toml(&SPEC.replace("\"greedy\"", "\"greedy\", \"greedy\"")).is_err());
        assert!(SweepSpec::from_toml(&SPEC.replace("name = \"alpha\"", "name = \"n\"")).is_err());
        assert!(SweepSpec::from_toml(&SPEC.replace("k = 3", "k = 9")).is_err());
    }

    #[test]
    fn clause_count_follows_axis() {
        let spec = SweepSpec::from_toml(SPEC).unwrap();
        assert_eq!(spec.instance(0, 0).unwrap().num_clauses(), 12);
        assert_eq!(spec.instance(1, 3).unwrap().num_clauses(), 36);
    }

    #[test]
    fn single_cell_summary_is_the_cell() {
        let spec = SweepSpec::from_toml(SPEC).unwrap();
        let row = run_cell(&spec, 1, 2, Method::Qdpll(Heuristic::Vsids)).unwrap();
        let s = summarize(std::slice::from_ref(&row), std::slice::from_ref(&row.method));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].instances, 1);
        assert_eq!(s[0].mean_conflicts, row.conflicts as f64);
        assert_eq!(s[0].median_decisions, row.decisions as f64);
        assert_eq!(s[0].p_sat, if row.status == "sat" { 1.0 } else { 0.0 });
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
