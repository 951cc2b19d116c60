//! Seeded experiment grids, result files, and their aggregation.
//!
//! Each run writes `<task>_<variant>_<seed>.csv`, one row per simulator call,
//! and a JSON header with the same stem holding every constant needed to
//! repeat it. `manifest.json` lists the runs requested so far, so that
//! aggregation can report the ones that never finished.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::acquisition::DirectConfig;
use crate::aloq_loop::{run, ChainSizes, RunConfig, Trace, Variant};
use crate::error::{AloqError, Result};
use crate::tasks::task_by_name;

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: String,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub kappa: Option<f64>,
    pub init_size: Option<usize>,
    pub mc_count: Option<usize>,
    pub chain: ChainSizes,
    pub direct: DirectConfig,
    pub out_dir: PathBuf,
    /// Worker threads; runs are independent.
    pub jobs: usize,
    /// Record wall-clock times. Without them the files are reproducible
    /// byte for byte.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(
        task: &str,
        variants: Vec<Variant>,
        seeds: Vec<u64>,
        budget: usize,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        ExperimentSpec {
            task: task.into(),
            variants,
            seeds,
            budget,
            kappa: None,
            init_size: None,
            mc_count: None,
            chain: ChainSizes::default(),
            direct: DirectConfig::default(),
            out_dir: out_dir.into(),
            jobs: 1,
            timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(AloqError::Config("an experiment needs at least one variant and one seed".into()));
        }
        if self.jobs == 0 {
            return Err(AloqError::Config("jobs must be at least 1".into()));
        }
        // surfaces unknown task names before any work starts
        task_by_name(&self.task, self.seeds[0])?;
        Ok(())
    }

    pub fn run_config(&self, variant: Variant, seed: u64) -> RunConfig {
        RunConfig {
            budget: self.budget,
            init_size: self.init_size,
            seed,
            variant,
            kappa: self.kappa,
            direct: self.direct,
            chain: self.chain,
            mc_count: self.mc_count,
        }
    }
}

/// One simulator call of one run, with the oracle value of the incumbent.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub task: String,
    pub variant: Variant,
    pub seed: u64,
    pub call: usize,
    pub incumbent: Vec<f64>,
    pub fbar_oracle: f64,
    pub wall_ms: Option<f64>,
}

pub fn run_stem(task: &str, variant: Variant, seed: u64) -> String {
    format!("{task}_{}_{seed}", variant.name())
}

/// Rows for a finished trace, scoring each incumbent with the task oracle.
pub fn trace_rows(trace: &Trace, timing: bool) -> Result<Vec<ResultRow>> {
    let task = task_by_name(&trace.task, trace.seed)?;
    let mut cache: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut rows = Vec::with_capacity(trace.calls.len());
    for c in &trace.calls {
        let oracle = match cache.iter().find(|(p, _)| *p == c.incumbent) {
            Some((_, v)) => *v,
            None => {
                let v = task.exact_fbar(&c.incumbent)?;
                cache.push((c.incumbent.clone(), v));
                v
            }
        };
        rows.push(ResultRow {
            task: trace.task.clone(),
            variant: trace.variant,
            seed: trace.seed,
            call: c.call,
            incumbent: c.incumbent.clone(),
            fbar_oracle: oracle,
            wall_ms: timing.then_some(c.wall_ms),
        });
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.incumbent.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["task", "variant", "seed", "call"].iter().map(|s| s.to_string()).collect();
    header.extend((0..d).map(|i| format!("incumbent_{i}")));
    header.push("fbar_oracle".into());
    header.push("wall_ms".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.task.clone(), r.variant.name().into(), r.seed.to_string(), r.call.to_string()];
        rec.extend(r.incumbent.iter().map(|v| v.to_string()));
        rec.push(r.fbar_oracle.to_string());
        rec.push(r.wall_ms.map_or(String::new(), |v| format!("{v:.3}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AloqError::Config(format!("{}: missing column `{name}`", path.display())))
    };
    let (ti, vi, si, ci, fi, wi) =
        (col("task")?, col("variant")?, col("seed")?, col("call")?, col("fbar_oracle")?, col("wall_ms")?);
    let inc: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.starts_with("incumbent_")).map(|(i, _)| i).collect();
    let bad = |what: &str| AloqError::Config(format!("{}: unreadable {what}", path.display()));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&headers[i]));
        rows.push(ResultRow {
            task: rec[ti].to_string(),
            variant: rec[vi].parse()?,
            seed: rec[si].parse().map_err(|_| bad("seed"))?,
            call: rec[ci].parse().map_err(|_| bad("call"))?,
            incumbent: inc.iter().map(|&i| num(i)).collect::<Result<_>>()?,
            fbar_oracle: num(fi)?,
            wall_ms: if rec[wi].is_empty() { None } else { Some(num(wi)?) },
        });
    }
    Ok(rows)
}

fn run_header(spec: &ExperimentSpec, cfg: &RunConfig, trace: &Trace) -> Result<serde_json::Value> {
    let task = task_by_name(&spec.task, cfg.seed)?;
    Ok(json!({
        "task": spec.task,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "config": cfg,
        "init_size": cfg.init_size_for(task.as_ref()),
        "kappa": cfg.kappa.unwrap_or(task.default_kappa()),
        "hyper_priors": task.hyper_priors(),
        "task_constants": task.constants(),
        "timing": spec.timing,
        "version": env!("CARGO_PKG_VERSION"),
        "final_policy": trace.final_policy,
        "final_estimate": trace.final_estimate,
        "warnings": trace.warnings,
    }))
}

fn update_manifest(dir: &Path, stems: &[String]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut all: BTreeSet<String> =
        if path.exists() { serde_json::from_str(&fs::read_to_string(&path)?)? } else { BTreeSet::new() };
    all.extend(stems.iter().cloned());
    fs::write(&path, serde_json::to_string_pretty(&all)? + "\n")?;
    Ok(())
}

fn run_one(spec: &ExperimentSpec, variant: Variant, seed: u64) -> Result<PathBuf> {
    let task = task_by_name(&spec.task, seed)?;
    let cfg = spec.run_config(variant, seed);
    let trace = run(task.as_ref(), &cfg)?;
    let rows = trace_rows(&trace, spec.timing)?;
    let stem = run_stem(&spec.task, variant, seed);
    let header = run_header(spec, &cfg, &trace)?;
    fs::write(spec.out_dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&header)? + "\n")?;
    let csv_path = spec.out_dir.join(format!("{stem}.csv"));
    write_rows(&csv_path, &rows)?;
    Ok(csv_path)
}

/// Runs the variant-by-seed grid and returns the CSV paths in grid order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let grid: Vec<(Variant, u64)> =
        spec.variants.iter().flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s))).collect();
    update_manifest(&spec.out_dir, &grid.iter().map(|&(v, s)| run_stem(&spec.task, v, s)).collect::<Vec<_>>())?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<PathBuf>>>> = Mutex::new((0..grid.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..spec.jobs.min(grid.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(v, s)) = grid.get(i) else { break };
                let r = run_one(spec, v, s);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every grid cell ran")).collect()
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub n: usize,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Quartiles { q1: quantile(&v, 0.25), median: quantile(&v, 0.5), q3: quantile(&v, 0.75), n: v.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub task: String,
    pub variant: Variant,
    pub call: usize,
    pub stats: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    /// Quartiles of the oracle value per call index.
    pub curves: Vec<CurvePoint>,
    /// Quartiles at each run's last call.
    pub finals: Vec<CurvePoint>,
    /// Requested runs with no result file.
    pub missing: Vec<String>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn final_for(&self, task: &str, variant: Variant) -> Option<&Quartiles> {
        self.finals.iter().find(|c| c.task == task && c.variant == variant).map(|c| &c.stats)
    }

    /// Final quartiles, one `task & variant & Q1 & Q2 & Q3` line per pair.
    pub fn quartile_table(&self) -> String {
        self.finals
            .iter()
            .map(|c| {
                format!("{} & {} & {:.3} & {:.3} & {:.3}\n", c.task, c.variant, c.stats.q1, c.stats.median, c.stats.q3)
            })
            .collect()
    }

    pub fn write_curves(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["task", "variant", "call", "n", "q1", "median", "q3"])?;
        for c in &self.curves {
            w.write_record([
                c.task.clone(),
                c.variant.name().into(),
                c.call.to_string(),
                c.stats.n.to_string(),
                c.stats.q1.to_string(),
                c.stats.median.to_string(),
                c.stats.q3.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn result_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.with_extension("json").exists())
        .collect();
    files.sort();
    Ok(files)
}

fn load_runs(dir: &Path) -> Result<Vec<Vec<ResultRow>>> {
    result_files(dir)?.iter().map(|p| read_rows(p)).collect()
}

pub fn aggregate(dir: &Path) -> Result<Summary> {
    let runs = load_runs(dir)?;
    let mut summary = Summary::default();
    let present: BTreeSet<String> =
        runs.iter().filter_map(|r| r.first().map(|x| run_stem(&x.task, x.variant, x.seed))).collect();
    let manifest = dir.join(MANIFEST);
    if manifest.exists() {
        let wanted: BTreeSet<String> = serde_json::from_str(&fs::read_to_string(&manifest)?)?;
        summary.missing = wanted.difference(&present).cloned().collect();
        if !summary.missing.is_empty() {
            summary.warnings.push(format!(
                "{} requested runs have no results; aggregating the available seeds",
                summary.missing.len()
            ));
        }
    }

    let mut per_call: BTreeMap<(String, Variant, usize), Vec<f64>> = BTreeMap::new();
    let mut finals: BTreeMap<(String, Variant), Vec<(usize, f64)>> = BTreeMap::new();
    for rows in &runs {
        let Some(last) = rows.last() else { continue };
        for r in rows {
            per_call.entry((r.task.clone(), r.variant, r.call)).or_default().push(r.fbar_oracle);
        }
        finals.entry((last.task.clone(), last.variant)).or_default().push((last.call, last.fbar_oracle));
    }
    summary.curves = per_call
        .into_iter()
        .map(|((task, variant, call), v)| CurvePoint { task, variant, call, stats: Quartiles::of(&v) })
        .collect();
    summary.finals = finals
        .into_iter()
        .map(|((task, variant), v)| {
            let call = v.iter().map(|p| p.0).max().unwrap_or(0);
            let values: Vec<f64> = v.iter().map(|p| p.1).collect();
            CurvePoint { task, variant, call, stats: Quartiles::of(&values) }
        })
        .collect();
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSeries {
    pub task: String,
    pub variant: Variant,
    /// `(call, median wall ms across seeds)`, covering every timed call.
    pub points: Vec<(usize, f64)>,
}

impl RuntimeSeries {
    /// Spearman correlation between call index and median step time.
    pub fn trend(&self) -> f64 {
        let x: Vec<f64> = self.points.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        rank_correlation(&x, &y)
    }
}

pub fn runtime_report(dir: &Path) -> Result<Vec<RuntimeSeries>> {
    let mut per_call: BTreeMap<(String, Variant), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for rows in load_runs(dir)? {
        for r in rows {
            if let Some(ms) = r.wall_ms {
                per_call.entry((r.task.clone(), r.variant)).or_default().entry(r.call).or_default().push(ms);
            }
        }
    }
    Ok(per_call
        .into_iter()
        .map(|((task, variant), calls)| RuntimeSeries {
            task,
            variant,
            points: calls.into_iter().map(|(c, v)| (c, Quartiles::of(&v).median)).collect(),
        })
        .collect())
}

/// Ranks with ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; zero when either side is constant.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests;
