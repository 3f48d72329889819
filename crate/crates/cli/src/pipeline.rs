//! The pipeline stages. Every stage writes a manifest next to its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fieldrecon::bench::{self, BenchSubject, PlotQuantity, RecordWriter};
use fieldrecon::hpo::{self, Assignment, SearchSpace, TrialStatus};
use fieldrecon::ingest::{self, Split, StationRecord};
use fieldrecon::methods::{self, Method};
use fieldrecon::metrics::{EvalPair, MetricSet};
use fieldrecon::stats;
use fieldrecon::synthetic::{self, SyntheticConfig};
use fieldrecon::{ClimatePointCloud, Reconstructor};

use crate::{CliError, ExperimentConfig, Manifest};

type Result<T> = std::result::Result<T, CliError>;

pub const HISTOGRAM_BINS: usize = 10;

/// Paths inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.json"))
    }

    pub fn dates(&self) -> PathBuf {
        self.root.join("ingest").join("dates.txt")
    }

    pub fn membership(&self, date: &str) -> PathBuf {
        self.root.join("ingest").join("membership").join(format!("{date}.csv"))
    }

    pub fn split(&self, split: Split, date: &str) -> PathBuf {
        self.root.join("ingest").join(split.name()).join(format!("{date}.csv"))
    }

    pub fn split_summary(&self) -> PathBuf {
        self.root.join("ingest").join("summary.csv")
    }

    pub fn tune_dir(&self, method: Method) -> PathBuf {
        self.root.join("tune").join(method.name())
    }

    pub fn history(&self, method: Method, date: &str) -> PathBuf {
        self.tune_dir(method).join(format!("{date}.history.csv"))
    }

    pub fn histogram(&self, method: Method, date: &str) -> PathBuf {
        self.tune_dir(method).join(format!("{date}.histogram.csv"))
    }

    pub fn best(&self, method: Method, date: &str) -> PathBuf {
        self.tune_dir(method).join(format!("{date}.best.json"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("evaluate").join("metrics.csv")
    }

    pub fn compare_dir(&self) -> PathBuf {
        self.root.join("compare")
    }

    pub fn bench_dir(&self) -> PathBuf {
        self.root.join("bench")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.md")
    }
}

fn write_manifest(layout: &Layout, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let path = layout.manifest(command);
    fs::create_dir_all(path.parent().expect("manifest has a parent"))?;
    fs::write(path, serde_json::to_string_pretty(&Manifest::new(command, cfg))? + "\n")?;
    Ok(())
}

fn missing(path: PathBuf, message: impl Into<String>) -> CliError {
    CliError::MissingArtifact {
        path,
        message: message.into(),
    }
}

/// Writes via a temporary sibling so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_dates(layout: &Layout) -> Result<Vec<String>> {
    let path = layout.dates();
    let text = fs::read_to_string(&path).map_err(|_| missing(path.clone(), "no ingested dates; run `ingest` first"))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

/// The splits a tuning run may read. The test split is deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningSplit {
    Train,
    Val,
}

fn load_records(path: &Path) -> Result<Vec<StationRecord>> {
    if !path.exists() {
        return Err(missing(path.to_path_buf(), "split file not found; run `ingest` first"));
    }
    Ok(ingest::read_station_file(path)?)
}

pub fn load_tuning_split(layout: &Layout, split: TuningSplit, date: &str) -> Result<ClimatePointCloud> {
    let s = match split {
        TuningSplit::Train => Split::Train,
        TuningSplit::Val => Split::Val,
    };
    Ok(ingest::to_cloud(&load_records(&layout.split(s, date))?)?)
}

/// Only evaluation calls this.
fn load_test_split(layout: &Layout, date: &str) -> Result<ClimatePointCloud> {
    Ok(ingest::to_cloud(&load_records(&layout.split(Split::Test, date))?)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub dates: Vec<String>,
    pub summary: ingest::SplitSummary,
}

pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<IngestOutput> {
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Validation("data: no input file given".into()))?;
    let layout = Layout::new(&cfg.out);
    let records = ingest::read_station_file(data)?;
    let dates = ingest::select_dates(&records, cfg.min_valid, cfg.n_dates, cfg.seed)?;
    let by_date = ingest::valid_by_date(&records);
    let sets = dates
        .par_iter()
        .map(|d| ingest::make_splits(d, &by_date[d.as_str()], cfg.seed))
        .collect::<fieldrecon::Result<Vec<_>>>()?;

    for dir in ["membership", "train", "val", "test"] {
        fs::create_dir_all(layout.root.join("ingest").join(dir))?;
    }
    for set in &sets {
        ingest::write_membership(&layout.membership(&set.date), set)?;
        for s in Split::ALL {
            ingest::write_station_file(&layout.split(s, &set.date), set.part(s))?;
        }
    }
    let summary = ingest::split_summary(&sets)?;
    ingest::write_split_summary(&layout.split_summary(), &summary)?;
    fs::write(layout.dates(), dates.join("\n") + "\n")?;
    write_manifest(&layout, "ingest", cfg)?;
    log::info!("ingested {} dates into {}", dates.len(), layout.root.display());
    Ok(IngestOutput { dates, summary })
}

/// Stored outcome of tuning one method on one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParams {
    pub method: Method,
    pub date: String,
    /// `None` when every trial failed.
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub trial_index: usize,
    pub params: serde_json::Value,
}

impl BestParams {
    pub fn read(layout: &Layout, method: Method, date: &str) -> Result<(Self, Assignment)> {
        let path = layout.best(method, date);
        let text = fs::read_to_string(&path)
            .map_err(|_| missing(path.clone(), format!("no tuned parameters for {method} on {date}; run `tune` first")))?;
        let best: BestParams = serde_json::from_str(&text)?;
        let a = SearchSpace::for_method(method).assignment_from_json(&best.params)?;
        Ok((best, a))
    }
}

/// Seed for tuning and training `method` on `date`.
pub fn cell_seed(master: u64, method: Method, date: &str) -> u64 {
    ingest::date_seed(master, &format!("{date}:{method}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneCell {
    pub method: Method,
    pub date: String,
    pub best_objective: f64,
    /// Median objective of the random initial trials.
    pub median_initial: f64,
    /// True when an earlier run had already finished this cell.
    pub resumed: bool,
}

fn write_histograms(path: &Path, space: &SearchSpace, history: &[hpo::Trial]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["param", "bin_lo", "bin_hi", "count"])?;
    for h in hpo::histograms(space, history, HISTOGRAM_BINS) {
        for (i, c) in h.counts.iter().enumerate() {
            w.write_record([h.param.clone(), h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_history_objectives(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "objective")
        .ok_or_else(|| missing(path.to_path_buf(), "history has no objective column"))?;
    let mut out = Vec::new();
    for row in r.records() {
        out.push(row?.get(col).and_then(|v| v.parse().ok()).unwrap_or(f64::INFINITY));
    }
    Ok(out)
}

fn median_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        stats::quantile(v, 0.5)
    }
}

fn tune_cell(cfg: &ExperimentConfig, layout: &Layout, method: Method, date: &str) -> Result<TuneCell> {
    let budget = cfg.budget(method);
    let best_path = layout.best(method, date);
    if best_path.exists() {
        let (best, _) = BestParams::read(layout, method, date)?;
        let objectives = read_history_objectives(&layout.history(method, date))?;
        let n_init = budget.n_initial.min(objectives.len());
        return Ok(TuneCell {
            method,
            date: date.to_string(),
            best_objective: best.objective.unwrap_or(f64::INFINITY),
            median_initial: median_of(&objectives[..n_init]),
            resumed: true,
        });
    }
    let train = load_tuning_split(layout, TuningSplit::Train, date)?;
    let val = load_tuning_split(layout, TuningSplit::Val, date)?;
    let ctx = cfg.method_context(cell_seed(cfg.seed, method, date));
    let result = methods::tune_method(method, &train, &val, budget, &ctx);
    let space = SearchSpace::for_method(method);
    hpo::write_history(&layout.history(method, date), &space, &result.history)?;
    write_histograms(&layout.histogram(method, date), &space, &result.history)?;
    let best = BestParams {
        method,
        date: date.to_string(),
        objective: result.best.objective.is_finite().then_some(result.best.objective),
        status: result.best.status,
        trial_index: result.best.index,
        params: space.assignment_to_json(&result.best.assignment),
    };
    // Written last: its presence marks the cell as complete.
    write_atomic(&best_path, (serde_json::to_string_pretty(&best)? + "\n").as_bytes())?;
    let initial: Vec<f64> = result.history[..budget.n_initial].iter().map(|t| t.objective).collect();
    log::info!("tuned {method} on {date}: validation MAE {:.4} ({})", result.best.objective, result.best.assignment);
    Ok(TuneCell {
        method,
        date: date.to_string(),
        best_objective: result.best.objective,
        median_initial: median_of(&initial),
        resumed: false,
    })
}

/// Tunes every configured method on every ingested date. Dates run in
/// parallel; cells that already have a best-parameter file are skipped.
pub fn cmd_tune(cfg: &ExperimentConfig) -> Result<Vec<TuneCell>> {
    let layout = Layout::new(&cfg.out);
    let dates = read_dates(&layout)?;
    for &m in &cfg.methods {
        fs::create_dir_all(layout.tune_dir(m))?;
    }
    let cells: Vec<(Method, &String)> = cfg.methods.iter().flat_map(|&m| dates.iter().map(move |d| (m, d))).collect();
    let out = cells
        .par_iter()
        .map(|(m, d)| tune_cell(cfg, &layout, *m, d))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&layout, "tune", cfg)?;
    Ok(out)
}

/// Fits `method` with its tuned parameters on the training split of `date`.
pub fn fitted_model(cfg: &ExperimentConfig, layout: &Layout, method: Method, date: &str) -> Result<(Box<dyn Reconstructor>, ClimatePointCloud)> {
    let (_, a) = BestParams::read(layout, method, date)?;
    let train = load_tuning_split(layout, TuningSplit::Train, date)?;
    let val = load_tuning_split(layout, TuningSplit::Val, date)?;
    let ctx = cfg.method_context(cell_seed(cfg.seed, method, date));
    let model = methods::build(method, &a, &train, &val, &ctx)?;
    Ok((model, train))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub date: String,
    pub method: Method,
    pub n_test: usize,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub delta_max: f64,
}

impl EvalRow {
    pub fn metric_set(&self) -> MetricSet {
        MetricSet {
            rmse: self.rmse,
            mae: self.mae,
            r2: self.r2,
            delta_max: self.delta_max,
        }
    }
}

/// Scores every tuned model on its held-out test split.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Vec<EvalRow>> {
    let layout = Layout::new(&cfg.out);
    let dates = read_dates(&layout)?;
    let cells: Vec<(&String, Method)> = dates.iter().flat_map(|d| cfg.methods.iter().map(move |&m| (d, m))).collect();
    let rows = cells
        .par_iter()
        .map(|&(date, method)| -> Result<EvalRow> {
            let (model, _) = fitted_model(cfg, &layout, method, date)?;
            let test = load_test_split(&layout, date)?;
            let pred = model.reconstruct(&test.locations())?;
            let m = MetricSet::compute(&EvalPair::new(test.values(), pred)?);
            Ok(EvalRow {
                date: date.clone(),
                method,
                n_test: test.len(),
                rmse: m.rmse,
                mae: m.mae,
                r2: m.r2,
                delta_max: m.delta_max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(layout.metrics().parent().expect("has parent"))?;
    let mut w = csv::Writer::from_path(layout.metrics())?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_manifest(&layout, "evaluate", cfg)?;
    Ok(rows)
}

pub fn read_eval_rows(layout: &Layout) -> Result<Vec<EvalRow>> {
    let path = layout.metrics();
    if !path.exists() {
        return Err(missing(path, "no evaluation results; run `evaluate` first"));
    }
    let mut r = csv::Reader::from_path(&path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<EvalRow>, _>>()?)
}

pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<stats::ComparisonReport> {
    let layout = Layout::new(&cfg.out);
    let rows = read_eval_rows(&layout)?;
    if cfg.methods.len() < 2 {
        return Err(CliError::Refused("comparison needs at least two methods".into()));
    }
    let mut per_method: BTreeMap<Method, Vec<&EvalRow>> = BTreeMap::new();
    for r in &rows {
        per_method.entry(r.method).or_default().push(r);
    }
    let mut labels = Vec::new();
    let mut results = Vec::new();
    for &m in &cfg.methods {
        let mut v = per_method.remove(&m).unwrap_or_default();
        v.sort_by(|a, b| a.date.cmp(&b.date));
        if v.len() < 3 {
            return Err(CliError::Refused(format!(
                "{m} has results for {} dates; at least 3 are needed for a comparison",
                v.len()
            )));
        }
        labels.push(m.name().to_string());
        results.push(v.iter().map(|r| r.metric_set()).collect());
    }
    let report = stats::compare_methods(&labels, &results, &cfg.metrics, cfg.alpha)?;
    let dir = layout.compare_dir();
    fs::create_dir_all(&dir)?;
    report.write_csv(&dir)?;
    fs::write(dir.join("report.txt"), report.to_text())?;
    write_manifest(&layout, "compare", cfg)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub records: Vec<bench::BenchRecord>,
    pub summary: Vec<bench::BenchSummary>,
}

/// Times reconstruction with the tuned models. Models (including network
/// training) are prepared before any timing starts.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<BenchOutput> {
    let layout = Layout::new(&cfg.out);
    let dates = read_dates(&layout)?;
    let mut prepared = Vec::new();
    for &m in &cfg.methods {
        for d in &dates {
            let (model, train) = fitted_model(cfg, &layout, m, d)?;
            prepared.push((m, d.clone(), model, train));
        }
    }
    let subjects: Vec<BenchSubject<'_>> = prepared
        .iter()
        .map(|(m, d, model, train)| BenchSubject {
            method: m.name().to_string(),
            date: d.clone(),
            cloud: train,
            model: model.as_ref(),
        })
        .collect();

    let dir = layout.bench_dir();
    fs::create_dir_all(&dir)?;
    let mut writer = RecordWriter::create(&dir.join("bench_records.csv"))?;
    let records = bench::run_bench(&cfg.bench(), &subjects, |r| writer.write(r))?;
    let summary = bench::summarize_bench(&records);
    bench::write_summary(&dir.join("bench_summary.csv"), &summary)?;
    fs::write(dir.join("time.svg"), bench::plot_svg(&summary, PlotQuantity::Time))?;
    fs::write(dir.join("memory.svg"), bench::plot_svg(&summary, PlotQuantity::Memory))?;
    write_manifest(&layout, "bench", cfg)?;
    Ok(BenchOutput { records, summary })
}

/// Collects the tables produced so far into one Markdown file.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let layout = Layout::new(&cfg.out);
    let mut md = String::from("# fieldrecon report\n\n");
    let _ = writeln!(md, "Seed {}, configuration hash `{}`.\n", cfg.seed, cfg.hash());
    let sections: [(&str, PathBuf); 4] = [
        ("Split summary (train and validation)", layout.split_summary()),
        ("Test metrics per date", layout.metrics()),
        ("Benchmark summary", layout.bench_dir().join("bench_summary.csv")),
        ("Omnibus tests", layout.compare_dir().join("omnibus.csv")),
    ];
    let mut any = false;
    for (title, path) in sections {
        if let Ok(table) = csv_to_markdown(&path) {
            let _ = writeln!(md, "## {title}\n\n{table}");
            any = true;
        }
    }
    if let Ok(text) = fs::read_to_string(layout.compare_dir().join("report.txt")) {
        let _ = writeln!(md, "## Method comparison\n\n```text\n{text}```\n");
        any = true;
    }
    if !any {
        return Err(missing(layout.root.clone(), "nothing to report; run the other stages first"));
    }
    fs::write(layout.report(), md)?;
    write_manifest(&layout, "report", cfg)?;
    Ok(layout.report())
}

fn csv_to_markdown(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut out = format!("| {} |\n|{}\n", headers.join(" | "), "---|".repeat(headers.len()));
    for row in r.records() {
        let row = row?;
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if c.contains('.') && v != 0.0 && v.abs() < 1e-2 => format!("{v:.3e}"),
                Ok(v) if c.contains('.') => format!("{v:.4}"),
                _ => c.to_string(),
            })
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    Ok(out)
}

pub fn cmd_synth(path: &Path, cfg: &SyntheticConfig) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    ingest::write_station_file(path, &synthetic::generate(cfg).records)?;
    Ok(())
}

/// SHA-256 of every file under `root`, keyed by relative path, skipping
/// any path that starts with one of `exclude`.
pub fn digest_tree(root: &Path, exclude: &[&str]) -> Result<BTreeMap<String, String>> {
    fn walk(dir: &Path, root: &Path, exclude: &[&str], out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let path = e.path();
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if exclude.iter().any(|x| rel.starts_with(x)) {
                continue;
            }
            if path.is_dir() {
                walk(&path, root, exclude, out)?;
            } else {
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&path)?)));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, exclude, &mut out)?;
    Ok(out)
}
