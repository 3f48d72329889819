//! Reconstruction benchmark: wall time and resident-memory growth of the
//! reconstruct call over uniform random target sets of increasing size.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{bounding_box, ClimatePointCloud, QueryPoint};
use crate::error::{Error, Result};
use crate::hpo::derive_seed;
use crate::stats::quantile;
use crate::Reconstructor;

pub const SMALL_LADDER: [usize; 7] = [10, 100, 500, 1_000, 2_000, 5_000, 10_000];
pub const LARGE_LADDER: [usize; 9] = [100, 500, 1_000, 5_000, 10_000, 50_000, 100_000, 500_000, 1_000_000];
pub const SAMPLE_INTERVAL: Duration = Duration::from_millis(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ladder {
    Small,
    Large,
}

impl Ladder {
    pub fn sizes(self) -> Vec<usize> {
        match self {
            Ladder::Small => SMALL_LADDER.to_vec(),
            Ladder::Large => LARGE_LADDER.to_vec(),
        }
    }
}

impl std::str::FromStr for Ladder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Ladder::Small),
            "large" => Ok(Ladder::Large),
            other => Err(Error::param("ladder", format!("expected `small` or `large`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: SMALL_LADDER.to_vec(),
            repetitions: 10,
            warmup: 1,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes[0] == 0 {
            return Err(Error::param("sizes", "need at least one positive size"));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("sizes", format!("{:?} is not strictly increasing", self.sizes)));
        }
        if self.repetitions < 3 {
            return Err(Error::param("repetitions", "at least 3 are needed for intervals"));
        }
        Ok(())
    }
}

/// `m` targets uniform over the bounding box of `pc`.
pub fn sample_targets(pc: &ClimatePointCloud, m: usize, seed: u64) -> Vec<QueryPoint> {
    let bb = bounding_box(pc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let lat = rng.random_range(bb.lat_min..=bb.lat_max);
            let lon = rng.random_range(bb.lon_min..=bb.lon_max);
            QueryPoint::new(lat, lon).expect("inside a valid bounding box")
        })
        .collect()
}

/// Resident set size in bytes, from `/proc/self/status`.
pub fn resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Background sampler tracking the peak resident size until stopped.
pub struct MemoryWatermark {
    stop: Arc<AtomicBool>,
    peak: Arc<AtomicU64>,
    baseline: u64,
    handle: Option<thread::JoinHandle<()>>,
}

impl MemoryWatermark {
    pub fn start() -> Self {
        let baseline = resident_bytes().unwrap_or(0);
        let stop = Arc::new(AtomicBool::new(false));
        let peak = Arc::new(AtomicU64::new(baseline));
        let handle = {
            let (stop, peak) = (stop.clone(), peak.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    if let Some(r) = resident_bytes() {
                        peak.fetch_max(r, Ordering::Relaxed);
                    }
                    thread::sleep(SAMPLE_INTERVAL);
                }
            })
        };
        Self {
            stop,
            peak,
            baseline,
            handle: Some(handle),
        }
    }

    /// Stops sampling and returns the growth over the baseline in bytes.
    pub fn finish(mut self) -> u64 {
        if let Some(r) = resident_bytes() {
            self.peak.fetch_max(r, Ordering::Relaxed);
        }
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        self.peak.load(Ordering::Relaxed).saturating_sub(self.baseline)
    }
}

impl Drop for MemoryWatermark {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub trial: usize,
    pub seconds: f64,
    pub peak_bytes: u64,
    pub failed: bool,
    /// Date whose training split served as the reconstruction nodes.
    pub date: String,
}

/// A fitted model together with the nodes it was fitted on.
pub struct BenchSubject<'a> {
    pub method: String,
    pub date: String,
    pub cloud: &'a ClimatePointCloud,
    pub model: &'a dyn Reconstructor,
}

/// Times one reconstruct call; only the call itself is inside the timed and
/// sampled region.
pub fn measure(model: &dyn Reconstructor, targets: &[QueryPoint]) -> (Result<Vec<f64>>, f64, u64) {
    let watermark = MemoryWatermark::start();
    let t0 = Instant::now();
    let out = model.reconstruct(targets);
    let seconds = t0.elapsed().as_secs_f64().max(1e-9);
    let peak = watermark.finish();
    (out, seconds, peak)
}

fn target_seed(seed: u64, date: &str, m: usize, trial: usize) -> u64 {
    let date_key = date.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
    derive_seed(seed ^ date_key, ((m as u64) << 20) | trial as u64)
}

/// Runs every (subject, size, repetition) cell in order on a single worker
/// thread and hands each record to `sink` as soon as it is measured. Targets
/// depend only on the seed, the date, the size and the repetition, so all
/// methods on one date see the same target sets.
pub fn run_bench(
    cfg: &BenchConfig,
    subjects: &[BenchSubject<'_>],
    mut sink: impl FnMut(&BenchRecord) -> Result<()> + Send,
) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InsufficientData(format!("cannot start benchmark thread: {e}")))?;
    pool.install(|| {
        let mut records = Vec::new();
        for s in subjects {
            for &m in &cfg.sizes {
                for w in 0..cfg.warmup {
                    let targets = sample_targets(s.cloud, m, target_seed(cfg.seed, &s.date, m, usize::MAX - w));
                    let _ = s.model.reconstruct(&targets);
                }
                for trial in 0..cfg.repetitions {
                    let targets = sample_targets(s.cloud, m, target_seed(cfg.seed, &s.date, m, trial));
                    let (out, seconds, peak) = measure(s.model, &targets);
                    let failed = match &out {
                        Ok(v) => v.len() != m,
                        Err(e) => {
                            log::warn!("bench {} M={m} trial {trial}: {e}", s.method);
                            true
                        }
                    };
                    let rec = BenchRecord {
                        method: s.method.clone(),
                        m,
                        trial,
                        seconds: if failed { f64::NAN } else { seconds },
                        peak_bytes: if failed { 0 } else { peak },
                        failed,
                        date: s.date.clone(),
                    };
                    sink(&rec)?;
                    records.push(rec);
                }
            }
        }
        Ok(records)
    })
}

/// Append-only CSV sink that flushes after every record.
pub struct RecordWriter {
    writer: csv::Writer<File>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            writer: csv::Writer::from_path(path)?,
        })
    }

    /// Opens for appending; writes the header only when the file is new.
    pub fn append(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: csv::WriterBuilder::new().has_headers(fresh).from_writer(file),
        })
    }

    pub fn write(&mut self, r: &BenchRecord) -> Result<()> {
        self.writer.serialize(r)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<BenchRecord>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub method: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    pub n_failed: usize,
    pub time_median: f64,
    pub time_p025: f64,
    pub time_p975: f64,
    pub mem_median: f64,
    pub mem_p025: f64,
    pub mem_p975: f64,
}

/// Median and 2.5/97.5 percentiles per (method, M), pooled over dates and
/// repetitions. Groups are reported in first-seen order.
pub fn summarize_bench(records: &[BenchRecord]) -> Vec<BenchSummary> {
    let mut keys: Vec<(&str, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.method.as_str(), r.m)) {
            keys.push((r.method.as_str(), r.m));
        }
    }
    keys.into_iter()
        .map(|(method, m)| {
            let cell: Vec<&BenchRecord> = records.iter().filter(|r| r.method == method && r.m == m).collect();
            let ok: Vec<&&BenchRecord> = cell.iter().filter(|r| !r.failed).collect();
            let times: Vec<f64> = ok.iter().map(|r| r.seconds).collect();
            let mems: Vec<f64> = ok.iter().map(|r| r.peak_bytes as f64).collect();
            let q = |v: &[f64], p: f64| if v.is_empty() { f64::NAN } else { quantile(v, p) };
            BenchSummary {
                method: method.to_string(),
                m,
                n: ok.len(),
                n_failed: cell.len() - ok.len(),
                time_median: q(&times, 0.5),
                time_p025: q(&times, 0.025),
                time_p975: q(&times, 0.975),
                mem_median: q(&mems, 0.5),
                mem_p025: q(&mems, 0.025),
                mem_p975: q(&mems, 0.975),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, summary: &[BenchSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotQuantity {
    Time,
    Memory,
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Log-log SVG of the median with a shaded 95% band per method. Memory
/// values are floored at one byte so zero growth stays on the axis.
pub fn plot_svg(summary: &[BenchSummary], quantity: PlotQuantity) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 480.0, 80.0, 150.0, 30.0, 60.0);
    let pick = |s: &BenchSummary| match quantity {
        PlotQuantity::Time => (s.time_p025, s.time_median, s.time_p975),
        PlotQuantity::Memory => (s.mem_p025.max(1.0), s.mem_median.max(1.0), s.mem_p975.max(1.0)),
    };
    let finite: Vec<&BenchSummary> = summary.iter().filter(|s| pick(s).1.is_finite()).collect();
    let ys: Vec<f64> = finite.iter().flat_map(|s| [pick(s).0, pick(s).2]).filter(|v| *v > 0.0).collect();
    let xs: Vec<f64> = finite.iter().map(|s| s.m as f64).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        if lo.is_finite() && hi.is_finite() { (lo, hi.max(lo + 1.0)) } else { (0.0, 1.0) }
    };
    let (x0, x1) = span(&xs);
    let (y0, y1) = span(&ys);
    let px = |x: f64| left + (x.log10() - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y.log10() - y0) / (y1 - y0) * (h - top - bottom);
    let label = match quantity {
        PlotQuantity::Time => "reconstruction time [s]",
        PlotQuantity::Memory => "peak memory growth [bytes]",
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-x-scale="log" data-y-scale="log">"#
    );
    let _ = writeln!(svg, "<desc>x-scale: log; y-scale: log; quantity: {label}</desc>");
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (ax0, ay1) = (left, h - bottom);
    let _ = writeln!(
        svg,
        r#"<path d="M{ax0} {top} V{ay1} H{}" stroke="black" fill="none"/>"#,
        w - right
    );
    for e in (x0 as i32)..=(x1 as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" font-size="12" text-anchor="middle">1e{e}</text>"#, ay1 + 18.0);
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{ax0}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">1e{e}</text>"##,
            w - right,
            ax0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">M (targets)</text>"#, (left + w - right) / 2.0, h - 15.0);
    let _ = writeln!(
        svg,
        r#"<text transform="translate(20 {:.1}) rotate(-90)" font-size="13" text-anchor="middle">{label}</text>"#,
        (top + h - bottom) / 2.0
    );

    let mut methods: Vec<&str> = Vec::new();
    for s in &finite {
        if !methods.contains(&s.method.as_str()) {
            methods.push(&s.method);
        }
    }
    for (i, method) in methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<&&BenchSummary> = finite.iter().filter(|s| s.method == *method).collect();
        pts.sort_by_key(|s| s.m);
        let upper: Vec<String> = pts.iter().map(|s| format!("{:.1},{:.1}", px(s.m as f64), py(pick(s).2))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|s| format!("{:.1},{:.1}", px(s.m as f64), py(pick(s).0))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts.iter().map(|s| format!("{:.1},{:.1}", px(s.m as f64), py(pick(s).1))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}" font-size="13">{method}</text>"#,
            w - right + 15.0,
            w - right + 40.0,
            w - right + 46.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
