//! Rank-based comparison of metric distributions across methods:
//! Kruskal–Wallis omnibus test, Dunn post-hoc pairs with Holm–Bonferroni
//! adjustment, and the matching effect sizes (rank η² and rank-biserial r).

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricSet};

/// One metric observed across samples, grouped by method.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSamples {
    labels: Vec<String>,
    groups: Vec<Vec<f64>>,
}

impl MetricSamples {
    pub fn new(labels: Vec<String>, groups: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != groups.len() {
            return Err(Error::param("groups", "one label per group required"));
        }
        if groups.len() < 2 {
            return Err(Error::InsufficientData("at least two groups required".into()));
        }
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::InsufficientData("every group needs at least one sample".into()));
        }
        if groups.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("groups", "samples must be finite"));
        }
        Ok(Self { labels, groups })
    }

    /// Unlabelled groups, named `g0`, `g1`, ...
    pub fn from_groups(groups: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..groups.len()).map(|i| format!("g{i}")).collect();
        Self::new(labels, groups)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Average ranks (1-based) of `values`, and the sizes of tied runs.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j share the mean of ranks i+1..=j.
        let rank = 0.5 * ((i + 1) + j) as f64;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Pooled ranks split back into per-group mean ranks.
fn joint_mean_ranks(groups: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let mut offset = 0;
    let means = groups
        .iter()
        .map(|g| {
            let m = ranks[offset..offset + g.len()].iter().sum::<f64>() / g.len() as f64;
            offset += g.len();
            m
        })
        .collect();
    (means, ties)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5 * df, 0.5 * x)
    }
}

/// Two-sided tail probability of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Rank η² for `k` groups of `n_per_group` samples each.
pub fn eta_squared(h: f64, k: usize, n_per_group: usize) -> f64 {
    (h - k as f64 + 1.0) / ((k * n_per_group) as f64 - k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmnibusResult {
    pub h: f64,
    pub p_value: f64,
    pub group_sizes: Vec<usize>,
}

impl OmnibusResult {
    pub fn k(&self) -> usize {
        self.group_sizes.len()
    }

    /// Effect size; defined only for equal group sizes.
    pub fn eta_squared(&self) -> Result<f64> {
        let n = self.group_sizes[0];
        if self.group_sizes.iter().any(|&s| s != n) {
            return Err(Error::UnequalGroups { sizes: self.group_sizes.clone() });
        }
        Ok(eta_squared(self.h, self.k(), n))
    }
}

pub fn kruskal_wallis(ms: &MetricSamples) -> Result<OmnibusResult> {
    let n = ms.total();
    if n < 3 {
        return Err(Error::InsufficientData(format!("Kruskal-Wallis needs at least 3 samples, got {n}")));
    }
    let (mean_ranks, ties) = joint_mean_ranks(&ms.groups);
    let nf = n as f64;
    let sum: f64 = ms.groups.iter().zip(&mean_ranks).map(|(g, r)| g.len() as f64 * r * r).sum();
    let raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
    let correction = 1.0 - ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * nf * nf - nf);
    // All values tied: no evidence of any difference.
    let h = if correction > 0.0 { (raw / correction).max(0.0) } else { 0.0 };
    let df = (ms.groups.len() - 1) as f64;
    Ok(OmnibusResult {
        h,
        p_value: chi_square_sf(h, df),
        group_sizes: ms.groups.iter().map(Vec::len).collect(),
    })
}

/// Holm–Bonferroni step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (step, &i) in order.iter().enumerate() {
        running = running.max(((m - step) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    adjusted
}

/// `2·(R̄₁ − R̄₂)/(n₁ + n₂)` with the two groups ranked jointly.
pub fn rank_biserial(group1: &[f64], group2: &[f64]) -> f64 {
    let (means, _) = joint_mean_ranks(&[group1.to_vec(), group2.to_vec()]);
    2.0 * (means[0] - means[1]) / (group1.len() + group2.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairComparison {
    pub group_a: String,
    pub group_b: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub rank_biserial: f64,
}

/// Dunn's test over all `k(k−1)/2` pairs, ordered `(0,1), (0,2), …, (1,2), …`.
pub fn dunn_posthoc(ms: &MetricSamples) -> Vec<PairComparison> {
    let n = ms.total() as f64;
    let (mean_ranks, ties) = joint_mean_ranks(&ms.groups);
    let tie_term = if n > 1.0 {
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (12.0 * (n - 1.0))
    } else {
        0.0
    };
    let spread = n * (n + 1.0) / 12.0 - tie_term;
    let k = ms.groups.len();
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let (ni, nj) = (ms.groups[i].len() as f64, ms.groups[j].len() as f64);
            let se = (spread * (1.0 / ni + 1.0 / nj)).sqrt();
            let z = if se > 0.0 { (mean_ranks[i] - mean_ranks[j]) / se } else { 0.0 };
            pairs.push(PairComparison {
                group_a: ms.labels[i].clone(),
                group_b: ms.labels[j].clone(),
                z,
                p_raw: normal_two_sided_p(z),
                p_adjusted: 0.0,
                rank_biserial: rank_biserial(&ms.groups[i], &ms.groups[j]),
            });
        }
    }
    let adjusted = holm_adjust(&pairs.iter().map(|p| p.p_raw).collect::<Vec<_>>());
    for (pair, adj) in pairs.iter_mut().zip(adjusted) {
        pair.p_adjusted = adj;
    }
    pairs
}

/// Quantile with linear interpolation between order statistics at
/// position `q·(n−1)`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl GroupSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub summaries: Vec<GroupSummary>,
    pub omnibus: OmnibusResult,
    pub significant: bool,
    /// Empty unless the omnibus test is significant.
    pub posthoc: Vec<PairComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub metrics: Vec<MetricComparison>,
}

/// Compares methods on each metric. `results[m]` holds the per-sample
/// metric sets of method `labels[m]`; samples with an undefined value
/// (e.g. R² on constant observations) are dropped for that metric.
pub fn compare_methods(
    labels: &[String],
    results: &[Vec<MetricSet>],
    metrics: &[Metric],
    alpha: f64,
) -> Result<ComparisonReport> {
    if labels.len() < 2 || labels.len() != results.len() {
        return Err(Error::InsufficientData("at least two labelled methods required".into()));
    }
    if let Some(short) = results.iter().position(|r| r.len() < 3) {
        return Err(Error::InsufficientData(format!(
            "method `{}` has {} samples, at least 3 required",
            labels[short],
            results[short].len()
        )));
    }
    let mut out = Vec::with_capacity(metrics.len());
    for &metric in metrics {
        let groups: Vec<Vec<f64>> = results
            .iter()
            .map(|r| r.iter().map(|m| m.get(metric)).filter(|v| v.is_finite()).collect())
            .collect();
        let ms = MetricSamples::new(labels.to_vec(), groups)?;
        let omnibus = kruskal_wallis(&ms)?;
        let significant = omnibus.p_value < alpha;
        let summaries = ms
            .labels
            .iter()
            .zip(&ms.groups)
            .map(|(label, g)| GroupSummary {
                label: label.clone(),
                n: g.len(),
                median: quantile(g, 0.5),
                q1: quantile(g, 0.25),
                q3: quantile(g, 0.75),
            })
            .collect();
        out.push(MetricComparison {
            metric,
            summaries,
            significant,
            posthoc: if significant { dunn_posthoc(&ms) } else { Vec::new() },
            omnibus,
        });
    }
    Ok(ComparisonReport { alpha, metrics: out })
}

impl ComparisonReport {
    /// Writes `summary.csv` (median/IQR per metric × method),
    /// `omnibus.csv` (H, p, η² per metric) and `posthoc.csv` (one row per
    /// metric × pair).
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record(["metric", "method", "n", "median", "iqr", "q1", "q3"])?;
        for m in &self.metrics {
            for s in &m.summaries {
                w.write_record([
                    m.metric.name().to_string(),
                    s.label.clone(),
                    s.n.to_string(),
                    s.median.to_string(),
                    s.iqr().to_string(),
                    s.q1.to_string(),
                    s.q3.to_string(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("omnibus.csv"))?;
        w.write_record(["metric", "h", "p_value", "eta_squared", "significant"])?;
        for m in &self.metrics {
            let eta = m.omnibus.eta_squared().map(|e| e.to_string()).unwrap_or_default();
            w.write_record([
                m.metric.name().to_string(),
                m.omnibus.h.to_string(),
                m.omnibus.p_value.to_string(),
                eta,
                m.significant.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("posthoc.csv"))?;
        w.write_record(["metric", "group_a", "group_b", "z", "p_raw", "p_holm", "rank_biserial", "significant"])?;
        for m in &self.metrics {
            for p in &m.posthoc {
                w.write_record([
                    m.metric.name().to_string(),
                    p.group_a.clone(),
                    p.group_b.clone(),
                    p.z.to_string(),
                    p.p_raw.to_string(),
                    p.p_adjusted.to_string(),
                    p.rank_biserial.to_string(),
                    (p.p_adjusted < self.alpha).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for m in &self.metrics {
            let _ = writeln!(s, "== {} ==", m.metric.name());
            for g in &m.summaries {
                let _ = writeln!(s, "  {:<8} {:>10.4} ± {:<10.4} (n = {})", g.label, g.median, g.iqr(), g.n);
            }
            let eta = m
                .omnibus
                .eta_squared()
                .map(|e| format!("{e:.2}"))
                .unwrap_or_else(|_| "n/a".into());
            let _ = writeln!(
                s,
                "  Kruskal-Wallis H = {:.2}, p = {:.3e}, eta^2 = {eta}{}",
                m.omnibus.h,
                m.omnibus.p_value,
                if m.significant { " (significant)" } else { "" }
            );
            for p in &m.posthoc {
                let _ = writeln!(
                    s,
                    "    {} vs {}: z = {:.3}, p_holm = {:.3e}, r = {:.2}",
                    p.group_a, p.group_b, p.z, p.p_adjusted, p.rank_biserial
                );
            }
        }
        s
    }
}
