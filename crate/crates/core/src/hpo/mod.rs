//! Bayesian hyper-parameter search over mixed real, integer and categorical
//! spaces, minimizing a scalar objective (validation MAE in the pipeline).

mod gp;

use std::fmt;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, matern52, Gp};

use crate::error::{Error, Result};
use crate::kriging::VariogramFamily;
use crate::methods::Method;

pub const N_CANDIDATES: usize = 1024;
pub const N_PERTURBATIONS: usize = 128;
const PERTURBATION_SD: f64 = 0.05;
const CATEGORY_FLIP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamKind {
    Real { lo: f64, hi: f64 },
    /// Sampled and encoded on a log scale.
    RealLog { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    name: String,
    kind: ParamKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Result<Self> {
        let name = name.into();
        let ok = match &kind {
            ParamKind::Real { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            ParamKind::RealLog { lo, hi } => *lo > 0.0 && hi.is_finite() && lo < hi,
            ParamKind::Integer { lo, hi } => lo <= hi,
            ParamKind::Categorical(c) => c.len() >= 2,
        };
        if !ok {
            return Err(Error::param(&name, format!("invalid domain {kind:?}")));
        }
        Ok(Self { name, kind })
    }

    pub fn real(name: &str, lo: f64, hi: f64) -> Result<Self> {
        Self::new(name, ParamKind::Real { lo, hi })
    }

    pub fn real_log(name: &str, lo: f64, hi: f64) -> Result<Self> {
        Self::new(name, ParamKind::RealLog { lo, hi })
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Result<Self> {
        Self::new(name, ParamKind::Integer { lo, hi })
    }

    pub fn categorical<S: ToString>(name: &str, choices: &[S]) -> Result<Self> {
        Self::new(name, ParamKind::Categorical(choices.iter().map(|c| c.to_string()).collect()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ParamKind::Real { .. } | ParamKind::RealLog { .. })
    }

    fn encoded_len(&self) -> usize {
        match &self.kind {
            ParamKind::Categorical(c) => c.len(),
            _ => 1,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match &self.kind {
            ParamKind::Real { lo, hi } => ParamValue::Real(rng.random_range(*lo..=*hi)),
            ParamKind::RealLog { lo, hi } => ParamValue::Real(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi)),
            ParamKind::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamKind::Categorical(c) => ParamValue::Cat(c[rng.random_range(0..c.len())].clone()),
        }
    }

    fn encode(&self, v: &ParamValue, out: &mut Vec<f64>) {
        match (&self.kind, v) {
            (ParamKind::Real { lo, hi }, ParamValue::Real(x)) => out.push((x - lo) / (hi - lo)),
            (ParamKind::RealLog { lo, hi }, ParamValue::Real(x)) => out.push((x.ln() - lo.ln()) / (hi.ln() - lo.ln())),
            (ParamKind::Integer { lo, hi }, ParamValue::Int(x)) => {
                out.push(if hi > lo { (x - lo) as f64 / (hi - lo) as f64 } else { 0.0 })
            }
            (ParamKind::Categorical(c), ParamValue::Cat(s)) => out.extend(c.iter().map(|o| f64::from(u8::from(o == s)))),
            _ => unreachable!("value {v:?} does not match {}", self.name),
        }
    }

    fn decode(&self, u: &[f64]) -> ParamValue {
        let t = u[0].clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Real { lo, hi } => ParamValue::Real(lo + t * (hi - lo)),
            ParamKind::RealLog { lo, hi } => ParamValue::Real((lo.ln() + t * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi)),
            ParamKind::Integer { lo, hi } => {
                ParamValue::Int((*lo as f64 + t * (hi - lo) as f64).round().clamp(*lo as f64, *hi as f64) as i64)
            }
            ParamKind::Categorical(c) => {
                let best = u
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, x)| if *x > u[b] { i } else { b });
                ParamValue::Cat(c[best].clone())
            }
        }
    }

    fn contains(&self, v: &ParamValue) -> bool {
        match (&self.kind, v) {
            (ParamKind::Real { lo, hi } | ParamKind::RealLog { lo, hi }, ParamValue::Real(x)) => (*lo..=*hi).contains(x),
            (ParamKind::Integer { lo, hi }, ParamValue::Int(x)) => (*lo..=*hi).contains(x),
            (ParamKind::Categorical(c), ParamValue::Cat(s)) => c.contains(s),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => f.write_str(v),
        }
    }
}

/// One value per parameter, in search-space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    entries: Vec<(String, ParamValue)>,
}

impl Assignment {
    pub fn new(entries: Vec<(String, ParamValue)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, ParamValue)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Result<&ParamValue> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::param(name, "missing from assignment"))
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        match self.get(name)? {
            ParamValue::Real(v) => Ok(*v),
            ParamValue::Int(v) => Ok(*v as f64),
            v => Err(Error::param(name, format!("expected a number, got {v}"))),
        }
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        match self.get(name)? {
            ParamValue::Int(v) => Ok(*v),
            v => Err(Error::param(name, format!("expected an integer, got {v}"))),
        }
    }

    pub fn cat(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            ParamValue::Cat(v) => Ok(v),
            v => Err(Error::param(name, format!("expected a category, got {v}"))),
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    method: Option<Method>,
    params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidParameter {
                name: "search space".into(),
                reason: "no parameters".into(),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::param(&p.name, "declared twice"));
            }
        }
        Ok(Self { method: None, params })
    }

    /// The tuning bounds used for each reconstruction method.
    pub fn for_method(method: Method) -> Self {
        let params = match method {
            Method::Idw => vec![
                ParamSpec::integer("k_neighbours", 1, 50),
                ParamSpec::real("power", 1e-7, 5.0),
            ],
            Method::Ok => vec![
                ParamSpec::integer("n_bins", 2, 50),
                ParamSpec::real_log("anisotropy_scale", 1e-5, 5.0),
                ParamSpec::categorical("coord", &["euclidean", "geographic"]),
                ParamSpec::categorical("family", &VariogramFamily::ALL.map(|f| f.name())),
            ],
            Method::Mmgn => vec![
                ParamSpec::real_log("learning_rate", 1e-5, 1e-2),
                ParamSpec::real("l2", 0.0, 0.1),
                ParamSpec::integer("batch_size", 32, 1024),
                ParamSpec::categorical("hidden_dim", &crate::inr::DIM_CHOICES),
                ParamSpec::categorical("latent_dim", &crate::inr::DIM_CHOICES),
                ParamSpec::integer("n_layers", 1, 10),
                ParamSpec::real("input_scale", 2.0, 1024.0),
                ParamSpec::real("alpha", 0.0, 100.0),
            ],
        };
        let params = params.into_iter().collect::<Result<Vec<_>>>().expect("static bounds are valid");
        Self {
            method: Some(method),
            params,
        }
    }

    pub fn method(&self) -> Option<Method> {
        self.method
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn encoded_dim(&self) -> usize {
        self.params.iter().map(ParamSpec::encoded_len).sum()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Assignment {
        Assignment::new(self.params.iter().map(|p| (p.name.clone(), p.sample(rng))).collect())
    }

    /// Maps an assignment into `[0, 1]^d`, with categoricals one-hot.
    pub fn encode(&self, a: &Assignment) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoded_dim());
        for (p, (_, v)) in self.params.iter().zip(&a.entries) {
            p.encode(v, &mut out);
        }
        out
    }

    pub fn decode(&self, u: &[f64]) -> Assignment {
        let mut offset = 0;
        let mut entries = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let w = p.encoded_len();
            entries.push((p.name.clone(), p.decode(&u[offset..offset + w])));
            offset += w;
        }
        Assignment::new(entries)
    }

    /// Checks names, order, types and bounds.
    pub fn validate(&self, a: &Assignment) -> Result<()> {
        if a.entries.len() != self.params.len() {
            return Err(Error::param("assignment", format!("expected {} parameters, got {}", self.params.len(), a.entries.len())));
        }
        for (p, (n, v)) in self.params.iter().zip(&a.entries) {
            if *n != p.name {
                return Err(Error::param(n, format!("expected `{}` at this position", p.name)));
            }
            if !p.contains(v) {
                return Err(Error::param(n, format!("{v} outside {:?}", p.kind)));
            }
        }
        Ok(())
    }

    /// Reads an assignment from a JSON object keyed by parameter name.
    pub fn assignment_from_json(&self, value: &serde_json::Value) -> Result<Assignment> {
        let obj = value.as_object().ok_or_else(|| Error::param("assignment", "expected a JSON object"))?;
        let mut entries = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let raw = obj.get(&p.name).ok_or_else(|| Error::param(&p.name, "missing"))?;
            let v = match (&p.kind, raw) {
                (ParamKind::Categorical(_), serde_json::Value::String(s)) => ParamValue::Cat(s.clone()),
                (ParamKind::Integer { .. }, v) => ParamValue::Int(v.as_i64().ok_or_else(|| Error::param(&p.name, "expected an integer"))?),
                (_, v) => ParamValue::Real(v.as_f64().ok_or_else(|| Error::param(&p.name, "expected a number"))?),
            };
            entries.push((p.name.clone(), v));
        }
        let a = Assignment::new(entries);
        self.validate(&a)?;
        Ok(a)
    }

    pub fn assignment_to_json(&self, a: &Assignment) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (n, v) in &a.entries {
            map.insert(n.clone(), serde_json::to_value(v).expect("plain values serialize"));
        }
        serde_json::Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

impl TrialStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub assignment: Assignment,
    /// `+∞` for failed trials.
    pub objective: f64,
    pub status: TrialStatus,
}

impl Trial {
    pub fn from_outcome(index: usize, assignment: Assignment, outcome: Result<f64>) -> Self {
        match outcome {
            Ok(v) if v.is_finite() => Self {
                index,
                assignment,
                objective: v,
                status: TrialStatus::Ok,
            },
            other => {
                if let Err(e) = other {
                    log::debug!("trial {index} ({assignment}) failed: {e}");
                }
                Self {
                    index,
                    assignment,
                    objective: f64::INFINITY,
                    status: TrialStatus::Failed,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoBudget {
    pub n_initial: usize,
    pub n_iterations: usize,
}

impl BoBudget {
    pub fn new(n_initial: usize, n_iterations: usize) -> Result<Self> {
        if n_initial == 0 {
            return Err(Error::param("n_initial", "must be at least 1"));
        }
        Ok(Self { n_initial, n_iterations })
    }

    pub fn for_method(method: Method) -> Self {
        let n_iterations = match method {
            Method::Idw | Method::Ok => 100,
            Method::Mmgn => 200,
        };
        Self { n_initial: 50, n_iterations }
    }

    pub fn total(&self) -> usize {
        self.n_initial + self.n_iterations
    }
}

/// Independent seed for the `stream`-th draw derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

pub fn sample_initial(space: &SearchSpace, n: usize, seed: u64) -> Vec<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| space.sample(&mut rng)).collect()
}

/// Next point by Expected Improvement under a GP fitted to the finite trials.
/// Falls back to a seeded random sample when the GP cannot be fitted.
pub fn propose_next(history: &[Trial], space: &SearchSpace, seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let finite: Vec<&Trial> = history.iter().filter(|t| t.objective.is_finite()).collect();
    let xs: Vec<Vec<f64>> = finite.iter().map(|t| space.encode(&t.assignment)).collect();
    let ys: Vec<f64> = finite.iter().map(|t| t.objective).collect();
    let Some(gp) = Gp::fit(&xs, &ys) else {
        return space.sample(&mut rng);
    };
    let (best_i, best_y) = ys
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, y)| if *y < b.1 { (i, *y) } else { b });

    let mut candidates: Vec<Assignment> = (0..N_CANDIDATES).map(|_| space.sample(&mut rng)).collect();
    let noise = Normal::new(0.0, PERTURBATION_SD).expect("positive sd");
    let incumbent = &xs[best_i];
    for _ in 0..N_PERTURBATIONS {
        let mut u = incumbent.clone();
        let mut offset = 0;
        for p in &space.params {
            let w = p.encoded_len();
            if w == 1 {
                u[offset] = (u[offset] + noise.sample(&mut rng)).clamp(0.0, 1.0);
            } else if rng.random_bool(CATEGORY_FLIP) {
                let pick = rng.random_range(0..w);
                for (j, x) in u[offset..offset + w].iter_mut().enumerate() {
                    *x = f64::from(u8::from(j == pick));
                }
            }
            offset += w;
        }
        candidates.push(space.decode(&u));
    }

    let mut best: Option<(f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let (m, s) = gp.predict(&space.encode(c));
        let ei = expected_improvement(m, s, best_y);
        if ei.is_finite() && best.is_none_or(|b| ei > b.0) {
            best = Some((ei, i));
        }
    }
    match best {
        Some((_, i)) => candidates.swap_remove(i),
        None => space.sample(&mut rng),
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

impl TuneResult {
    pub fn best_so_far(&self) -> Vec<f64> {
        best_so_far(&self.history)
    }
}

pub fn best_so_far(history: &[Trial]) -> Vec<f64> {
    history
        .iter()
        .scan(f64::INFINITY, |b, t| {
            *b = b.min(t.objective);
            Some(*b)
        })
        .collect()
}

/// Runs `budget.n_initial` random trials followed by `budget.n_iterations`
/// GP-guided ones. Objective errors become failed trials.
pub fn tune(
    space: &SearchSpace,
    budget: BoBudget,
    seed: u64,
    mut objective: impl FnMut(&Assignment) -> Result<f64>,
) -> TuneResult {
    let mut history = Vec::with_capacity(budget.total());
    for a in sample_initial(space, budget.n_initial, derive_seed(seed, 0)) {
        let outcome = objective(&a);
        history.push(Trial::from_outcome(history.len(), a, outcome));
    }
    for i in 0..budget.n_iterations {
        let a = propose_next(&history, space, derive_seed(seed, 1 + i as u64));
        let outcome = objective(&a);
        history.push(Trial::from_outcome(history.len(), a, outcome));
    }
    // The first minimum wins, so ties keep the earliest trial.
    let best = history
        .iter()
        .fold(None::<&Trial>, |b, t| match b {
            Some(b) if b.objective <= t.objective => Some(b),
            _ => Some(t),
        })
        .expect("at least one trial")
        .clone();
    TuneResult { best, history }
}

/// Writes one row per trial: parameters, objective, status, trial index.
pub fn write_history(path: &Path, space: &SearchSpace, history: &[Trial]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = space.params.iter().map(|p| p.name()).collect();
    header.extend(["objective", "status", "trial_index"]);
    w.write_record(&header)?;
    for t in history {
        let mut row: Vec<String> = t.assignment.entries.iter().map(|(_, v)| v.to_string()).collect();
        row.push(t.objective.to_string());
        row.push(t.status.name().into());
        row.push(t.index.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub param: String,
    /// `counts.len() + 1` edges in parameter units.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histograms of the sampled values of each continuous parameter, with
/// log-spaced bins for log-scaled parameters.
pub fn histograms(space: &SearchSpace, history: &[Trial], n_bins: usize) -> Vec<Histogram> {
    let n_bins = n_bins.max(1);
    space
        .params
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (lo, hi, log) = match p.kind {
                ParamKind::Real { lo, hi } => (lo, hi, false),
                ParamKind::RealLog { lo, hi } => (lo.ln(), hi.ln(), true),
                _ => return None,
            };
            let width = (hi - lo) / n_bins as f64;
            let mut counts = vec![0; n_bins];
            for t in history {
                if let ParamValue::Real(v) = t.assignment.entries[i].1 {
                    let x = if log { v.ln() } else { v };
                    let b = (((x - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
                    counts[b] += 1;
                }
            }
            let edges = (0..=n_bins)
                .map(|j| {
                    let e = lo + j as f64 * width;
                    if log { e.exp() } else { e }
                })
                .collect();
            Some(Histogram {
                param: p.name.clone(),
                edges,
                counts,
            })
        })
        .collect()
}
