//! Experiment configuration: a flat TOML file whose keys can all be
//! overridden from the command line, plus the per-command run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fieldrecon::bench::{BenchConfig, Ladder};
use fieldrecon::hpo::BoBudget;
use fieldrecon::methods::{Method, MethodContext};
use fieldrecon::metrics::Metric;
use fieldrecon::CoordinateSystem;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Consolidated observation CSV.
    pub data: Option<PathBuf>,
    /// Output directory. Not part of the manifest: moving a run does not
    /// change what it computed.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Distance used by IDW.
    pub coord: CoordinateSystem,
    pub n_dates: usize,
    pub min_valid: usize,
    /// Overrides the per-method number of random initial trials.
    pub n_initial: Option<usize>,
    /// Overrides the per-method number of guided trials.
    pub n_iterations: Option<usize>,
    pub metrics: Vec<Metric>,
    pub alpha: f64,
    pub ladder: Ladder,
    /// Explicit benchmark sizes; replaces the ladder when set.
    pub sizes: Option<Vec<usize>>,
    pub repetitions: usize,
    pub warmup: usize,
    pub inr_epochs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("fieldrecon-out"),
            seed: 0,
            methods: Method::ALL.to_vec(),
            coord: CoordinateSystem::Euclidean,
            n_dates: fieldrecon::ingest::N_DATES,
            min_valid: fieldrecon::ingest::MIN_VALID_PER_DATE,
            n_initial: None,
            n_iterations: None,
            metrics: Metric::ALL.to_vec(),
            alpha: 0.05,
            ladder: Ladder::Small,
            sizes: None,
            repetitions: 10,
            warmup: 1,
            inr_epochs: fieldrecon::inr::EPOCHS,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(invalid("methods: at least one method is required"));
        }
        if has_duplicates(&self.methods) {
            return Err(invalid("methods: listed twice"));
        }
        if self.metrics.is_empty() || has_duplicates(&self.metrics) {
            return Err(invalid("metrics: need a non-empty list without repeats"));
        }
        if self.n_dates == 0 {
            return Err(invalid("n_dates: must be at least 1"));
        }
        if self.n_initial == Some(0) {
            return Err(invalid("n_initial: must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha: {} is not in (0, 1)", self.alpha)));
        }
        self.bench().validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    pub fn budget(&self, method: Method) -> BoBudget {
        let d = BoBudget::for_method(method);
        BoBudget {
            n_initial: self.n_initial.unwrap_or(d.n_initial),
            n_iterations: self.n_iterations.unwrap_or(d.n_iterations),
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            sizes: self.sizes.clone().unwrap_or_else(|| self.ladder.sizes()),
            repetitions: self.repetitions,
            warmup: self.warmup,
            seed: self.seed,
        }
    }

    pub fn method_context(&self, seed: u64) -> MethodContext {
        MethodContext {
            coord: self.coord,
            seed,
            inr_epochs: self.inr_epochs,
        }
    }

    /// SHA-256 of the canonical JSON form of everything except `out`.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, x)| v[..i].contains(x))
}

/// Command-line values that replace configuration keys of the same name.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Experiment configuration file (flat TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated method tags: idw, ok, mmgn.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// euclidean or geographic.
    #[arg(long)]
    pub coord: Option<String>,
    #[arg(long)]
    pub n_dates: Option<usize>,
    #[arg(long)]
    pub min_valid: Option<usize>,
    #[arg(long)]
    pub n_initial: Option<usize>,
    #[arg(long)]
    pub n_iterations: Option<usize>,
    /// Comma-separated: rmse, mae, r2, delta_max.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// small or large.
    #[arg(long)]
    pub ladder: Option<String>,
    /// Comma-separated benchmark sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub inr_epochs: Option<usize>,
}

impl Overrides {
    /// Loads the config file (if any), applies the overrides and validates.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let parse = |e: fieldrecon::Error| invalid(e.to_string());
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.methods {
            c.methods = v.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(parse)?;
        }
        if let Some(v) = &self.coord {
            c.coord = v.parse().map_err(parse)?;
        }
        if let Some(v) = self.n_dates {
            c.n_dates = v;
        }
        if let Some(v) = self.min_valid {
            c.min_valid = v;
        }
        if let Some(v) = self.n_initial {
            c.n_initial = Some(v);
        }
        if let Some(v) = self.n_iterations {
            c.n_iterations = Some(v);
        }
        if let Some(v) = &self.metrics {
            c.metrics = v.iter().map(|s| Metric::parse(s)).collect::<Result<_, _>>().map_err(parse)?;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = &self.ladder {
            c.ladder = v.parse().map_err(parse)?;
            if self.sizes.is_none() {
                c.sizes = None;
            }
        }
        if let Some(v) = &self.sizes {
            c.sizes = Some(v.clone());
        }
        if let Some(v) = self.repetitions {
            c.repetitions = v;
        }
        if let Some(v) = self.warmup {
            c.warmup = v;
        }
        if let Some(v) = self.inr_epochs {
            c.inr_epochs = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.budget(Method::Mmgn), BoBudget { n_initial: 50, n_iterations: 200 });
        assert_eq!(c.bench().sizes, Ladder::Small.sizes());
    }

    #[test]
    fn parses_flat_toml() {
        let c = ExperimentConfig::from_toml(
            r#"
            # comment
            data = "obs.csv"
            seed = 3
            methods = ["idw", "ok"]
            coord = "geographic"
            n_initial = 10
            n_iterations = 20
            metrics = ["mae", "delta_max"]
            sizes = [10, 100]
            repetitions = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.methods, [Method::Idw, Method::Ok]);
        assert_eq!(c.coord, CoordinateSystem::Geographic);
        assert_eq!(c.budget(Method::Ok), BoBudget { n_initial: 10, n_iterations: 20 });
        assert_eq!(c.metrics, [Metric::Mae, Metric::DeltaMax]);
        assert_eq!(c.bench().sizes, [10, 100]);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("sed = 1").is_err());
        assert!(ExperimentConfig::from_toml("methods = [\"rbf\"]").is_err());
        let bad = [
            ExperimentConfig { methods: vec![], ..Default::default() },
            ExperimentConfig { methods: vec![Method::Idw, Method::Idw], ..Default::default() },
            ExperimentConfig { alpha: 1.5, ..Default::default() },
            ExperimentConfig { repetitions: 2, ..Default::default() },
            ExperimentConfig { sizes: Some(vec![100, 10]), ..Default::default() },
            ExperimentConfig { n_initial: Some(0), ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(CliError::Validation(_))), "{c:?}");
        }
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 3\nrepetitions = 5\nladder = \"large\"\n").unwrap();
        let o = Overrides {
            config: Some(path),
            seed: Some(9),
            methods: Some(vec!["idw".into()]),
            ladder: Some("small".into()),
            ..Default::default()
        };
        let c = o.resolve().unwrap();
        assert_eq!((c.seed, c.repetitions, c.ladder), (9, 5, Ladder::Small));
        assert_eq!(c.methods, [Method::Idw]);
        let bad = Overrides { coord: Some("polar".into()), ..Default::default() };
        assert!(matches!(bad.resolve(), Err(CliError::Validation(_))));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig { out: "x".into(), ..Default::default() };
        let b = ExperimentConfig { out: "y".into(), ..Default::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), ExperimentConfig { seed: 1, ..Default::default() }.hash());
    }
}
