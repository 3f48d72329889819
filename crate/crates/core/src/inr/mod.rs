//! Implicit neural representation: a multiplicative Gabor coordinate network
//! trained by mini-batch gradient descent on min-max normalized data.

mod network;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use network::{GaborLayer, GaborNet, NetworkShape, IN_DIM};

use crate::domain::{ClimatePointCloud, QueryPoint};
use crate::error::{Error, Result};
use crate::Reconstructor;

pub const EPOCHS: usize = 500;
pub const DIM_CHOICES: [usize; 6] = [32, 64, 128, 256, 512, 1024];
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-5, 1e-2);
pub const L2_RANGE: (f64, f64) = (0.0, 0.1);
pub const BATCH_RANGE: (usize, usize) = (32, 1024);
pub const LAYERS_RANGE: (usize, usize) = (1, 10);
pub const INPUT_SCALE_RANGE: (f64, f64) = (2.0, 1024.0);
pub const ALPHA_RANGE: (f64, f64) = (0.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InrParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub n_layers: usize,
    pub input_scale: f64,
    pub alpha: f64,
}

fn check_real(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} outside [{lo}, {hi}]")))
    }
}

fn check_int(name: &str, v: usize, (lo, hi): (usize, usize)) -> Result<()> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} outside [{lo}, {hi}]")))
    }
}

impl InrParams {
    pub fn validate(&self) -> Result<()> {
        check_real("learning_rate", self.learning_rate, LEARNING_RATE_RANGE)?;
        check_real("l2", self.l2, L2_RANGE)?;
        check_int("batch_size", self.batch_size, BATCH_RANGE)?;
        check_int("n_layers", self.n_layers, LAYERS_RANGE)?;
        check_real("input_scale", self.input_scale, INPUT_SCALE_RANGE)?;
        check_real("alpha", self.alpha, ALPHA_RANGE)?;
        for (name, d) in [("hidden_dim", self.hidden_dim), ("latent_dim", self.latent_dim)] {
            if !DIM_CHOICES.contains(&d) {
                return Err(Error::param(name, format!("{d} not in {DIM_CHOICES:?}")));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape {
            hidden: self.hidden_dim,
            latent: self.latent_dim,
            layers: self.n_layers,
        }
    }
}

/// Per-axis min-max maps onto `[-1, 1]` fitted on the training split.
///
/// A constant axis maps to 0, and a constant value range maps every
/// prediction back to that constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub lat: (f64, f64),
    pub lon: (f64, f64),
    pub value: (f64, f64),
}

fn norm(x: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        2.0 * (x - lo) / (hi - lo) - 1.0
    } else {
        0.0
    }
}

fn denorm(u: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        lo + 0.5 * (u + 1.0) * (hi - lo)
    } else {
        lo
    }
}

impl NormalizationState {
    pub fn fit(pc: &ClimatePointCloud) -> Self {
        let span = |f: &dyn Fn(&crate::ClimatePoint) -> f64| {
            pc.points().iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        Self {
            lat: span(&|p| p.lat()),
            lon: span(&|p| p.lon()),
            value: span(&|p| p.value()),
        }
    }

    pub fn coord(&self, lat: f64, lon: f64) -> [f64; 2] {
        [norm(lat, self.lat), norm(lon, self.lon)]
    }

    pub fn value(&self, v: f64) -> f64 {
        norm(v, self.value)
    }

    pub fn denormalize_value(&self, u: f64) -> f64 {
        denorm(u, self.value)
    }

    pub fn denormalize_coord(&self, c: [f64; 2]) -> (f64, f64) {
        (denorm(c[0], self.lat), denorm(c[1], self.lon))
    }
}

/// A trained network together with its normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InrModel {
    params: InrParams,
    normalization: NormalizationState,
    net: GaborNet,
}

const CHECKPOINT_FORMAT: &str = "fieldrecon-inr";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: InrModel,
}

impl InrModel {
    pub fn params(&self) -> &InrParams {
        &self.params
    }

    pub fn normalization(&self) -> &NormalizationState {
        &self.normalization
    }

    pub fn network(&self) -> &GaborNet {
        &self.net
    }

    /// Writes a self-describing JSON checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_vec(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format {} v{}", ckpt.format, ckpt.version)));
        }
        let m = ckpt.model;
        let net = GaborNet::from_parts(m.net.shape(), m.net.params().to_vec(), m.net.gamma().to_vec())
            .ok_or_else(|| Error::Checkpoint("weights do not match the stored shape".into()))?;
        Ok(Self { net, ..m })
    }
}

impl Reconstructor for InrModel {
    fn reconstruct(&self, targets: &[QueryPoint]) -> Result<Vec<f64>> {
        Ok(targets
            .par_iter()
            .map(|t| {
                let x = self.normalization.coord(t.lat(), t.lon());
                self.normalization.denormalize_value(self.net.forward(x))
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedInr {
    pub model: InrModel,
    /// Validation MAE (°C) after each epoch.
    pub val_mae: Vec<f64>,
    /// Mean training loss (normalized units) per epoch.
    pub train_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Trains with the fixed epoch budget.
pub fn inr_train(train: &ClimatePointCloud, val: &ClimatePointCloud, params: &InrParams, seed: u64) -> Result<TrainedInr> {
    params.validate()?;
    train_for(train, val, params, seed, EPOCHS)
}

/// As [`inr_train`] but with an explicit epoch count and without checking
/// `params` against the tuning bounds. Meant for tests and small experiments.
pub fn train_for(
    train: &ClimatePointCloud,
    val: &ClimatePointCloud,
    params: &InrParams,
    seed: u64,
    epochs: usize,
) -> Result<TrainedInr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normalization = NormalizationState::fit(train);
    let net = GaborNet::init(params.shape(), params.input_scale, params.alpha, &mut rng);
    let mut model = InrModel { params: *params, normalization, net };

    let xs: Vec<[f64; 2]> = train.points().iter().map(|p| normalization.coord(p.lat(), p.lon())).collect();
    let ts: Vec<f64> = train.points().iter().map(|p| normalization.value(p.value())).collect();
    let val_targets = val.locations();
    let val_values = val.values();

    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; model.net.params().len()];
    let mut bx = Vec::with_capacity(params.batch_size);
    let mut bt = Vec::with_capacity(params.batch_size);
    let mut best: Option<(f64, usize, GaborNet)> = None;
    let mut val_mae = Vec::with_capacity(epochs);
    let mut train_loss = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(params.batch_size.max(1)) {
            bx.clear();
            bt.clear();
            bx.extend(chunk.iter().map(|&i| xs[i]));
            bt.extend(chunk.iter().map(|&i| ts[i]));
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.net.accumulate(&bx, &bt, params.l2, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            for (p, g) in model.net.params_mut().iter_mut().zip(&grad) {
                *p -= params.learning_rate * g;
            }
            loss_sum += loss;
            n_batches += 1;
        }
        train_loss.push(loss_sum / n_batches as f64);

        let pred = model.reconstruct(&val_targets)?;
        let mae = pred.iter().zip(&val_values).map(|(p, v)| (p - v).abs()).sum::<f64>() / val_values.len().max(1) as f64;
        if !mae.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        val_mae.push(mae);
        if best.as_ref().is_none_or(|(b, _, _)| mae < *b) {
            best = Some((mae, epoch, model.net.clone()));
        }
    }

    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, mut net)) = best {
        net.relayout();
        model.net = net;
    }
    Ok(TrainedInr { model, val_mae, train_loss, best_epoch })
}

pub fn inr_reconstruct(model: &InrModel, targets: &[QueryPoint]) -> Result<Vec<f64>> {
    model.reconstruct(targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_params() -> InrParams {
        InrParams {
            learning_rate: 1e-3,
            l2: 0.0,
            batch_size: 32,
            hidden_dim: 32,
            latent_dim: 32,
            n_layers: 2,
            input_scale: 4.0,
            alpha: 1.0,
        }
    }

    fn field(n: usize, seed: u64, f: impl Fn(f64, f64) -> f64) -> ClimatePointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples: Vec<_> = (0..n)
            .map(|_| {
                let (a, b) = (rng.random_range(45.0..55.0), rng.random_range(0.0..20.0));
                (a, b, f(a, b))
            })
            .collect();
        ClimatePointCloud::from_triples(&triples).unwrap()
    }

    #[test]
    fn validates_bounds() {
        assert!(small_params().validate().is_ok());
        let bad = [
            InrParams { learning_rate: 0.1, ..small_params() },
            InrParams { l2: 0.2, ..small_params() },
            InrParams { batch_size: 16, ..small_params() },
            InrParams { hidden_dim: 48, ..small_params() },
            InrParams { latent_dim: 2048, ..small_params() },
            InrParams { n_layers: 11, ..small_params() },
            InrParams { input_scale: 1.0, ..small_params() },
            InrParams { alpha: 101.0, ..small_params() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn normalization_round_trip() {
        let pc = field(20, 1, |a, b| a - b);
        let n = NormalizationState::fit(&pc);
        for p in pc.points() {
            let [x, y] = n.coord(p.lat(), p.lon());
            assert!((-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y));
            let (lat, lon) = n.denormalize_coord([x, y]);
            assert!((lat - p.lat()).abs() < 1e-12 && (lon - p.lon()).abs() < 1e-12);
            assert!((n.denormalize_value(n.value(p.value())) - p.value()).abs() < 1e-12);
        }
        let lo = pc.points().iter().map(|p| p.value()).fold(f64::INFINITY, f64::min);
        assert_eq!(n.value(lo), -1.0);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let pc = field(40, 2, |a, _| a);
        let p = small_params();
        let trained = train_for(&pc, &pc, &p, 9, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fresh = GaborNet::init(p.shape(), p.input_scale, p.alpha, &mut rng);
        assert_eq!(trained.model.network().params(), fresh.params());
        assert!(trained.val_mae.is_empty());
    }

    #[test]
    fn constant_field_predicts_constant() {
        let pc = field(50, 3, |_, _| 7.5);
        let trained = train_for(&pc, &pc, &small_params(), 0, 5).unwrap();
        let pred = trained.model.reconstruct(&pc.locations()).unwrap();
        assert!(pred.iter().all(|v| (v - 7.5).abs() < 0.1));
    }

    #[test]
    fn deterministic_given_seed() {
        let pc = field(60, 4, |a, b| (a / 3.0).sin() + b / 10.0);
        let a = train_for(&pc, &pc, &small_params(), 17, 3).unwrap();
        let b = train_for(&pc, &pc, &small_params(), 17, 3).unwrap();
        assert_eq!(a.model.network().params(), b.model.network().params());
        assert_eq!(a.val_mae, b.val_mae);
        let c = train_for(&pc, &pc, &small_params(), 18, 3).unwrap();
        assert_ne!(a.model.network().params(), c.model.network().params());
    }

    #[test]
    fn training_reduces_loss_on_smooth_field() {
        let pc = field(120, 5, |a, b| 10.0 + 0.5 * (a - 50.0) - 0.2 * (b - 10.0));
        let p = InrParams { n_layers: 1, ..small_params() };
        let trained = train_for(&pc, &pc, &p, 1, 100).unwrap();
        let first = trained.train_loss[0];
        let last = *trained.train_loss.last().unwrap();
        assert!(last < first, "{first} -> {last}");
        // The returned snapshot is the best validation epoch.
        let best = trained.val_mae.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(trained.val_mae[trained.best_epoch.unwrap()], best);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let pc = field(64, 6, |a, b| 100.0 * (a - b));
        let p = InrParams { learning_rate: 1e6, input_scale: 50.0, ..small_params() };
        assert!(matches!(train_for(&pc, &pc, &p, 0, 50), Err(Error::Divergence { .. })));
    }

    #[test]
    fn batching_invariance() {
        let pc = field(30, 7, |a, b| a * b / 100.0);
        let model = train_for(&pc, &pc, &small_params(), 2, 2).unwrap().model;
        let targets = pc.locations();
        let all = model.reconstruct(&targets).unwrap();
        for (t, v) in targets.iter().zip(&all) {
            let one = model.reconstruct(std::slice::from_ref(t)).unwrap();
            assert!((one[0] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let pc = field(30, 8, |a, b| a - 2.0 * b);
        let model = train_for(&pc, &pc, &small_params(), 4, 2).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = InrModel::load(&path).unwrap();
        let targets = pc.locations();
        let a = model.reconstruct(&targets).unwrap();
        let b = loaded.reconstruct(&targets).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }

        fs::write(&path, r#"{"format":"other","version":1}"#).unwrap();
        assert!(InrModel::load(&path).is_err());
    }
}
