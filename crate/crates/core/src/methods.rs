//! Method tags and the glue from a tuned assignment to a fitted model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{ClimatePointCloud, CoordinateSystem};
use crate::error::{Error, Result};
use crate::hpo::{self, Assignment, BoBudget, SearchSpace, TuneResult};
use crate::idw::{IdwModel, IdwParams};
use crate::inr::{self, InrParams};
use crate::kriging::{KrigingModel, KrigingParams};
use crate::Reconstructor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Idw,
    Ok,
    Mmgn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Idw, Method::Ok, Method::Mmgn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Idw => "idw",
            Method::Ok => "ok",
            Method::Mmgn => "mmgn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "idw" => Ok(Method::Idw),
            "ok" | "kriging" => Ok(Method::Ok),
            "mmgn" | "inr" => Ok(Method::Mmgn),
            other => Err(Error::param("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Settings that are fixed per experiment rather than tuned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodContext {
    /// Distance used by IDW; kriging tunes its own.
    pub coord: CoordinateSystem,
    pub seed: u64,
    pub inr_epochs: usize,
}

impl Default for MethodContext {
    fn default() -> Self {
        Self {
            coord: CoordinateSystem::Euclidean,
            seed: 0,
            inr_epochs: inr::EPOCHS,
        }
    }
}

pub fn idw_params(a: &Assignment) -> Result<IdwParams> {
    let k = usize::try_from(a.int("k_neighbours")?).map_err(|_| Error::param("k_neighbours", "negative"))?;
    IdwParams::new(k, a.real("power")?)
}

pub fn kriging_params(a: &Assignment) -> Result<KrigingParams> {
    let n_bins = usize::try_from(a.int("n_bins")?).map_err(|_| Error::param("n_bins", "negative"))?;
    KrigingParams::new(
        n_bins,
        a.real("anisotropy_scale")?,
        a.cat("coord")?.parse()?,
        a.cat("family")?.parse()?,
    )
}

pub fn inr_params(a: &Assignment) -> Result<InrParams> {
    let count = |name: &str| -> Result<usize> {
        let v = match a.get(name)? {
            hpo::ParamValue::Cat(s) => s.parse::<i64>().map_err(|_| Error::param(name, format!("`{s}` is not an integer")))?,
            _ => a.int(name)?,
        };
        usize::try_from(v).map_err(|_| Error::param(name, "negative"))
    };
    let p = InrParams {
        learning_rate: a.real("learning_rate")?,
        l2: a.real("l2")?,
        batch_size: count("batch_size")?,
        hidden_dim: count("hidden_dim")?,
        latent_dim: count("latent_dim")?,
        n_layers: count("n_layers")?,
        input_scale: a.real("input_scale")?,
        alpha: a.real("alpha")?,
    };
    p.validate()?;
    Ok(p)
}

/// Fits `method` on `train`. The network additionally uses `val` to pick its
/// best epoch; the other methods ignore it.
pub fn build(
    method: Method,
    a: &Assignment,
    train: &ClimatePointCloud,
    val: &ClimatePointCloud,
    ctx: &MethodContext,
) -> Result<Box<dyn Reconstructor>> {
    Ok(match method {
        Method::Idw => Box::new(IdwModel::new(train.clone(), idw_params(a)?, ctx.coord)),
        Method::Ok => Box::new(KrigingModel::fit(train, kriging_params(a)?)?),
        Method::Mmgn => Box::new(inr::train_for(train, val, &inr_params(a)?, ctx.seed, ctx.inr_epochs)?.model),
    })
}

pub fn validation_mae(
    method: Method,
    a: &Assignment,
    train: &ClimatePointCloud,
    val: &ClimatePointCloud,
    ctx: &MethodContext,
) -> Result<f64> {
    let model = build(method, a, train, val, ctx)?;
    let pred = model.reconstruct(&val.locations())?;
    let obs = val.values();
    Ok(pred.iter().zip(&obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / obs.len() as f64)
}

/// Tunes `method` on the validation MAE of models fitted to `train`.
pub fn tune_method(
    method: Method,
    train: &ClimatePointCloud,
    val: &ClimatePointCloud,
    budget: BoBudget,
    ctx: &MethodContext,
) -> TuneResult {
    let space = SearchSpace::for_method(method);
    hpo::tune(&space, budget, ctx.seed, |a| validation_mae(method, a, train, val, ctx))
}
