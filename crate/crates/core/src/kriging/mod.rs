//! Ordinary kriging in variogram form.
//!
//! Fitting a [`KrigingModel`] standardizes the training cloud, bins an
//! empirical semivariogram, fits the requested family and factorizes the
//! full `(N+1)×(N+1)` system once. Each target then costs one pair of
//! triangular solves.

mod fit;
mod variogram;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::fit_variogram;
pub use variogram::{EmpiricalVariogram, FittedVariogram, VariogramFamily};

use crate::domain::{ClimatePointCloud, CoordinateSystem, QueryPoint};
use crate::error::{Error, Result};
use crate::Reconstructor;

pub const N_BINS_RANGE: (usize, usize) = (2, 50);
pub const ANISOTROPY_RANGE: (f64, f64) = (1e-5, 5.0);

/// Diagonal jitter tried once when the kriging matrix cannot be factorized.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingParams {
    n_bins: usize,
    anisotropy_scale: f64,
    coord: CoordinateSystem,
    family: VariogramFamily,
}

impl KrigingParams {
    pub fn new(n_bins: usize, anisotropy_scale: f64, coord: CoordinateSystem, family: VariogramFamily) -> Result<Self> {
        if !(N_BINS_RANGE.0..=N_BINS_RANGE.1).contains(&n_bins) {
            return Err(Error::param("n_bins", format!("{n_bins} outside [2, 50]")));
        }
        if !(ANISOTROPY_RANGE.0..=ANISOTROPY_RANGE.1).contains(&anisotropy_scale) {
            return Err(Error::param("anisotropy_scale", format!("{anisotropy_scale} outside [1e-5, 5]")));
        }
        Ok(Self { n_bins, anisotropy_scale, coord, family })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn anisotropy_scale(&self) -> f64 {
        self.anisotropy_scale
    }

    pub fn coord(&self) -> CoordinateSystem {
        self.coord
    }

    pub fn family(&self) -> VariogramFamily {
        self.family
    }
}

/// Affine maps between raw and model space.
///
/// Values are standardized to zero mean and unit population standard
/// deviation. Coordinates are min-max scaled per axis to `[-1, 1]` when
/// `scale_coords` is set (planar mode); geographic lags are computed on raw
/// degrees in kilometres, so there the coordinate map is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub value_mean: f64,
    pub value_std: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub scale_coords: bool,
}

fn to_unit(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        2.0 * (x - lo) / (hi - lo) - 1.0
    } else {
        0.0
    }
}

fn from_unit(u: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + 0.5 * (u + 1.0) * (hi - lo)
    } else {
        lo
    }
}

impl StandardizationParams {
    pub fn fit(pc: &ClimatePointCloud, scale_coords: bool) -> Result<Self> {
        if pc.len() < 2 {
            return Err(Error::InsufficientData("standardization needs at least two points".into()));
        }
        let n = pc.len() as f64;
        let mean = pc.points().iter().map(|p| p.value()).sum::<f64>() / n;
        let var = pc.points().iter().map(|p| (p.value() - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std.is_nan() || std <= 0.0 {
            return Err(Error::ConstantField);
        }
        let bb = crate::domain::bounding_box(pc);
        Ok(Self {
            value_mean: mean,
            value_std: std,
            lat_min: bb.lat_min,
            lat_max: bb.lat_max,
            lon_min: bb.lon_min,
            lon_max: bb.lon_max,
            scale_coords,
        })
    }

    pub fn forward_value(&self, v: f64) -> f64 {
        (v - self.value_mean) / self.value_std
    }

    pub fn inverse_value(&self, z: f64) -> f64 {
        z * self.value_std + self.value_mean
    }

    pub fn forward_coord(&self, lat: f64, lon: f64) -> [f64; 2] {
        if self.scale_coords {
            [to_unit(lat, self.lat_min, self.lat_max), to_unit(lon, self.lon_min, self.lon_max)]
        } else {
            [lat, lon]
        }
    }

    pub fn inverse_coord(&self, c: [f64; 2]) -> (f64, f64) {
        if self.scale_coords {
            (from_unit(c[0], self.lat_min, self.lat_max), from_unit(c[1], self.lon_min, self.lon_max))
        } else {
            (c[0], c[1])
        }
    }
}

/// A cloud in model space: `[lat, lon]` coordinates and values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledCloud {
    pub coords: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

impl ScaledCloud {
    /// The cloud as-is, without any transformation.
    pub fn raw(pc: &ClimatePointCloud) -> Self {
        Self {
            coords: pc.points().iter().map(|p| [p.lat(), p.lon()]).collect(),
            values: pc.values(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Standardizes values and, for planar distances, scales coordinates to `[-1, 1]`.
pub fn preprocess_ok(pc: &ClimatePointCloud, cs: CoordinateSystem) -> Result<(ScaledCloud, StandardizationParams)> {
    let params = StandardizationParams::fit(pc, cs == CoordinateSystem::Euclidean)?;
    let scaled = ScaledCloud {
        coords: pc.points().iter().map(|p| params.forward_coord(p.lat(), p.lon())).collect(),
        values: pc.points().iter().map(|p| params.forward_value(p.value())).collect(),
    };
    Ok((scaled, params))
}

/// Anisotropy only applies to planar distances.
fn effective_anisotropy(cs: CoordinateSystem, anisotropy_scale: f64) -> f64 {
    match cs {
        CoordinateSystem::Euclidean => anisotropy_scale,
        CoordinateSystem::Geographic => {
            if anisotropy_scale != 1.0 {
                debug!("anisotropy scaling {anisotropy_scale} ignored for geographic coordinates");
            }
            1.0
        }
    }
}

/// Lag between two model-space coordinates; planar lags stretch the
/// longitude axis by `anisotropy`.
#[inline]
fn lag(cs: CoordinateSystem, anisotropy: f64, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    match cs {
        CoordinateSystem::Euclidean => (a[0] - b[0]).hypot(anisotropy * (a[1] - b[1])),
        CoordinateSystem::Geographic => crate::domain::haversine_km(a[0], a[1], b[0], b[1]),
    }
}

pub fn empirical_variogram(
    cloud: &ScaledCloud,
    n_bins: usize,
    anisotropy_scale: f64,
    cs: CoordinateSystem,
) -> Result<EmpiricalVariogram> {
    if cloud.len() < 2 {
        return Err(Error::InsufficientData("a variogram needs at least two points".into()));
    }
    if n_bins == 0 {
        return Err(Error::param("n_bins", "must be positive"));
    }
    let aniso = effective_anisotropy(cs, anisotropy_scale);
    Ok(variogram::bin_pairs(&cloud.coords, &cloud.values, n_bins, |a, b| lag(cs, aniso, a, b)))
}

/// A factorized ordinary-kriging system over fixed nodes.
#[derive(Debug, Clone)]
pub struct OrdinaryKriging {
    coords: Vec<[f64; 2]>,
    values: Vec<f64>,
    variogram: FittedVariogram,
    cs: CoordinateSystem,
    anisotropy: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Solution of one kriging system.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingWeights {
    pub weights: Vec<f64>,
    pub lagrange: f64,
}

impl OrdinaryKriging {
    pub fn new(cloud: &ScaledCloud, variogram: FittedVariogram, cs: CoordinateSystem, anisotropy_scale: f64) -> Result<Self> {
        let n = cloud.len();
        if n < 2 {
            return Err(Error::InsufficientData("kriging needs at least two nodes".into()));
        }
        let anisotropy = effective_anisotropy(cs, anisotropy_scale);
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in i..n {
                let g = variogram.gamma(lag(cs, anisotropy, &cloud.coords[i], &cloud.coords[j]));
                a[(i, j)] = g;
                a[(j, i)] = g;
            }
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
        }
        let lu = match factorize(a.clone()) {
            Some(lu) => lu,
            None => {
                for i in 0..n {
                    a[(i, i)] += JITTER;
                }
                factorize(a).ok_or(Error::SingularSystem)?
            }
        };
        Ok(Self {
            coords: cloud.coords.clone(),
            values: cloud.values.clone(),
            variogram,
            cs,
            anisotropy,
            lu,
        })
    }

    pub fn variogram(&self) -> &FittedVariogram {
        &self.variogram
    }

    /// Solves for the weights of a model-space target.
    pub fn weights(&self, target: [f64; 2]) -> Result<KrigingWeights> {
        let n = self.coords.len();
        let mut rhs = DVector::<f64>::from_element(n + 1, 1.0);
        for (i, c) in self.coords.iter().enumerate() {
            rhs[i] = self.variogram.gamma(lag(self.cs, self.anisotropy, c, &target));
        }
        let sol = self.lu.solve(&rhs).ok_or(Error::SingularSystem)?;
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem);
        }
        Ok(KrigingWeights {
            weights: sol.as_slice()[..n].to_vec(),
            lagrange: sol[n],
        })
    }

    /// Predictions in model space.
    pub fn predict_scaled(&self, targets: &[[f64; 2]]) -> Result<Vec<f64>> {
        targets
            .par_iter()
            .map(|&t| {
                let w = self.weights(t)?;
                Ok(w.weights.iter().zip(&self.values).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

fn factorize(a: DMatrix<f64>) -> Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = a.lu();
    let n = lu.u().nrows();
    let u = lu.u();
    let scale = (0..n).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    // Reject exact or numerically zero pivots.
    let ok = (0..n).all(|i| {
        let p = u[(i, i)].abs();
        p.is_finite() && p > scale * 1e-15
    });
    ok.then_some(lu)
}

/// Runs ordinary kriging on an already-scaled cloud and maps predictions
/// back to physical units.
pub fn ok_reconstruct(
    cloud: &ScaledCloud,
    std: &StandardizationParams,
    variogram: FittedVariogram,
    targets: &[QueryPoint],
    cs: CoordinateSystem,
    anisotropy_scale: f64,
) -> Result<Vec<f64>> {
    let system = OrdinaryKriging::new(cloud, variogram, cs, anisotropy_scale)?;
    let scaled: Vec<[f64; 2]> = targets.iter().map(|t| std.forward_coord(t.lat(), t.lon())).collect();
    Ok(system
        .predict_scaled(&scaled)?
        .into_iter()
        .map(|z| std.inverse_value(z))
        .collect())
}

/// A fitted kriging reconstructor.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    params: KrigingParams,
    standardization: StandardizationParams,
    empirical: EmpiricalVariogram,
    system: OrdinaryKriging,
}

impl KrigingModel {
    pub fn fit(pc: &ClimatePointCloud, params: KrigingParams) -> Result<Self> {
        let (scaled, standardization) = preprocess_ok(pc, params.coord)?;
        let empirical = empirical_variogram(&scaled, params.n_bins, params.anisotropy_scale, params.coord)?;
        let variogram = fit_variogram(&empirical, params.family)?;
        let system = OrdinaryKriging::new(&scaled, variogram, params.coord, params.anisotropy_scale)?;
        Ok(Self { params, standardization, empirical, system })
    }

    pub fn params(&self) -> KrigingParams {
        self.params
    }

    pub fn variogram(&self) -> &FittedVariogram {
        self.system.variogram()
    }

    pub fn empirical(&self) -> &EmpiricalVariogram {
        &self.empirical
    }

    pub fn standardization(&self) -> &StandardizationParams {
        &self.standardization
    }
}

impl Reconstructor for KrigingModel {
    fn reconstruct(&self, targets: &[QueryPoint]) -> Result<Vec<f64>> {
        let std = &self.standardization;
        let scaled: Vec<[f64; 2]> = targets.iter().map(|t| std.forward_coord(t.lat(), t.lon())).collect();
        Ok(self
            .system
            .predict_scaled(&scaled)?
            .into_iter()
            .map(|z| std.inverse_value(z))
            .collect())
    }
}
