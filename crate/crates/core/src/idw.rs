//! Inverse distance weighting over the k nearest nodes.

use rayon::prelude::*;

use crate::domain::{ClimatePointCloud, CoordinateSystem, QueryPoint};
use crate::error::{Error, Result};
use crate::spatial::KdIndex;
use crate::Reconstructor;

pub const K_RANGE: (usize, usize) = (1, 50);
pub const POWER_RANGE: (f64, f64) = (1e-7, 5.0);

/// Neighbours closer than this (in the active distance unit) are returned as-is.
pub const COINCIDENCE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdwParams {
    k_neighbours: usize,
    power: f64,
}

impl IdwParams {
    pub fn new(k_neighbours: usize, power: f64) -> Result<Self> {
        if !(K_RANGE.0..=K_RANGE.1).contains(&k_neighbours) {
            return Err(Error::param("k_neighbours", format!("{k_neighbours} outside [1, 50]")));
        }
        if !(POWER_RANGE.0..=POWER_RANGE.1).contains(&power) {
            return Err(Error::param("power", format!("{power} outside [1e-7, 5]")));
        }
        Ok(Self { k_neighbours, power })
    }

    pub fn k_neighbours(&self) -> usize {
        self.k_neighbours
    }

    pub fn power(&self) -> f64 {
        self.power
    }
}

/// Evaluates one target from its `(node index, distance)` neighbours.
fn weighted_mean(values: &[f64], neighbours: impl IntoIterator<Item = (usize, f64)>, power: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, d) in neighbours {
        if d < COINCIDENCE_THRESHOLD {
            return values[i];
        }
        let w = d.powf(-power);
        num += w * values[i];
        den += w;
    }
    num / den
}

pub fn idw_reconstruct(
    pc: &ClimatePointCloud,
    idx: &KdIndex,
    params: IdwParams,
    targets: &[QueryPoint],
    cs: CoordinateSystem,
) -> Vec<f64> {
    let values = pc.values();
    targets
        .par_iter()
        .map(|&t| {
            let nn = idx.knn(t, params.k_neighbours, cs);
            // knn is sorted by (distance, index), so a coincident node with the
            // lowest index comes first.
            weighted_mean(&values, nn.iter().map(|n| (n.index, n.distance)), params.power)
        })
        .collect()
}

/// An IDW reconstructor bound to its nodes and index.
#[derive(Debug, Clone)]
pub struct IdwModel {
    cloud: ClimatePointCloud,
    index: KdIndex,
    params: IdwParams,
    cs: CoordinateSystem,
}

impl IdwModel {
    pub fn new(cloud: ClimatePointCloud, params: IdwParams, cs: CoordinateSystem) -> Self {
        let index = KdIndex::build(&cloud);
        Self { cloud, index, params, cs }
    }

    pub fn params(&self) -> IdwParams {
        self.params
    }
}

impl Reconstructor for IdwModel {
    fn reconstruct(&self, targets: &[QueryPoint]) -> Result<Vec<f64>> {
        Ok(idw_reconstruct(&self.cloud, &self.index, self.params, targets, self.cs))
    }
}
