//! Empirical semivariograms and the six parametric families.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariogramFamily {
    Linear,
    Power,
    Gaussian,
    Spherical,
    Exponential,
    HoleEffect,
}

impl VariogramFamily {
    pub const ALL: [VariogramFamily; 6] = [
        VariogramFamily::Linear,
        VariogramFamily::Power,
        VariogramFamily::Gaussian,
        VariogramFamily::Spherical,
        VariogramFamily::Exponential,
        VariogramFamily::HoleEffect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariogramFamily::Linear => "linear",
            VariogramFamily::Power => "power",
            VariogramFamily::Gaussian => "gaussian",
            VariogramFamily::Spherical => "spherical",
            VariogramFamily::Exponential => "exponential",
            VariogramFamily::HoleEffect => "hole-effect",
        }
    }

    /// Number of free parameters, nugget included.
    pub fn n_params(self) -> usize {
        match self {
            VariogramFamily::Linear => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for VariogramFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariogramFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::param("model_family", format!("unknown variogram family `{s}`")))
    }
}

/// A fitted semivariogram. `gamma(0) == nugget` for every family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FittedVariogram {
    Linear { nugget: f64, slope: f64 },
    Power { nugget: f64, scale: f64, exponent: f64 },
    Gaussian { nugget: f64, partial_sill: f64, range: f64 },
    Spherical { nugget: f64, partial_sill: f64, range: f64 },
    Exponential { nugget: f64, partial_sill: f64, range: f64 },
    HoleEffect { nugget: f64, partial_sill: f64, range: f64 },
}

impl FittedVariogram {
    pub fn family(&self) -> VariogramFamily {
        match self {
            FittedVariogram::Linear { .. } => VariogramFamily::Linear,
            FittedVariogram::Power { .. } => VariogramFamily::Power,
            FittedVariogram::Gaussian { .. } => VariogramFamily::Gaussian,
            FittedVariogram::Spherical { .. } => VariogramFamily::Spherical,
            FittedVariogram::Exponential { .. } => VariogramFamily::Exponential,
            FittedVariogram::HoleEffect { .. } => VariogramFamily::HoleEffect,
        }
    }

    pub fn nugget(&self) -> f64 {
        match *self {
            FittedVariogram::Linear { nugget, .. }
            | FittedVariogram::Power { nugget, .. }
            | FittedVariogram::Gaussian { nugget, .. }
            | FittedVariogram::Spherical { nugget, .. }
            | FittedVariogram::Exponential { nugget, .. }
            | FittedVariogram::HoleEffect { nugget, .. } => nugget,
        }
    }

    /// Builds a model from `(nugget, amplitude, shape)` where amplitude is the
    /// slope, power scale or partial sill and shape is the exponent or range
    /// (ignored for `Linear`).
    pub fn from_parts(family: VariogramFamily, nugget: f64, amplitude: f64, shape: f64) -> Self {
        match family {
            VariogramFamily::Linear => FittedVariogram::Linear { nugget, slope: amplitude },
            VariogramFamily::Power => FittedVariogram::Power { nugget, scale: amplitude, exponent: shape },
            VariogramFamily::Gaussian => FittedVariogram::Gaussian { nugget, partial_sill: amplitude, range: shape },
            VariogramFamily::Spherical => FittedVariogram::Spherical { nugget, partial_sill: amplitude, range: shape },
            VariogramFamily::Exponential => {
                FittedVariogram::Exponential { nugget, partial_sill: amplitude, range: shape }
            }
            VariogramFamily::HoleEffect => FittedVariogram::HoleEffect { nugget, partial_sill: amplitude, range: shape },
        }
    }

    /// Semivariance at lag `h ≥ 0`.
    #[inline]
    pub fn gamma(&self, h: f64) -> f64 {
        let (nugget, amplitude, shape) = self.parts();
        nugget + amplitude * unit_shape(self.family(), h, shape)
    }

    pub(crate) fn parts(&self) -> (f64, f64, f64) {
        match *self {
            FittedVariogram::Linear { nugget, slope } => (nugget, slope, 0.0),
            FittedVariogram::Power { nugget, scale, exponent } => (nugget, scale, exponent),
            FittedVariogram::Gaussian { nugget, partial_sill, range }
            | FittedVariogram::Spherical { nugget, partial_sill, range }
            | FittedVariogram::Exponential { nugget, partial_sill, range }
            | FittedVariogram::HoleEffect { nugget, partial_sill, range } => (nugget, partial_sill, range),
        }
    }
}

/// The family's shape with nugget 0 and unit amplitude.
///
/// Bounded families use the "practical range" convention: the exponential
/// and gaussian forms reach 95% of the sill at `h = range`.
#[inline]
pub(crate) fn unit_shape(family: VariogramFamily, h: f64, shape: f64) -> f64 {
    match family {
        VariogramFamily::Linear => h,
        VariogramFamily::Power => h.powf(shape),
        VariogramFamily::Gaussian => 1.0 - (-3.0 * h * h / (shape * shape)).exp(),
        VariogramFamily::Spherical => {
            if h <= shape {
                let t = h / shape;
                1.5 * t - 0.5 * t * t * t
            } else {
                1.0
            }
        }
        VariogramFamily::Exponential => 1.0 - (-3.0 * h / shape).exp(),
        VariogramFamily::HoleEffect => {
            let x = PI * h / shape;
            if x == 0.0 {
                0.0
            } else {
                1.0 - x.sin() / x
            }
        }
    }
}

/// Binned semivariances: `gamma[j]` is half the mean squared value
/// difference over the `counts[j]` pairs whose lag falls in bin `j`, and
/// `lags[j]` is the mean lag of those pairs. Empty bins are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    lags: Vec<f64>,
    gamma: Vec<f64>,
    counts: Vec<usize>,
}

impl EmpiricalVariogram {
    pub fn new(lags: Vec<f64>, gamma: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lags.len() != gamma.len() || lags.len() != counts.len() {
            return Err(Error::param("variogram", "lags, gamma and counts differ in length"));
        }
        if lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("variogram", "lags must be strictly increasing"));
        }
        if gamma.iter().any(|g| g.is_nan() || *g < 0.0) || counts.contains(&0) {
            return Err(Error::param("variogram", "bins need non-negative gamma and non-zero count"));
        }
        Ok(Self { lags, gamma, counts })
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_bins(&self) -> usize {
        self.lags.len()
    }
}

/// Builds the empirical variogram of `values` located at planar or
/// geographic `coords` (`[lat, lon]` each), using `lag(a, b)` for distance.
///
/// Bins are equal-width over `(0, h_max]`; a pair at exactly `h_max` falls in
/// the last bin and zero-lag pairs are skipped.
pub(crate) fn bin_pairs(
    coords: &[[f64; 2]],
    values: &[f64],
    n_bins: usize,
    lag: impl Fn(&[f64; 2], &[f64; 2]) -> f64,
) -> EmpiricalVariogram {
    let n = coords.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut h_max: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let h = lag(&coords[a], &coords[b]);
            h_max = h_max.max(h);
            pairs.push((h, values[a] - values[b]));
        }
    }
    let mut lag_sum = vec![0.0; n_bins];
    let mut sq_sum = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    if h_max > 0.0 {
        let width = h_max / n_bins as f64;
        for (h, diff) in pairs {
            if h <= 0.0 {
                continue;
            }
            let j = ((h / width).ceil() as usize).clamp(1, n_bins) - 1;
            lag_sum[j] += h;
            sq_sum[j] += diff * diff;
            counts[j] += 1;
        }
    }
    let mut out = EmpiricalVariogram {
        lags: Vec::new(),
        gamma: Vec::new(),
        counts: Vec::new(),
    };
    for j in 0..n_bins {
        if counts[j] > 0 {
            let c = counts[j] as f64;
            out.lags.push(lag_sum[j] / c);
            out.gamma.push(sq_sum[j] / (2.0 * c));
            out.counts.push(counts[j]);
        }
    }
    out
}
