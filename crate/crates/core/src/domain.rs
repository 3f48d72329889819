//! Observation points, query locations and the distance functions shared by
//! every reconstructor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Two points closer than this in both latitude and longitude are duplicates.
pub const DUPLICATE_TOLERANCE_DEG: f64 = 1e-9;

fn check_coordinate(lat: f64, lon: f64) -> Result<()> {
    if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
        Ok(())
    } else {
        Err(Error::InvalidCoordinate { lat, lon })
    }
}

/// A location without an observed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    lat: f64,
    lon: f64,
}

impl QueryPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        check_coordinate(lat, lon)?;
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// One station observation: latitude, longitude (degrees) and temperature (°C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimatePoint {
    lat: f64,
    lon: f64,
    value: f64,
}

impl ClimatePoint {
    pub fn new(lat: f64, lon: f64, value: f64) -> Result<Self> {
        check_coordinate(lat, lon)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { lat, lon, value });
        }
        Ok(Self { lat, lon, value })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn location(&self) -> QueryPoint {
        QueryPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// A non-empty set of observations with pairwise distinct coordinates.
///
/// The points double as reconstruction nodes for every method.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimatePointCloud {
    points: Vec<ClimatePoint>,
}

impl ClimatePointCloud {
    pub fn new(points: Vec<ClimatePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some((first, second)) = find_duplicate(&points) {
            return Err(Error::DuplicateCoordinate {
                lat: points[second].lat,
                lon: points[second].lon,
                first,
                second,
            });
        }
        Ok(Self { points })
    }

    /// Builds a cloud from `(lat, lon, value)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        let points = triples
            .iter()
            .map(|&(lat, lon, value)| ClimatePoint::new(lat, lon, value))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ClimatePoint] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Option<&ClimatePoint> {
        self.points.get(index)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn locations(&self) -> Vec<QueryPoint> {
        self.points.iter().map(ClimatePoint::location).collect()
    }
}

/// Returns the lowest-index duplicate pair `(i, j)` with `i < j`, if any.
fn find_duplicate(points: &[ClimatePoint]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].lat.total_cmp(&points[b].lat).then(a.cmp(&b)));
    let mut best: Option<(usize, usize)> = None;
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if points[b].lat - points[a].lat > DUPLICATE_TOLERANCE_DEG {
                break;
            }
            if (points[b].lon - points[a].lon).abs() <= DUPLICATE_TOLERANCE_DEG {
                let pair = (a.min(b), a.max(b));
                if best.is_none_or(|cur| pair < cur) {
                    best = Some(pair);
                }
            }
        }
    }
    best
}

/// How distances between locations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateSystem {
    /// Planar distance with degrees as units, no projection.
    Euclidean,
    /// Great-circle distance in kilometres on a sphere of radius [`EARTH_RADIUS_KM`].
    Geographic,
}

impl CoordinateSystem {
    pub const ALL: [CoordinateSystem; 2] = [CoordinateSystem::Euclidean, CoordinateSystem::Geographic];

    pub fn name(self) -> &'static str {
        match self {
            CoordinateSystem::Euclidean => "euclidean",
            CoordinateSystem::Geographic => "geographic",
        }
    }

    /// Distance between two `(lat, lon)` pairs in this system's unit.
    #[inline]
    pub fn between(self, lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
        match self {
            CoordinateSystem::Euclidean => (lat_a - lat_b).hypot(lon_a - lon_b),
            CoordinateSystem::Geographic => haversine_km(lat_a, lon_a, lat_b, lon_b),
        }
    }
}

impl fmt::Display for CoordinateSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoordinateSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(CoordinateSystem::Euclidean),
            "geographic" => Ok(CoordinateSystem::Geographic),
            other => Err(Error::param("coord", format!("unknown coordinate system `{other}`"))),
        }
    }
}

/// Great-circle distance in kilometres (haversine formula).
#[inline]
pub fn haversine_km(lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
    let phi_a = lat_a.to_radians();
    let phi_b = lat_b.to_radians();
    let half_dphi = 0.5 * (phi_b - phi_a);
    let half_dlambda = 0.5 * (lon_b - lon_a).to_radians();
    let h = half_dphi.sin().powi(2) + phi_a.cos() * phi_b.cos() * half_dlambda.sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn distance(a: QueryPoint, b: QueryPoint, cs: CoordinateSystem) -> f64 {
    cs.between(a.lat, a.lon, b.lat, b.lon)
}

/// Tight axis-aligned box around a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.lat_min + self.lat_max),
            0.5 * (self.lon_min + self.lon_max),
        )
    }
}

pub fn bounding_box(pc: &ClimatePointCloud) -> BoundingBox {
    let first = pc.points[0];
    pc.points.iter().skip(1).fold(
        BoundingBox {
            lat_min: first.lat,
            lat_max: first.lat,
            lon_min: first.lon,
            lon_max: first.lon,
        },
        |b, p| BoundingBox {
            lat_min: b.lat_min.min(p.lat),
            lat_max: b.lat_max.max(p.lat),
            lon_min: b.lon_min.min(p.lon),
            lon_max: b.lon_max.max(p.lon),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(lat: f64, lon: f64) -> QueryPoint {
        QueryPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn euclidean_three_four_five() {
        assert_eq!(distance(q(0.0, 0.0), q(3.0, 4.0), CoordinateSystem::Euclidean), 5.0);
    }

    #[test]
    fn geographic_identity_and_antipode() {
        assert_eq!(distance(q(0.0, 0.0), q(0.0, 0.0), CoordinateSystem::Geographic), 0.0);
        let d = distance(q(0.0, 0.0), q(0.0, 180.0), CoordinateSystem::Geographic);
        // Half the equator: h = sin²(π/2) = 1, so d = 2R·asin(1) = πR.
        assert!((d - std::f64::consts::PI * 6371.0).abs() < 1e-9, "{d}");
        assert!((d - 20015.1).abs() < 0.1);
    }

    #[test]
    fn one_degree_of_latitude() {
        let d = distance(q(10.0, 20.0), q(11.0, 20.0), CoordinateSystem::Geographic);
        assert!((d - 6371.0 * std::f64::consts::PI / 180.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_and_nan() {
        assert!(matches!(QueryPoint::new(91.0, 0.0), Err(Error::InvalidCoordinate { .. })));
        assert!(matches!(QueryPoint::new(0.0, -180.5), Err(Error::InvalidCoordinate { .. })));
        assert!(matches!(ClimatePoint::new(0.0, 0.0, f64::NAN), Err(Error::NonFiniteValue { .. })));
        assert!(matches!(ClimatePoint::new(0.0, 0.0, f64::INFINITY), Err(Error::NonFiniteValue { .. })));
    }

    #[test]
    fn rejects_duplicates_deterministically() {
        let err = ClimatePointCloud::from_triples(&[
            (1.0, 1.0, 0.0),
            (5.0, 5.0, 1.0),
            (1.0, 1.0 + 1e-10, 2.0),
            (5.0, 5.0, 3.0),
        ])
        .unwrap_err();
        match err {
            Error::DuplicateCoordinate { first, second, .. } => assert_eq!((first, second), (0, 2)),
            other => panic!("unexpected {other:?}"),
        }
        // Just outside the tolerance is fine.
        assert!(ClimatePointCloud::from_triples(&[(1.0, 1.0, 0.0), (1.0, 1.0 + 1e-8, 0.0)]).is_ok());
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(matches!(ClimatePointCloud::new(vec![]), Err(Error::EmptyCloud)));
    }

    #[test]
    fn bounding_box_examples() {
        let single = ClimatePointCloud::from_triples(&[(0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(
            bounding_box(&single),
            BoundingBox { lat_min: 0.0, lat_max: 0.0, lon_min: 0.0, lon_max: 0.0 }
        );
        let pair = ClimatePointCloud::from_triples(&[(1.0, 2.0, 0.0), (3.0, -1.0, 0.0)]).unwrap();
        assert_eq!(
            bounding_box(&pair),
            BoundingBox { lat_min: 1.0, lat_max: 3.0, lon_min: -1.0, lon_max: 2.0 }
        );
    }

    #[test]
    fn coordinate_system_parses() {
        assert_eq!("Geographic".parse::<CoordinateSystem>().unwrap(), CoordinateSystem::Geographic);
        assert!("polar".parse::<CoordinateSystem>().is_err());
    }

    fn arb_query() -> impl Strategy<Value = QueryPoint> {
        (-89.0..89.0f64, -179.0..179.0f64).prop_map(|(a, b)| q(a, b))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in arb_query(), b in arb_query(), c in arb_query()) {
            for cs in CoordinateSystem::ALL {
                let ab = distance(a, b, cs);
                let ba = distance(b, a, cs);
                let bc = distance(b, c, cs);
                let ac = distance(a, c, cs);
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
                prop_assert!(distance(a, a, cs) == 0.0);
                prop_assert!(ac <= ab + bc + 1e-9 * (1.0 + ac));
            }
        }

        #[test]
        fn box_contains_every_point(pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 100)) {
            let triples: Vec<_> = pts.iter().map(|&(a, b)| (a, b, 0.0)).collect();
            if let Ok(pc) = ClimatePointCloud::from_triples(&triples) {
                let bb = bounding_box(&pc);
                prop_assert!(bb.lat_min >= -5.0 && bb.lat_max <= 5.0);
                prop_assert!(bb.lon_min >= -5.0 && bb.lon_max <= 5.0);
                for p in pc.points() {
                    prop_assert!(bb.contains(p.lat(), p.lon()));
                }
                // Tight: each bound is attained.
                prop_assert!(pc.points().iter().any(|p| p.lat() == bb.lat_min));
                prop_assert!(pc.points().iter().any(|p| p.lon() == bb.lon_max));
            }
        }
    }
}
