//! Smooth synthetic temperature fields for testing and desk-scale runs.
//!
//! Stations are fixed across dates. Each date's field is a latitude gradient
//! plus a handful of Gaussian bumps whose placement depends on the date.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{is_iso_date, is_leap, QualityFlag, StationRecord};

pub const MISSING_TENTHS: i32 = -9999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_dates: usize,
    pub n_stations: usize,
    pub seed: u64,
    pub first_date: String,
    /// Days between consecutive dates.
    pub date_step: u32,
    /// Probability that a record is reported missing.
    pub missing_fraction: f64,
    pub n_bumps: usize,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_dates: 5,
            n_stations: 600,
            seed: 0,
            first_date: "2001-03-01".into(),
            date_step: 37,
            missing_fraction: 0.02,
            n_bumps: 5,
            lat_range: (36.0, 70.0),
            lon_range: (-10.0, 40.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub lat: f64,
    pub lon: f64,
    pub amplitude: f64,
    pub width: f64,
}

/// Ground-truth field for one date.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField {
    pub base: f64,
    pub gradient: f64,
    pub lat0: f64,
    pub bumps: Vec<Bump>,
}

impl SyntheticField {
    pub fn value(&self, lat: f64, lon: f64) -> f64 {
        let mut v = self.base - self.gradient * (lat - self.lat0);
        for b in &self.bumps {
            let d2 = (lat - b.lat).powi(2) + (lon - b.lon).powi(2);
            v += b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp();
        }
        v
    }
}

/// Adds `days` to an ISO date.
pub fn add_days(date: &str, days: u32) -> String {
    assert!(is_iso_date(date), "invalid date {date}");
    let (mut y, mut m, mut d): (u32, u32, u32) = (date[..4].parse().unwrap(), date[5..7].parse().unwrap(), date[8..].parse().unwrap());
    for _ in 0..days {
        d += 1;
        let len = match m {
            4 | 6 | 9 | 11 => 30,
            2 if is_leap(y) => 29,
            2 => 28,
            _ => 31,
        };
        if d > len {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
    }
    format!("{y:04}-{m:02}-{d:02}")
}

pub struct SyntheticDataset {
    pub dates: Vec<String>,
    pub fields: Vec<SyntheticField>,
    pub records: Vec<StationRecord>,
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lat_lo, lat_hi) = cfg.lat_range;
    let (lon_lo, lon_hi) = cfg.lon_range;

    let mut stations: Vec<(f64, f64)> = Vec::with_capacity(cfg.n_stations);
    while stations.len() < cfg.n_stations {
        let s = (round_to(rng.random_range(lat_lo..lat_hi), 4), round_to(rng.random_range(lon_lo..lon_hi), 4));
        if !stations.contains(&s) {
            stations.push(s);
        }
    }

    let mut dates = Vec::with_capacity(cfg.n_dates);
    let mut fields = Vec::with_capacity(cfg.n_dates);
    let mut records = Vec::with_capacity(cfg.n_dates * cfg.n_stations);
    let mut date = cfg.first_date.clone();
    for _ in 0..cfg.n_dates {
        let field = SyntheticField {
            base: rng.random_range(10.0..25.0),
            gradient: rng.random_range(0.3..0.8),
            lat0: lat_lo,
            bumps: (0..cfg.n_bumps)
                .map(|_| Bump {
                    lat: rng.random_range(lat_lo..lat_hi),
                    lon: rng.random_range(lon_lo..lon_hi),
                    amplitude: rng.random_range(2.0..6.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    width: rng.random_range(3.0..8.0),
                })
                .collect(),
        };
        for (i, &(lat, lon)) in stations.iter().enumerate() {
            let missing = rng.random_bool(cfg.missing_fraction);
            records.push(StationRecord {
                station_id: format!("S{:05}", i + 1),
                lat,
                lon,
                date: date.clone(),
                value_tenths: if missing {
                    MISSING_TENTHS
                } else {
                    (field.value(lat, lon) * 10.0).round() as i32
                },
                qflag: if missing { QualityFlag::Missing } else { QualityFlag::Valid },
                line: records.len() as u64 + 2,
            });
        }
        dates.push(date.clone());
        fields.push(field);
        date = add_days(&date, cfg.date_step);
    }
    SyntheticDataset { dates, fields, records }
}
