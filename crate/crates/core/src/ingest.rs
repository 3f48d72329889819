//! Daily station observations: reading, quality filtering, date selection and
//! seeded train/validation/test splits.
//!
//! Input files are UTF-8 CSV with the header
//! `station_id,lat,lon,date,value_tenths_degC,qflag`, where values are stored
//! in tenths of a degree Celsius and `qflag` is `valid`, `suspect` or
//! `missing`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{ClimatePoint, ClimatePointCloud};
use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = ["station_id", "lat", "lon", "date", "value_tenths_degC", "qflag"];
/// Values beyond this magnitude are treated as unit errors and flagged suspect.
pub const MAX_ABS_CELSIUS: f64 = 70.0;
pub const MIN_VALID_PER_DATE: usize = 500;
pub const N_DATES: usize = 100;
pub const MIN_SPLIT_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityFlag {
    Valid,
    Suspect,
    Missing,
}

impl QualityFlag {
    pub fn name(self) -> &'static str {
        match self {
            QualityFlag::Valid => "valid",
            QualityFlag::Suspect => "suspect",
            QualityFlag::Missing => "missing",
        }
    }
}

impl FromStr for QualityFlag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "valid" => Ok(QualityFlag::Valid),
            "suspect" => Ok(QualityFlag::Suspect),
            "missing" => Ok(QualityFlag::Missing),
            other => Err(format!("unknown quality flag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    /// ISO 8601 calendar day, `YYYY-MM-DD`.
    pub date: String,
    pub value_tenths: i32,
    pub qflag: QualityFlag,
    /// 1-based line in the source file, 0 when synthesized.
    pub line: u64,
}

impl StationRecord {
    pub fn celsius(&self) -> f64 {
        f64::from(self.value_tenths) / 10.0
    }

    pub fn is_valid(&self) -> bool {
        self.qflag == QualityFlag::Valid
    }

    fn row(&self) -> [String; 6] {
        [
            self.station_id.clone(),
            self.lat.to_string(),
            self.lon.to_string(),
            self.date.clone(),
            self.value_tenths.to_string(),
            self.qflag.name().to_string(),
        ]
    }
}

pub(crate) fn is_leap(y: u32) -> bool {
    (y.is_multiple_of(4) && !y.is_multiple_of(100)) || y.is_multiple_of(400)
}

pub fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let num = |r: std::ops::Range<usize>| {
        let part = &s[r];
        part.bytes().all(|c| c.is_ascii_digit()).then(|| part.parse::<u32>().ok()).flatten()
    };
    let (Some(y), Some(m), Some(d)) = (num(0..4), num(5..7), num(8..10)) else {
        return false;
    };
    let days = match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&d)
}

fn parse_record(fields: &csv::StringRecord, line: u64) -> std::result::Result<StationRecord, String> {
    if fields.len() != HEADER.len() {
        return Err(format!("expected {} fields, found {}", HEADER.len(), fields.len()));
    }
    let station_id = fields[0].trim().to_string();
    if station_id.is_empty() {
        return Err("empty station_id".into());
    }
    let num = |i: usize| fields[i].trim().parse::<f64>().map_err(|e| format!("{}: {e}", HEADER[i]));
    let (lat, lon) = (num(1)?, num(2)?);
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("coordinate out of range: lat {lat}, lon {lon}"));
    }
    let date = fields[3].trim().to_string();
    if !is_iso_date(&date) {
        return Err(format!("invalid date `{date}`"));
    }
    let value_tenths = fields[4]
        .trim()
        .parse::<i32>()
        .map_err(|e| format!("value_tenths_degC: {e}"))?;
    let mut qflag: QualityFlag = fields[5].trim().parse()?;
    if f64::from(value_tenths).abs() / 10.0 > MAX_ABS_CELSIUS && qflag == QualityFlag::Valid {
        log::warn!("line {line}: {} °C is out of range, flagged suspect", f64::from(value_tenths) / 10.0);
        qflag = QualityFlag::Suspect;
    }
    Ok(StationRecord {
        station_id,
        lat,
        lon,
        date,
        value_tenths,
        qflag,
        line,
    })
}

fn check_header(path: &Path, headers: &csv::StringRecord, extra: &[&str]) -> Result<()> {
    let want: Vec<&str> = HEADER.iter().chain(extra).copied().collect();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Reads a consolidated observation file.
pub fn read_station_file(path: &Path) -> Result<Vec<StationRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    check_header(path, reader.headers()?, &[])?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(parse_record(&row, line).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?);
    }
    Ok(out)
}

pub fn write_station_file(path: &Path, records: &[StationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.row())?;
    }
    w.flush()?;
    Ok(())
}

/// Valid records grouped by date, in date order.
pub fn valid_by_date(records: &[StationRecord]) -> BTreeMap<&str, Vec<&StationRecord>> {
    let mut map: BTreeMap<&str, Vec<&StationRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_valid()) {
        map.entry(r.date.as_str()).or_default().push(r);
    }
    map
}

/// Samples `n` distinct dates among those with strictly more than
/// `min_valid` valid observations. The result is sorted.
pub fn select_dates(records: &[StationRecord], min_valid: usize, n: usize, seed: u64) -> Result<Vec<String>> {
    let mut candidates: Vec<&str> = valid_by_date(records)
        .into_iter()
        .filter(|(_, v)| v.len() > min_valid)
        .map(|(d, _)| d)
        .collect();
    if candidates.len() < n {
        return Err(Error::InsufficientDates {
            available: candidates.len(),
            requested: n,
            min_valid,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = candidates.partial_shuffle(&mut rng, n);
    let mut chosen: Vec<String> = chosen.iter().map(|d| d.to_string()).collect();
    chosen.sort();
    Ok(chosen)
}

/// Per-date seed: the first eight bytes (little endian) of
/// SHA-256(`"{master_seed}:{date}"`).
pub fn date_seed(master_seed: u64, date: &str) -> u64 {
    let digest = Sha256::digest(format!("{master_seed}:{date}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `(train, validation, test)` sizes for `n` observations.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    // round(0.6 n) without floating point; 0.6 n is never a half-integer.
    let train = (6 * n + 5) / 10;
    let rest = n - train;
    let val = rest.div_ceil(2);
    (train, val, rest - val)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub date: String,
    pub seed: u64,
    pub train: Vec<StationRecord>,
    pub validation: Vec<StationRecord>,
    pub test: Vec<StationRecord>,
}

pub fn to_cloud(records: &[StationRecord]) -> Result<ClimatePointCloud> {
    let points = records
        .iter()
        .map(|r| ClimatePoint::new(r.lat, r.lon, r.celsius()))
        .collect::<Result<Vec<_>>>()?;
    ClimatePointCloud::new(points)
}

impl SplitSet {
    pub fn part(&self, split: Split) -> &[StationRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn cloud(&self, split: Split) -> Result<ClimatePointCloud> {
        to_cloud(self.part(split))
    }

    /// All records with their split, in input order.
    pub fn membership(&self) -> Vec<(&StationRecord, Split)> {
        let mut all: Vec<(&StationRecord, Split)> = Split::ALL
            .iter()
            .flat_map(|&s| self.part(s).iter().map(move |r| (r, s)))
            .collect();
        all.sort_by(|a, b| (a.0.line, &a.0.station_id).cmp(&(b.0.line, &b.0.station_id)));
        all
    }
}

/// Randomly partitions one date's valid records into 60/20/20 splits.
///
/// The permutation comes from ChaCha8 seeded with [`date_seed`]. Records with
/// coordinates duplicated within the date are rejected.
pub fn make_splits(date: &str, records: &[&StationRecord], master_seed: u64) -> Result<SplitSet> {
    let valid: Vec<&StationRecord> = records.iter().copied().filter(|r| r.is_valid() && r.date == date).collect();
    if valid.len() < MIN_SPLIT_SIZE {
        return Err(Error::TooFewObservations {
            date: date.to_string(),
            count: valid.len(),
            needed: MIN_SPLIT_SIZE,
        });
    }
    // Reject duplicate coordinates up front so every split builds a cloud.
    to_cloud(&valid.iter().map(|r| (*r).clone()).collect::<Vec<_>>())?;

    let seed = date_seed(master_seed, date);
    let mut order: Vec<usize> = (0..valid.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = split_sizes(valid.len());
    let take = |r: std::ops::Range<usize>| -> Vec<StationRecord> {
        let mut idx = order[r].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| valid[i].clone()).collect()
    };
    Ok(SplitSet {
        date: date.to_string(),
        seed,
        train: take(0..n_train),
        validation: take(n_train..n_train + n_val),
        test: take(n_train + n_val..valid.len()),
    })
}

/// Writes every record of the date with a trailing `split` column.
pub fn write_membership(path: &Path, set: &SplitSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = HEADER.to_vec();
    header.push("split");
    w.write_record(&header)?;
    for (r, s) in set.membership() {
        let mut row = r.row().to_vec();
        row.push(s.name().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_membership(path: &Path) -> Result<Vec<(StationRecord, Split)>> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(path, reader.headers()?, &["split"])?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let split: Split = row.get(6).unwrap_or("").parse().map_err(err)?;
        let fields: csv::StringRecord = row.iter().take(HEADER.len()).collect();
        out.push((parse_record(&fields, line).map_err(err)?, split));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub std: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let ss = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        Some(Self {
            n,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            mean,
            std: if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 },
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Pooled value statistics of the training and validation splits. Test
/// splits are deliberately left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitSummary {
    pub train: SummaryStats,
    pub validation: SummaryStats,
}

pub fn split_summary(sets: &[SplitSet]) -> Result<SplitSummary> {
    let pooled = |s: Split| SummaryStats::of(sets.iter().flat_map(|set| set.part(s).iter().map(StationRecord::celsius)));
    match (pooled(Split::Train), pooled(Split::Val)) {
        (Some(train), Some(validation)) => Ok(SplitSummary { train, validation }),
        _ => Err(Error::InsufficientData("split summary needs at least one split".into())),
    }
}

pub fn write_split_summary(path: &Path, summary: &SplitSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["split", "n", "min", "mean", "std", "max"])?;
    for (name, s) in [("train", summary.train), ("val", summary.validation)] {
        w.write_record([
            name.to_string(),
            s.n.to_string(),
            s.min.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.max.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;
    use std::io::Write;

    fn record(i: usize, date: &str, tenths: i32, qflag: QualityFlag) -> StationRecord {
        StationRecord {
            station_id: format!("ST{i}"),
            lat: 40.0 + (i / 50) as f64 * 0.1,
            lon: (i % 50) as f64 * 0.1,
            date: date.to_string(),
            value_tenths: tenths,
            qflag,
            line: i as u64 + 2,
        }
    }

    fn day(n: usize, date: &str) -> Vec<StationRecord> {
        (0..n).map(|i| record(i, date, (i as i32 * 7) % 300 - 50, QualityFlag::Valid)).collect()
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn dates() {
        assert!(is_iso_date("1995-07-03"));
        assert!(is_iso_date("2000-02-29"));
        assert!(!is_iso_date("1900-02-29"));
        assert!(!is_iso_date("1995-13-01"));
        assert!(!is_iso_date("1995-7-03"));
        assert!(!is_iso_date("19a5-07-03"));
    }

    #[test]
    fn reads_rows() {
        let f = write("station_id,lat,lon,date,value_tenths_degC,qflag\nST1,52.1,19.4,1995-07-03,215,valid\nST2,50,10,1995-07-03,-3,missing\n");
        let recs = read_station_file(f.path()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].celsius(), 21.5);
        assert_eq!(recs[0].line, 2);
        assert_eq!(recs[1].qflag, QualityFlag::Missing);
    }

    #[test]
    fn header_only_is_empty() {
        let f = write("station_id,lat,lon,date,value_tenths_degC,qflag\n");
        assert!(read_station_file(f.path()).unwrap().is_empty());
        let f = write("id,lat,lon,date,value,qflag\n");
        assert!(matches!(read_station_file(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_row_names_its_line() {
        let mut text = String::from("station_id,lat,lon,date,value_tenths_degC,qflag\n");
        for i in 0..100 {
            if i == 57 {
                text.push_str("ST57,51.0,abc,1995-07-03,100,valid\n");
            } else {
                text.push_str(&format!("ST{i},{},{},1995-07-03,100,valid\n", 40.0 + i as f64 * 0.1, 5.0));
            }
        }
        match read_station_file(write(&text).path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 59);
                assert!(message.contains("lon"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let f = write("station_id,lat,lon,date,value_tenths_degC,qflag\nST1,52.1,19.4,1995-07-03\n");
        assert!(matches!(read_station_file(f.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn out_of_range_values_become_suspect() {
        let f = write("station_id,lat,lon,date,value_tenths_degC,qflag\nST1,52.1,19.4,1995-07-03,701,valid\nST2,52.1,19.5,1995-07-03,700,valid\n");
        let recs = read_station_file(f.path()).unwrap();
        assert_eq!(recs[0].qflag, QualityFlag::Suspect);
        assert_eq!(recs[1].qflag, QualityFlag::Valid);
    }

    #[test]
    fn file_round_trip() {
        let recs = day(20, "2001-01-01");
        let f = tempfile::NamedTempFile::new().unwrap();
        write_station_file(f.path(), &recs).unwrap();
        assert_eq!(read_station_file(f.path()).unwrap(), recs);
    }

    #[test]
    fn strict_threshold() {
        let recs: Vec<_> = ["2000-01-01", "2000-01-02"].iter().flat_map(|d| day(500, d)).collect();
        assert!(matches!(select_dates(&recs, 500, 1, 0), Err(Error::InsufficientDates { available: 0, .. })));
        let mut recs = recs;
        recs.extend(day(501, "2000-01-03"));
        assert_eq!(select_dates(&recs, 500, 1, 0).unwrap(), ["2000-01-03"]);
    }

    #[test]
    fn only_valid_records_count() {
        let mut recs = day(10, "2000-01-01");
        for r in recs.iter_mut().take(3) {
            r.qflag = QualityFlag::Suspect;
        }
        assert_eq!(valid_by_date(&recs)["2000-01-01"].len(), 7);
        assert!(select_dates(&recs, 7, 1, 0).is_err());
        assert!(select_dates(&recs, 6, 1, 0).is_ok());
    }

    #[test]
    fn date_selection_is_deterministic() {
        let recs: Vec<StationRecord> = (0..200)
            .map(|i| {
                let mut r = record(0, &format!("{}-{:02}-{:02}", 1950 + i / 12, i % 12 + 1, 1), 0, QualityFlag::Valid);
                r.line = i as u64;
                r
            })
            .collect();
        let a = select_dates(&recs, 0, 100, 0).unwrap();
        assert_eq!(a, select_dates(&recs, 0, 100, 0).unwrap());
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 100);
        assert_ne!(a, select_dates(&recs, 0, 100, 1).unwrap());
    }

    #[test]
    fn split_size_rule() {
        assert_eq!(split_sizes(100), (60, 20, 20));
        assert_eq!(split_sizes(10), (6, 2, 2));
        assert_eq!(split_sizes(11), (7, 2, 2));
        assert_eq!(split_sizes(12), (7, 3, 2));
        assert_eq!(split_sizes(5), (3, 1, 1));
        for n in 5..2000 {
            let (a, b, c) = split_sizes(n);
            assert_eq!(a + b + c, n);
            assert_eq!(a, (0.6 * n as f64).round() as usize);
            assert!(b == c || b == c + 1);
        }
    }

    #[test]
    fn too_few_observations() {
        let recs = day(4, "2000-01-01");
        let refs: Vec<_> = recs.iter().collect();
        assert!(matches!(make_splits("2000-01-01", &refs, 0), Err(Error::TooFewObservations { count: 4, .. })));
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        let mut recs = day(10, "2000-01-01");
        recs[3].lat = recs[1].lat;
        recs[3].lon = recs[1].lon;
        let refs: Vec<_> = recs.iter().collect();
        assert!(matches!(make_splits("2000-01-01", &refs, 0), Err(Error::DuplicateCoordinate { .. })));
    }

    #[test]
    fn seeds_differ_by_date_and_master() {
        assert_ne!(date_seed(0, "2000-01-01"), date_seed(0, "2000-01-02"));
        assert_ne!(date_seed(0, "2000-01-01"), date_seed(1, "2000-01-01"));
        assert_eq!(date_seed(0, "2000-01-01"), date_seed(0, "2000-01-01"));
    }

    #[test]
    fn membership_round_trip() {
        let recs = day(37, "2010-05-05");
        let refs: Vec<_> = recs.iter().collect();
        let set = make_splits("2010-05-05", &refs, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_membership(&a, &set).unwrap();
        write_membership(&b, &make_splits("2010-05-05", &refs, 0).unwrap()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_membership(&a).unwrap();
        assert_eq!(back.len(), 37);
        let train: Vec<_> = back.iter().filter(|(_, s)| *s == Split::Train).map(|(r, _)| r.clone()).collect();
        assert_eq!(train, set.train);
    }

    #[test]
    fn summary_constant_and_pooled() {
        let recs: Vec<_> = (0..10).map(|i| record(i, "2000-01-01", 50, QualityFlag::Valid)).collect();
        let refs: Vec<_> = recs.iter().collect();
        let s = split_summary(&[make_splits("2000-01-01", &refs, 0).unwrap()]).unwrap();
        assert_eq!((s.train.min, s.train.mean, s.train.max, s.train.std), (5.0, 5.0, 5.0, 0.0));

        let d1 = day(30, "2000-01-01");
        let d2 = day(40, "2000-01-02");
        let sets = [
            make_splits("2000-01-01", &d1.iter().collect::<Vec<_>>(), 0).unwrap(),
            make_splits("2000-01-02", &d2.iter().collect::<Vec<_>>(), 0).unwrap(),
        ];
        let s = split_summary(&sets).unwrap();
        // Welford single pass as an independent oracle.
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for r in sets.iter().flat_map(|s| &s.train) {
            n += 1.0;
            let d = r.celsius() - mean;
            mean += d / n;
            m2 += d * (r.celsius() - mean);
        }
        assert_eq!(s.train.n, 18 + 24);
        assert!((s.train.mean - mean).abs() < 1e-9);
        assert!((s.train.std - (m2 / (n - 1.0)).sqrt()).abs() < 1e-9);
        assert_eq!(s.validation.n, 6 + 8);
    }

    #[test]
    fn summary_csv_has_no_test_row() {
        let d = day(30, "2000-01-01");
        let set = make_splits("2000-01-01", &d.iter().collect::<Vec<_>>(), 0).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_split_summary(f.path(), &split_summary(&[set]).unwrap()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains("test"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn splits_partition_the_date(n in 5usize..300, seed in any::<u64>()) {
            let recs = day(n, "1999-12-31");
            let refs: Vec<_> = recs.iter().collect();
            let set = make_splits("1999-12-31", &refs, seed).unwrap();
            prop_assert_eq!(set.sizes(), split_sizes(n));
            let ids: Vec<&str> = Split::ALL.iter().flat_map(|&s| set.part(s).iter().map(|r| r.station_id.as_str())).collect();
            let unique: HashSet<&str> = ids.iter().copied().collect();
            prop_assert_eq!(ids.len(), n);
            prop_assert_eq!(unique.len(), n);
            prop_assert_eq!(&set, &make_splits("1999-12-31", &refs, seed).unwrap());
        }
    }
}
