//! Metadata-distribution alignment: bootstrap resampling by binned metadata
//! key, pitch subset filtering, and a two-sample KS diagnostic.

use crate::error::{Error, Result};
use crate::scalar::Real;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRow {
    pub frame_id: u64,
    pub altitude: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
    pub clock: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTable {
    pub rows: Vec<MetaRow>,
    pub source: PathBuf,
}

impl MetaTable {
    pub fn new(rows: Vec<MetaRow>) -> Self {
        Self {
            rows,
            source: PathBuf::new(),
        }
    }

    /// Parses the `meta.csv` schema; extra columns are ignored.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty meta table".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| Error::InvalidInput(format!("meta table lacks column {name:?}")))
        };
        let cols = [
            col("frame_id")?,
            col("altitude")?,
            col("pitch")?,
            col("yaw")?,
            col("roll")?,
            col("clock")?,
        ];
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |i: usize| -> Result<f64> {
                fields
                    .get(cols[i])
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("meta row {}: bad field", n + 2)))
            };
            let frame_id = fields
                .get(cols[0])
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Error::InvalidInput(format!("meta row {}: bad frame_id", n + 2)))?;
            rows.push(MetaRow {
                frame_id,
                altitude: get(1)?,
                pitch: get(2)?,
                yaw: get(3)?,
                roll: get(4)?,
                clock: get(5)?,
            });
        }
        Ok(Self::new(rows))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut t = Self::parse_csv(&text)?;
        t.source = path.to_path_buf();
        Ok(t)
    }

    pub fn values(&self, key: MetaKey) -> Vec<f64> {
        self.rows.iter().map(|r| key.value(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaKey {
    Time,
    Pitch,
    Altitude,
}

impl MetaKey {
    pub fn value(self, r: &MetaRow) -> f64 {
        match self {
            MetaKey::Time => r.clock,
            MetaKey::Pitch => r.pitch,
            MetaKey::Altitude => r.altitude,
        }
    }

    /// Default bin width: hourly for time, 10 m for altitude, 5° for pitch.
    pub fn default_bin_width(self) -> f64 {
        match self {
            MetaKey::Time => 3600.0,
            MetaKey::Altitude => 10.0,
            MetaKey::Pitch => 5.0,
        }
    }
}

/// Bin index for a value; time bins are clamped to the 24 hours of the day.
fn bin_of(key: MetaKey, width: f64, v: f64) -> i64 {
    let b = (v / width).floor() as i64;
    match key {
        MetaKey::Time => b.clamp(0, (86_400.0 / width).ceil() as i64 - 1),
        _ => b,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOutcome {
    /// Source frame ids, with repetition.
    pub frame_ids: Vec<u64>,
    /// Target mass that fell in bins without source frames.
    pub uncovered_mass: f64,
    pub warnings: Vec<String>,
}

/// Bootstrap resampling of `source` so the binned `key` distribution follows `target`.
pub fn bootstrap_align(
    source: &MetaTable,
    target: &MetaTable,
    key: MetaKey,
    bin_width: f64,
    n: usize,
    seed: u64,
) -> Result<AlignOutcome> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if source.rows.is_empty() || target.rows.is_empty() {
        return Err(Error::InvalidInput(
            "source and target must be nonempty".into(),
        ));
    }
    if !(bin_width > 0.0) {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    let mut target_mass: BTreeMap<i64, f64> = BTreeMap::new();
    let unit = 1.0 / target.rows.len() as f64;
    for r in &target.rows {
        *target_mass
            .entry(bin_of(key, bin_width, key.value(r)))
            .or_default() += unit;
    }
    let mut source_bins: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    for r in &source.rows {
        source_bins
            .entry(bin_of(key, bin_width, key.value(r)))
            .or_default()
            .push(r.frame_id);
    }
    let mut warnings = Vec::new();
    let mut covered: Vec<(i64, f64)> = Vec::new();
    let mut uncovered_mass = 0.0;
    for (&bin, &mass) in &target_mass {
        if source_bins.contains_key(&bin) {
            covered.push((bin, mass));
        } else {
            uncovered_mass += mass;
            warnings.push(format!(
                "target bin {bin} (mass {mass:.4}) has no source frames; mass redistributed"
            ));
        }
    }
    if covered.is_empty() {
        return Err(Error::AlignmentImpossible { uncovered_mass });
    }
    let dist = WeightedIndex::new(covered.iter().map(|(_, m)| *m))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame_ids = (0..n)
        .map(|_| {
            let ids = &source_bins[&covered[dist.sample(&mut rng)].0];
            ids[rng.gen_range(0..ids.len())]
        })
        .collect();
    Ok(AlignOutcome {
        frame_ids,
        uncovered_mass,
        warnings,
    })
}

/// Hourly bootstrap on time of day.
pub fn bootstrap_time_align(
    source: &MetaTable,
    target: &MetaTable,
    n: usize,
    seed: u64,
) -> Result<AlignOutcome> {
    bootstrap_align(source, target, MetaKey::Time, 3600.0, n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleMode {
    /// Pitch difference only.
    Pitch,
    /// Euclidean norm of pitch and roll differences against a level target roll of 0.
    Combined,
}

/// Frames whose angle lies within `threshold` degrees of `target_pitch`, in source order.
pub fn angle_filter(source: &MetaTable, target_pitch: f64, threshold: f64) -> Vec<u64> {
    angle_filter_mode(source, target_pitch, threshold, AngleMode::Pitch)
}

pub fn angle_filter_mode(
    source: &MetaTable,
    target_pitch: f64,
    threshold: f64,
    mode: AngleMode,
) -> Vec<u64> {
    source
        .rows
        .iter()
        .filter(|r| {
            let dp = r.pitch - target_pitch;
            let err = match mode {
                AngleMode::Pitch => dp.abs(),
                AngleMode::Combined => dp.hypot(r.roll),
            };
            err <= threshold
        })
        .map(|r| r.frame_id)
        .collect()
}

/// Keeps rows whose frame id is listed, in the order of `ids` (repeats allowed).
pub fn select(source: &MetaTable, ids: &[u64]) -> MetaTable {
    let by_id: BTreeMap<u64, &MetaRow> = source.rows.iter().map(|r| (r.frame_id, r)).collect();
    MetaTable {
        rows: ids
            .iter()
            .filter_map(|i| by_id.get(i).map(|r| (*r).clone()))
            .collect(),
        source: source.source.clone(),
    }
}

/// Two-sample Kolmogorov–Smirnov statistic: sup |F_a - F_b|.
pub fn ks_statistic<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "KS statistic needs nonempty samples".into(),
        ));
    }
    let sorted = |s: &[T]| {
        let mut v = s.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).expect("KS samples must not be NaN"));
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (T::lit(a.len() as f64), T::lit(b.len() as f64));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        let diff = (T::lit(i as f64) / na - T::lit(j as f64) / nb).abs();
        if diff > d {
            d = diff;
        }
    }
    Ok(d)
}
