//! Synthetic benchmark generation, noise processes, segmentation and CSV
//! ingestion.
//!
//! The SY4 and SY10 benchmarks concatenate sinusoidal patterns of length 100
//! spanning an amplitude x frequency grid, repeat the block, and attach
//! per-sample ground-truth labels. Noise is Gaussian with a standard
//! deviation expressed as a percentage of the clean series' standard
//! deviation.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A univariate series with optional per-sample pattern labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub labels: Option<Vec<usize>>,
    /// Informational only; never used in computations.
    pub sample_rate: Option<f64>,
    /// Generator name + seed, or the source file path.
    pub provenance: String,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, labels: Option<Vec<usize>>, provenance: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(Error::Input(format!(
                    "labels ({}) and samples ({}) differ in length",
                    l.len(),
                    values.len()
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("series contains non-finite values".into()));
        }
        Ok(TimeSeries { values, labels, sample_rate: None, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Population standard deviation of the samples.
    pub fn std(&self) -> f64 {
        std_dev(&self.values)
    }
}

pub(crate) fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// One sinusoidal pattern: `amplitude * sin(2 pi frequency t / len)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternSpec {
    pub amplitude: f64,
    /// Cycles per window.
    pub frequency: f64,
}

impl PatternSpec {
    pub fn render(&self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| self.amplitude * (std::f64::consts::TAU * self.frequency * t as f64 / len as f64).sin())
            .collect()
    }
}

/// Data-driven description of a synthetic benchmark.
#[derive(Clone, Debug)]
pub struct GeneratorSpec {
    pub patterns: Vec<PatternSpec>,
    pub pattern_len: usize,
    /// Order in which pattern blocks are concatenated; indices into
    /// `patterns`. Empty means natural order.
    pub block_order: Vec<usize>,
    pub repeats: usize,
    /// Percentage of the clean series' standard deviation, in [0, 100].
    pub noise_level: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() {
            return Err(Error::Config("generator needs at least one pattern".into()));
        }
        if self.pattern_len < 9 {
            return Err(Error::Config(format!(
                "pattern length must be at least 9, got {}",
                self.pattern_len
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        if !(0.0..=100.0).contains(&self.noise_level) {
            return Err(Error::Config(format!(
                "noise level must be in [0,100], got {}",
                self.noise_level
            )));
        }
        for &b in &self.block_order {
            if b >= self.patterns.len() {
                return Err(Error::Config(format!(
                    "block order references pattern {b}, only {} defined",
                    self.patterns.len()
                )));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<TimeSeries> {
        self.validate()?;
        let order: Vec<usize> = if self.block_order.is_empty() {
            (0..self.patterns.len()).collect()
        } else {
            self.block_order.clone()
        };
        let rendered: Vec<Vec<f64>> = self.patterns.iter().map(|p| p.render(self.pattern_len)).collect();
        let mut values = Vec::with_capacity(order.len() * self.pattern_len * self.repeats);
        let mut labels = Vec::with_capacity(values.capacity());
        for _ in 0..self.repeats {
            for &idx in &order {
                values.extend_from_slice(&rendered[idx]);
                labels.extend(std::iter::repeat(idx).take(self.pattern_len));
            }
        }
        let provenance = format!(
            "generator(patterns={}, len={}, repeats={}, noise={}, seed={})",
            self.patterns.len(),
            self.pattern_len,
            self.repeats,
            self.noise_level,
            self.seed
        );
        let clean = TimeSeries::new(values, Some(labels), provenance)?;
        add_gaussian_noise(&clean, self.noise_level, self.seed)
    }
}

/// The four-pattern benchmark: (amplitude, frequency) over
/// {1, 2} x {1, 3}, pattern length 100.
pub fn sy4_spec(noise_level: f64, repeats: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        patterns: vec![
            PatternSpec { amplitude: 1.0, frequency: 1.0 },
            PatternSpec { amplitude: 1.0, frequency: 3.0 },
            PatternSpec { amplitude: 2.0, frequency: 1.0 },
            PatternSpec { amplitude: 2.0, frequency: 3.0 },
        ],
        pattern_len: 100,
        block_order: Vec::new(),
        repeats,
        noise_level,
        seed,
    }
}

pub fn gen_sy4(noise_level: f64, repeats: usize, seed: u64) -> Result<TimeSeries> {
    sy4_spec(noise_level, repeats, seed).generate()
}

/// The ten-pattern benchmark: amplitudes {1, 2} x frequencies {1..5}.
pub fn sy10_spec(repeats: usize, seed: u64) -> GeneratorSpec {
    let mut patterns = Vec::new();
    for &amplitude in &[1.0, 2.0] {
        for frequency in 1..=5 {
            patterns.push(PatternSpec { amplitude, frequency: frequency as f64 });
        }
    }
    GeneratorSpec {
        patterns,
        pattern_len: 100,
        block_order: Vec::new(),
        repeats,
        noise_level: 0.0,
        seed,
    }
}

pub fn gen_sy10(repeats: usize, seed: u64) -> Result<TimeSeries> {
    sy10_spec(repeats, seed).generate()
}

/// Add Gaussian noise with std = (level / 100) * std(series). Labels and
/// length are preserved; level 0 returns the series unchanged.
pub fn add_gaussian_noise(series: &TimeSeries, level: f64, seed: u64) -> Result<TimeSeries> {
    if !(0.0..=100.0).contains(&level) {
        return Err(Error::Domain(format!("noise level must be in [0,100], got {level}")));
    }
    if level == 0.0 {
        return Ok(series.clone());
    }
    let sigma = level / 100.0 * series.std();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let values: Vec<f64> = series.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(TimeSeries {
        values,
        labels: series.labels.clone(),
        sample_rate: series.sample_rate,
        provenance: format!("{} + noise({level}%, seed={seed})", series.provenance),
    })
}

/// AR(1) process `X_t = alpha * X_(t-1) + e_t` with `X_0 = 0` and
/// `e_t ~ N(0, noise_std^2)`.
pub fn gen_ar1(alpha: f64, n: usize, noise_std: f64, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std.max(0.0)).expect("std >= 0");
    let mut values = Vec::with_capacity(n);
    let mut prev = 0.0;
    for _ in 0..n {
        let eps = if noise_std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        let x = alpha * prev + eps;
        values.push(x);
        prev = x;
    }
    TimeSeries {
        values,
        labels: None,
        sample_rate: None,
        provenance: format!("ar1(alpha={alpha}, n={n}, noise_std={noise_std}, seed={seed})"),
    }
}

/// One window of a segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub values: Vec<f64>,
    /// Strict-majority sample label; `None` when no label wins outright.
    pub label: Option<usize>,
}

/// Non-overlapping windows plus the dropped trailing remainder.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub window_len: usize,
    pub windows: Vec<Window>,
    pub remainder: usize,
}

/// Split into non-overlapping windows of length `m`; the trailing
/// remainder shorter than `m` is dropped and reported.
pub fn segment(series: &TimeSeries, m: usize) -> Result<Segmentation> {
    if m == 0 {
        return Err(Error::Contract("window length must be positive".into()));
    }
    if series.len() < m {
        return Err(Error::Input(format!(
            "series of length {} is shorter than the window length {m}",
            series.len()
        )));
    }
    let count = series.len() / m;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * m;
        let values = series.values[start..start + m].to_vec();
        let label = series.labels.as_ref().and_then(|labels| majority_label(&labels[start..start + m]));
        windows.push(Window { start, values, label });
    }
    Ok(Segmentation { window_len: m, windows, remainder: series.len() - count * m })
}

/// The label held by a strict majority of samples, if any.
fn majority_label(labels: &[usize]) -> Option<usize> {
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let best = counts.iter().map(|(_, &c)| c).max()?;
    let mut winners = counts.iter().filter(|(_, &c)| c == best);
    let first = winners.next()?;
    if winners.next().is_some() {
        None // tied vote: the window has no single true pattern
    } else {
        Some(*first.0)
    }
}

/// Load a series from CSV: one value per row, optional integer label in a
/// second column, optional header row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut columns: Option<usize> = None;
    let mut saw_labels = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if idx == 0 && fields[0].parse::<f64>().is_err() {
            continue; // header row
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Format(format!(
                    "ragged columns: line {line_no} has {} fields, expected {c}",
                    fields.len()
                )));
            }
            _ => {}
        }
        let value: f64 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("'{}' is not a number", fields[0]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse { line: line_no, message: "non-finite value".into() });
        }
        values.push(value);
        if fields.len() > 1 {
            let label: usize = fields[1].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("'{}' is not an integer label", fields[1]),
            })?;
            labels.push(label);
            saw_labels = true;
        }
    }
    if values.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }
    TimeSeries::new(values, if saw_labels { Some(labels) } else { None }, path.display().to_string())
}

/// Write a series as CSV with a header row; values round-trip exactly.
pub fn save_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    match &series.labels {
        Some(labels) => {
            out.push_str("value,label\n");
            for (v, l) in series.values.iter().zip(labels) {
                writeln!(out, "{v},{l}").expect("write to string");
            }
        }
        None => {
            out.push_str("value\n");
            for v in &series.values {
                writeln!(out, "{v}").expect("write to string");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
