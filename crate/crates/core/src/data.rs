//! Labeled feature banks: CSV and binary (`HODF`) files, plus a synthetic
//! generator for desk-scale experiments.
//!
//! Binary layout, all little-endian: magic `HODF`, version `u32`, dimension
//! `u32`, row count `u64`, then per row an `i32` label and `dim` `f64`s.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::binio::{to_u32, Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &str = "HODF";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank {
    dim: usize,
    labels: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl FeatureBank {
    pub fn new(dim: usize, labels: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "feature dimension must be positive".into(),
            ));
        }
        if labels.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} values, expected {dim}",
                    r.len()
                )));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| i32::try_from(l).is_err()) {
            return Err(Error::InvalidInput(format!(
                "label {l} does not fit in i32"
            )));
        }
        Ok(Self { dim, labels, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Number of distinct classes, taken as `max label + 1`.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    /// Standard deviation of all feature values pooled together.
    pub fn global_std(&self) -> f64 {
        let n = (self.len() * self.dim) as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.rows.iter().flatten().sum::<f64>() / n;
        let var = self
            .rows
            .iter()
            .flatten()
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        var.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

pub fn encode_binary(bank: &FeatureBank) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC.as_bytes());
    w.u32(VERSION);
    w.u32(to_u32("dimension", bank.dim)?);
    w.u64(bank.len() as u64);
    for (&l, row) in bank.labels.iter().zip(&bank.rows) {
        w.i32(l as i32);
        w.f64s(row);
    }
    Ok(w.buf)
}

pub fn decode_binary(bytes: &[u8]) -> Result<FeatureBank> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim_offset = r.offset();
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::InvalidData {
            offset: dim_offset,
            message: "dimension is zero".into(),
        });
    }
    let count = r.u64()?;
    let row_bytes = 4 + 8 * dim as u64;
    if count.saturating_mul(row_bytes) > r.remaining() as u64 {
        return Err(Error::Truncated {
            offset: r.offset() + r.remaining() as u64,
        });
    }
    let mut labels = Vec::with_capacity(count as usize);
    let mut rows = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let offset = r.offset();
        let label = r.i32()?;
        let label = usize::try_from(label).map_err(|_| Error::InvalidData {
            offset,
            message: format!("negative label {label}"),
        })?;
        labels.push(label);
        rows.push(r.f64s(dim)?);
    }
    if r.remaining() != 0 {
        return Err(Error::InvalidData {
            offset: r.offset(),
            message: format!("{} trailing bytes", r.remaining()),
        });
    }
    FeatureBank::new(dim, labels, rows)
}

pub fn encode_csv(bank: &FeatureBank) -> String {
    let mut s = format!("label,dim={}\n", bank.dim);
    for (l, row) in bank.labels.iter().zip(&bank.rows) {
        let _ = write!(s, "{l}");
        for x in row {
            let _ = write!(s, ",{x:?}");
        }
        s.push('\n');
    }
    s
}

pub fn decode_csv(text: &str) -> Result<FeatureBank> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or(Error::MalformedHeader {
        line: 1,
        message: "empty file".into(),
    })?;
    let dim = header
        .strip_prefix("label,dim=")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::MalformedHeader {
            line: 1,
            message: format!("expected `label,dim=<positive integer>`, found `{header}`"),
        })?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (line, text) in lines {
        if text.is_empty() {
            continue;
        }
        let mut fields = text.split(',').map(str::trim);
        let label_tok = fields.next().unwrap_or_default();
        let label = label_tok.parse::<u32>().map_err(|_| Error::ParseValue {
            line,
            token: label_tok.to_string(),
        })?;
        let row = fields
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::ParseValue {
                    line,
                    token: t.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != dim {
            return Err(Error::RowLength {
                line,
                expected: dim,
                found: row.len(),
            });
        }
        labels.push(label as usize);
        rows.push(row);
    }
    FeatureBank::new(dim, labels, rows)
}

/// Reads either format; binary files are recognized by their magic.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureBank> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC.as_bytes()) {
        return decode_binary(&bytes);
    }
    if FeatureFormat::from_path(path) == FeatureFormat::Binary && !bytes.is_empty() {
        return Err(Error::BadMagic {
            offset: 0,
            expected: MAGIC,
        });
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::InvalidData {
        offset: e.utf8_error().valid_up_to() as u64,
        message: "CSV file is not valid UTF-8".into(),
    })?;
    decode_csv(&text)
}

/// Writes CSV for a `.csv` extension and binary otherwise.
pub fn write_feature_file(bank: &FeatureBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match FeatureFormat::from_path(path) {
        FeatureFormat::Csv => encode_csv(bank).into_bytes(),
        FeatureFormat::Binary => encode_binary(bank)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OodMode {
    /// A Gaussian cluster centred `3R` from the origin.
    ShiftedCluster,
    /// Uniform directions with radius uniform in `[2R, 4R]`.
    UniformShell,
}

impl std::str::FromStr for OodMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shifted_cluster" | "shifted-cluster" => Ok(Self::ShiftedCluster),
            "uniform_shell" | "uniform-shell" => Ok(Self::UniformShell),
            _ => Err("one of shifted_cluster, uniform_shell".into()),
        }
    }
}

impl std::fmt::Display for OodMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ShiftedCluster => "shifted_cluster",
            Self::UniformShell => "uniform_shell",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Radius of the sphere holding the class means.
    pub class_radius: f64,
    pub within_std: f64,
    pub ood_mode: OodMode,
    /// OOD rows in total, split evenly between validation and test.
    pub ood_count: usize,
    pub seed: u64,
}

impl Default for SynthDataConfig {
    fn default() -> Self {
        Self {
            n_classes: 4,
            dim: 32,
            samples_per_class: 500,
            class_radius: 1.0,
            within_std: 0.1,
            ood_mode: OodMode::ShiftedCluster,
            ood_count: 500,
            seed: 0,
        }
    }
}

impl SynthDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.dim == 0 {
            return Err(Error::ConfigValue(
                "n_classes and dim must be positive".into(),
            ));
        }
        if self.samples_per_class < 7 {
            return Err(Error::ConfigValue(format!(
                "samples_per_class must be at least 7 to fill every split, got {}",
                self.samples_per_class
            )));
        }
        if self.ood_count < 2 {
            return Err(Error::ConfigValue("ood_count must be at least 2".into()));
        }
        if !(self.class_radius > 0.0 && self.class_radius.is_finite()) {
            return Err(Error::ConfigValue("class_radius must be positive".into()));
        }
        if !(self.within_std > 0.0 && self.within_std.is_finite()) {
            return Err(Error::ConfigValue("within_std must be positive".into()));
        }
        Ok(())
    }

    fn split_sizes(&self) -> (usize, usize) {
        let m = self.samples_per_class;
        (m * 70 / 100, m * 15 / 100)
    }
}

/// The five banks produced by [`gen_synthetic`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSplits {
    pub train_id: FeatureBank,
    pub val_id: FeatureBank,
    pub val_ood: FeatureBank,
    pub test_id: FeatureBank,
    pub test_ood: FeatureBank,
}

pub const SPLIT_FILES: [&str; 5] = [
    "train_id.hodf",
    "val_id.hodf",
    "val_ood.hodf",
    "test_id.hodf",
    "test_ood.hodf",
];

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn jitter(center: &[f64], std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    center
        .iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(rng);
            m + std * z
        })
        .collect()
}

/// Class means on a sphere of radius `R`, Gaussian rows around them, and OOD
/// rows labeled `n_classes`. Every class is split 70/15/15 into train,
/// validation and test.
pub fn gen_synthetic(cfg: &SynthDataConfig) -> Result<SynthSplits> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.class_radius;
    let means: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| {
            unit_vector(cfg.dim, &mut rng)
                .into_iter()
                .map(|x| x * r)
                .collect()
        })
        .collect();
    let (n_train, n_val) = cfg.split_sizes();
    let mut parts: [(Vec<usize>, Vec<Vec<f64>>); 3] = Default::default();
    for (class, mean) in means.iter().enumerate() {
        for i in 0..cfg.samples_per_class {
            let part = if i < n_train {
                0
            } else if i < n_train + n_val {
                1
            } else {
                2
            };
            parts[part].0.push(class);
            parts[part].1.push(jitter(mean, cfg.within_std, &mut rng));
        }
    }
    let ood_label = cfg.n_classes;
    let ood_rows: Vec<Vec<f64>> = match cfg.ood_mode {
        OodMode::ShiftedCluster => {
            let center: Vec<f64> = unit_vector(cfg.dim, &mut rng)
                .into_iter()
                .map(|x| 3.0 * r * x)
                .collect();
            (0..cfg.ood_count)
                .map(|_| jitter(&center, cfg.within_std, &mut rng))
                .collect()
        }
        OodMode::UniformShell => {
            let radius = Uniform::new_inclusive(2.0 * r, 4.0 * r)
                .map_err(|e| Error::ConfigValue(e.to_string()))?;
            (0..cfg.ood_count)
                .map(|_| {
                    let rad = radius.sample(&mut rng);
                    unit_vector(cfg.dim, &mut rng)
                        .into_iter()
                        .map(|x| rad * x)
                        .collect()
                })
                .collect()
        }
    };
    let half = cfg.ood_count / 2;
    let (val_ood, test_ood) = ood_rows.split_at(half);
    let ood_bank =
        |rows: &[Vec<f64>]| FeatureBank::new(cfg.dim, vec![ood_label; rows.len()], rows.to_vec());
    let [train, val, test] = parts;
    Ok(SynthSplits {
        train_id: FeatureBank::new(cfg.dim, train.0, train.1)?,
        val_id: FeatureBank::new(cfg.dim, val.0, val.1)?,
        val_ood: ood_bank(val_ood)?,
        test_id: FeatureBank::new(cfg.dim, test.0, test.1)?,
        test_ood: ood_bank(test_ood)?,
    })
}

impl SynthSplits {
    fn banks(&self) -> [&FeatureBank; 5] {
        [
            &self.train_id,
            &self.val_id,
            &self.val_ood,
            &self.test_id,
            &self.test_ood,
        ]
    }

    /// Writes the banks as `train_id.hodf`, `val_id.hodf`, … into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (bank, name) in self.banks().into_iter().zip(SPLIT_FILES) {
            let path = dir.join(name);
            write_feature_file(bank, &path)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let [a, b, c, d, e] = SPLIT_FILES.map(|n| read_feature_file(dir.join(n)));
        Ok(Self {
            train_id: a?,
            val_id: b?,
            val_ood: c?,
            test_id: d?,
            test_ood: e?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_bank() -> FeatureBank {
        FeatureBank::new(
            3,
            vec![0, 2, 1],
            vec![
                vec![0.1, -2.5, 1e-300],
                vec![f64::MAX, 0.3333333333333333, -0.0],
                vec![7.0, 8.0, 9.5],
            ],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let bank = sample_bank();
        let bytes = encode_binary(&bank).unwrap();
        assert_eq!(&bytes[..4], b"HODF");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 3 * (4 + 24));
        let back = decode_binary(&bytes).unwrap();
        for (a, b) in back.rows.iter().flatten().zip(bank.rows.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.labels, bank.labels);
        assert_eq!(encode_binary(&back).unwrap(), bytes);
    }

    #[test]
    fn csv_round_trip() {
        let bank = sample_bank();
        let text = encode_csv(&bank);
        assert!(text.starts_with("label,dim=3\n"));
        let back = decode_csv(&text).unwrap();
        for (a, b) in back.rows.iter().flatten().zip(bank.rows.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_errors_name_the_line() {
        assert!(matches!(
            decode_csv(""),
            Err(Error::MalformedHeader { line: 1, .. })
        ));
        assert!(matches!(
            decode_csv("x,y\n"),
            Err(Error::MalformedHeader { line: 1, .. })
        ));
        let err = decode_csv("label,dim=3\n0,1,2,3\n1,1,2\n").unwrap_err();
        assert!(matches!(
            err,
            Error::RowLength {
                line: 3,
                expected: 3,
                found: 2
            }
        ));
        let err = decode_csv("label,dim=1\n-1,2\n").unwrap_err();
        assert!(matches!(err, Error::ParseValue { line: 2, .. }));
        let err = decode_csv("label,dim=1\n0,abc\n").unwrap_err();
        assert!(matches!(err, Error::ParseValue { line: 2, .. }));
    }

    #[test]
    fn binary_errors_name_the_offset() {
        let mut bytes = encode_binary(&sample_bank()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_binary(&bytes),
            Err(Error::BadMagic { offset: 0, .. })
        ));
        let bytes = encode_binary(&sample_bank()).unwrap();
        assert!(matches!(
            decode_binary(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut bytes = encode_binary(&sample_bank()).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode_binary(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
        let mut bytes = encode_binary(&sample_bank()).unwrap();
        bytes[20..24].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(matches!(
            decode_binary(&bytes),
            Err(Error::InvalidData { offset: 20, .. })
        ));
    }

    #[test]
    fn generator_is_deterministic_and_split() {
        let cfg = SynthDataConfig {
            samples_per_class: 20,
            ood_count: 10,
            dim: 5,
            ..Default::default()
        };
        let a = gen_synthetic(&cfg).unwrap();
        assert_eq!(a, gen_synthetic(&cfg).unwrap());
        assert_eq!(a.train_id.len(), 4 * 14);
        assert_eq!(a.val_id.len(), 4 * 3);
        assert_eq!(a.test_id.len(), 4 * 3);
        assert_eq!((a.val_ood.len(), a.test_ood.len()), (5, 5));
        assert!(a.val_ood.labels().iter().all(|&l| l == 4));
        let b = gen_synthetic(&SynthDataConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn tiny_std_collapses_rows_onto_means() {
        let cfg = SynthDataConfig {
            samples_per_class: 10,
            within_std: 1e-300,
            ..Default::default()
        };
        let s = gen_synthetic(&cfg).unwrap();
        for class in 0..4 {
            let rows: Vec<&Vec<f64>> = s
                .train_id
                .rows()
                .iter()
                .zip(s.train_id.labels())
                .filter(|(_, &l)| l == class)
                .map(|(r, _)| r)
                .collect();
            assert!(rows.windows(2).all(|w| w[0] == w[1]));
            let norm = rows[0].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_generator_config() {
        let bad = SynthDataConfig {
            within_std: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthDataConfig {
            class_radius: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
