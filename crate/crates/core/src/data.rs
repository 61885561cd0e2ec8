//! Regression datasets: CSV ingestion, train/test split, feature statistics,
//! standardization and the bounded uniform input-noise model.
//!
//! Features are always kept in their original units. Standardization is a
//! transform applied when samples are handed to the network, so noise can be
//! injected in the original feature space first.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::optimizer::Samples;
use crate::{seeded_rng, RngStream};

/// Which CSV column holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.trim().to_string()),
        })
    }
}

impl fmt::Display for TargetColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetColumn::Index(i) => write!(f, "{i}"),
            TargetColumn::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-feature minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureBounds {
    pub fn range(&self) -> Vec<f64> {
        self.max.iter().zip(&self.min).map(|(hi, lo)| hi - lo).collect()
    }
}

/// Z-scoring with statistics from the training rows. Zero-variance features
/// are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

/// Preprocessing learned from the training rows: everything needed to turn
/// raw feature rows into network inputs and to scale noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub bounds: FeatureBounds,
    pub standardizer: Option<Standardizer>,
    pub split: Split,
}

impl Preprocessing {
    pub fn model_input(&self, raw: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.transform(raw),
            None => raw.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    target_name: String,
    /// Raw features, one row per sample.
    x: Matrix,
    y: Vec<f64>,
    split: Option<Split>,
    bounds: Option<FeatureBounds>,
    standardizer: Option<Standardizer>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, feature_names: Vec<String>, target_name: String) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape("dataset targets", x.rows(), y.len()));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::shape("feature names", x.cols(), feature_names.len()));
        }
        if x.rows() < 2 {
            return Err(Error::Config(format!("dataset needs at least 2 rows, got {}", x.rows())));
        }
        Ok(Dataset {
            feature_names,
            target_name,
            x,
            y,
            split: None,
            bounds: None,
            standardizer: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn split_indices(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn bounds(&self) -> Option<&FeatureBounds> {
        self.bounds.as_ref()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardizer.is_some()
    }

    /// Shuffles rows with `seed` and assigns the first
    /// `round(train_fraction · n)` to training, the rest to test. Feature
    /// bounds are recomputed from the new training rows and any previous
    /// standardization is dropped.
    pub fn split(mut self, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction must lie in (0, 1), got {train_fraction}")));
        }
        let n = self.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Config(format!(
                "train fraction {train_fraction} leaves an empty train or test set for {n} rows"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded_rng(seed, RngStream::Split));
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        self.split = Some(Split { train, test });
        self.standardizer = None;
        self.bounds = Some(self.feature_bounds()?);
        Ok(self)
    }

    /// Per-feature min and max over the training rows.
    pub fn feature_bounds(&self) -> Result<FeatureBounds> {
        let split = self.require_split("feature bounds")?;
        let d = self.n_features();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for &i in &split.train {
            for (j, &v) in self.x.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(FeatureBounds { min, max })
    }

    /// Enables z-scoring with mean and (population) standard deviation of the
    /// training rows. Test rows are transformed with the same statistics.
    pub fn standardize(mut self) -> Result<Self> {
        let split = self.require_split("standardization")?;
        let d = self.n_features();
        let n = split.train.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in &split.train {
            for (m, v) in mean.iter_mut().zip(self.x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in &split.train {
            for (j, v) in self.x.row(i).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    log::warn!("feature `{}` is constant on the training rows; centring only", self.feature_names[j]);
                    1.0
                }
            })
            .collect();
        self.standardizer = Some(Standardizer { mean, scale });
        Ok(self)
    }

    pub fn preprocessing(&self) -> Result<Preprocessing> {
        Ok(Preprocessing {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            bounds: self.bounds.clone().ok_or_else(|| self.missing_split("preprocessing"))?,
            standardizer: self.standardizer.clone(),
            split: self.require_split("preprocessing")?.clone(),
        })
    }

    /// Re-applies preprocessing saved from an earlier run: its split, feature
    /// bounds and standardization replace whatever this dataset had.
    pub fn apply_preprocessing(mut self, pre: &Preprocessing) -> Result<Self> {
        let d = self.n_features();
        let dims_ok = pre.bounds.min.len() == d
            && pre.bounds.max.len() == d
            && pre.standardizer.as_ref().is_none_or(|s| s.mean.len() == d && s.scale.len() == d);
        if !dims_ok {
            return Err(Error::Validation(format!(
                "preprocessing is for {} features but the dataset has {d}",
                pre.bounds.min.len()
            )));
        }
        let n = self.len();
        if let Some(&i) = pre.split.train.iter().chain(&pre.split.test).find(|&&i| i >= n) {
            return Err(Error::Validation(format!(
                "preprocessing split refers to row {i} but the dataset has {n} rows"
            )));
        }
        self.split = Some(pre.split.clone());
        self.bounds = Some(pre.bounds.clone());
        self.standardizer = pre.standardizer.clone();
        Ok(self)
    }

    /// Network-ready samples for the given rows, standardized if enabled.
    pub fn samples(&self, rows: &[usize]) -> Result<Samples> {
        self.samples_with(rows, |_, raw| raw.to_vec())
    }

    pub fn train_samples(&self) -> Result<Samples> {
        self.samples(&self.require_split("training samples")?.train)
    }

    pub fn test_samples(&self) -> Result<Samples> {
        self.samples(&self.require_split("test samples")?.test)
    }

    pub fn all_samples(&self) -> Result<Samples> {
        self.samples(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Samples for `rows` with noise `η·range·u` added to the raw features
    /// before standardization. `draws` holds one row of `u` per entry of
    /// `rows`.
    pub fn noisy_samples(&self, rows: &[usize], eta: f64, draws: &NoiseDraws) -> Result<Samples> {
        if draws.u.rows() != rows.len() || draws.u.cols() != self.n_features() {
            return Err(Error::shape(
                "noise draws",
                format!("{}x{}", rows.len(), self.n_features()),
                format!("{}x{}", draws.u.rows(), draws.u.cols()),
            ));
        }
        let bounds = self.bounds.as_ref().ok_or_else(|| self.missing_split("noisy samples"))?;
        self.samples_with(rows, |k, raw| perturb(raw, eta, bounds, draws.u.row(k)))
    }

    fn samples_with(&self, rows: &[usize], mut raw_row: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Samples> {
        let d = self.n_features();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut targets = Vec::with_capacity(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::shape("sample row", format!("< {}", self.len()), i));
            }
            let raw = raw_row(k, self.x.row(i));
            match &self.standardizer {
                Some(s) => data.extend(s.transform(&raw)),
                None => data.extend(raw),
            }
            targets.push(self.y[i]);
        }
        Samples::new(Matrix::new(rows.len(), d, data)?, targets)
    }

    fn require_split(&self, what: &str) -> Result<&Split> {
        self.split.as_ref().ok_or_else(|| self.missing_split(what))
    }

    fn missing_split(&self, what: &str) -> Error {
        Error::Config(format!("{what} needs a train/test split; call split() first"))
    }
}

/// Reads a numeric CSV. A first row containing any non-numeric cell is taken
/// as the header. All columns other than `target` become features, in file
/// order.
pub fn load_csv(path: &Path, target: &TargetColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, &e, 0))?;

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, &e, 0))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "file contains no rows".into(),
        });
    };
    let width = first.len();
    let header: Option<Vec<String>> = first
        .iter()
        .any(|c| c.parse::<f64>().is_err())
        .then(|| first.iter().map(str::to_string).collect());
    let body = &records[usize::from(header.is_some())..];

    let target_idx = match target {
        TargetColumn::Index(i) if *i < width => *i,
        TargetColumn::Index(i) => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("target column index {i} out of range for {width} columns"),
            })
        }
        TargetColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                message: match &header {
                    Some(h) => format!("target column `{name}` not found in header {h:?}"),
                    None => format!("target column `{name}` requested by name but the file has no header row"),
                },
            })?,
    };
    let names: Vec<String> = header.unwrap_or_else(|| (0..width).map(|j| format!("x{j}")).collect());

    let mut x = Vec::with_capacity(body.len() * (width - 1));
    let mut y = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row: *line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    row: *line,
                    column: j + 1,
                    message: format!("`{cell}` is not a finite number"),
                })?;
            if j == target_idx {
                y.push(value);
            } else {
                x.push(value);
            }
        }
    }
    if y.len() < 2 {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("need at least 2 data rows, found {}", y.len()),
        });
    }
    let mut feature_names = names;
    let target_name = feature_names.remove(target_idx);
    let n = y.len();
    Dataset::new(Matrix::new(n, width - 1, x)?, y, feature_names, target_name)
}

fn csv_error(path: &Path, e: &csv::Error, column: usize) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::io(path, std::io::Error::new(io.kind(), io.to_string())),
        _ => Error::Csv {
            path: PathBuf::from(path),
            row,
            column,
            message: e.to_string(),
        },
    }
}

/// How the uniform draws `u` are shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDraw {
    /// Independent `u` for every feature.
    #[default]
    PerFeature,
    /// One `u` per sample shared by all its features.
    Scalar,
}

/// Noise `δ = η·(x_max − x_min)⊙u`, `u ~ U([0,1])` (or `U([−1,1])` when
/// symmetric).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eta: f64,
    pub seed: u64,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub draw: NoiseDraw,
}

impl NoiseSpec {
    pub fn new(eta: f64, seed: u64) -> Self {
        NoiseSpec {
            eta,
            seed,
            symmetric: false,
            draw: NoiseDraw::PerFeature,
        }
    }

    fn draw_u<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        let mut sample = || {
            if self.symmetric {
                rng.gen_range(-1.0..=1.0)
            } else {
                rng.gen_range(0.0..=1.0)
            }
        };
        match self.draw {
            NoiseDraw::PerFeature => (0..dim).map(|_| sample()).collect(),
            NoiseDraw::Scalar => vec![sample(); dim],
        }
    }
}

/// `x + η·(max − min)⊙u` for given draws `u`.
pub fn perturb(x: &[f64], eta: f64, bounds: &FeatureBounds, u: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(bounds.max.iter().zip(&bounds.min))
        .zip(u)
        .map(|((xi, (hi, lo)), ui)| xi + eta * (hi - lo) * ui)
        .collect()
}

/// Adds one noise realization to `x`, drawing `u` from `rng`.
pub fn apply_noise<R: Rng + ?Sized>(x: &Vector, spec: &NoiseSpec, bounds: &FeatureBounds, rng: &mut R) -> Result<Vector> {
    if x.dim() != bounds.min.len() || x.dim() != bounds.max.len() {
        return Err(Error::shape("noise bounds", x.dim(), bounds.min.len()));
    }
    let u = spec.draw_u(x.dim(), rng);
    Vector::new(perturb(x.as_slice(), spec.eta, bounds, &u))
}

/// A frozen matrix of uniform draws, one row per sample. Scaling the same
/// draws by different η gives noise sets that differ only in amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    pub u: Matrix,
}

impl NoiseDraws {
    /// Draws `rows x dim` values from the stream determined by `spec.seed`.
    /// `spec.eta` is not used here.
    pub fn generate(rows: usize, dim: usize, spec: &NoiseSpec) -> Self {
        let mut rng = seeded_rng(spec.seed, RngStream::Noise);
        let data = (0..rows).flat_map(|_| spec.draw_u(dim, &mut rng)).collect();
        NoiseDraws {
            u: Matrix::new(rows, dim, data).expect("uniform draws are finite"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn toy(n: usize) -> Dataset {
        let x = Matrix::new(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i as f64).collect(), vec!["a".into(), "b".into()], "y".into()).unwrap()
    }

    #[test]
    fn headerless_csv_recovers_matrix() {
        let f = write_csv("1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(f.path(), &TargetColumn::Index(2)).unwrap();
        assert_eq!(ds.features().as_slice(), &[1.0, 2.0, 4.0, 5.0, 7.0, 8.0]);
        assert_eq!(ds.targets(), &[3.0, 6.0, 9.0]);
    }

    #[test]
    fn header_is_detected_and_skipped() {
        let plain = load_csv(write_csv("1,2,3\n4,5,6\n7,8,9\n").path(), &TargetColumn::Index(0)).unwrap();
        let f = write_csv("a, b ,c\n1,2,3\n4,5,6\n7,8,9\n");
        let named = load_csv(f.path(), &TargetColumn::Name("a".into())).unwrap();
        assert_eq!(plain.features(), named.features());
        assert_eq!(plain.targets(), named.targets());
        assert_eq!(named.feature_names(), &["b".to_string(), "c".to_string()]);
        assert_eq!(named.target_name(), "a");
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let f = write_csv("a,b\n1,2\n3,oops\n");
        match load_csv(f.path(), &TargetColumn::Index(1)) {
            Err(Error::Csv { row: 3, column: 2, message, .. }) => assert!(message.contains("oops")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_target_is_schema_error() {
        let f = write_csv("a,b\n1,2\n3,4\n");
        assert!(matches!(load_csv(f.path(), &TargetColumn::Name("z".into())), Err(Error::Schema { .. })));
        assert!(matches!(load_csv(f.path(), &TargetColumn::Index(5)), Err(Error::Schema { .. })));
        let f = write_csv("1,2\n3,4\n");
        assert!(matches!(load_csv(f.path(), &TargetColumn::Name("a".into())), Err(Error::Schema { .. })));
    }

    #[test]
    fn ragged_row_is_rejected() {
        let f = write_csv("1,2,3\n4,5\n");
        assert!(matches!(load_csv(f.path(), &TargetColumn::Index(0)), Err(Error::Csv { row: 2, .. })));
    }

    #[test]
    fn target_column_parsing() {
        assert_eq!("3".parse::<TargetColumn>().unwrap(), TargetColumn::Index(3));
        assert_eq!("MEDV".parse::<TargetColumn>().unwrap(), TargetColumn::Name("MEDV".into()));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let a = toy(10).split(0.8, 3).unwrap();
        let s = a.split_indices().unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert!(s.train.iter().all(|i| !s.test.contains(i)));
        let b = toy(10).split(0.8, 3).unwrap();
        assert_eq!(a.split_indices(), b.split_indices());
        assert!(toy(10).split(1.0, 0).is_err());
        assert!(toy(10).split(0.0, 0).is_err());
        assert!(toy(2).split(0.9, 0).is_err());
    }

    #[test]
    fn bounds_use_training_rows() {
        let x = Matrix::new(11, 2, (0..=10).flat_map(|i| [i as f64, 4.0]).collect()).unwrap();
        let ds = Dataset::new(x, vec![0.0; 11], vec!["a".into(), "c".into()], "y".into()).unwrap();
        assert!(ds.feature_bounds().is_err());
        let ds = ds.split(0.5, 1).unwrap();
        let b = ds.bounds().unwrap();
        let train = &ds.split_indices().unwrap().train;
        let lo = train.iter().map(|&i| i as f64).fold(f64::INFINITY, f64::min);
        let hi = train.iter().map(|&i| i as f64).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((b.min[0], b.max[0]), (lo, hi));
        assert_eq!((b.min[1], b.max[1]), (4.0, 4.0));
    }

    #[test]
    fn constant_feature_is_centred_only() {
        let x = Matrix::new(4, 1, vec![2.0; 4]).unwrap();
        let ds = Dataset::new(x, vec![0.0; 4], vec!["k".into()], "y".into())
            .unwrap()
            .split(0.5, 0)
            .unwrap()
            .standardize()
            .unwrap();
        let s = ds.standardizer().unwrap();
        assert_eq!((s.mean[0], s.scale[0]), (2.0, 1.0));
        assert_eq!(ds.train_samples().unwrap().inputs.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn already_standard_feature_is_unchanged() {
        // Training rows ±1 have mean 0 and population sd 1.
        let x = Matrix::new(4, 1, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let ds = Dataset::new(x, vec![0.0; 4], vec!["k".into()], "y".into()).unwrap();
        let ds = ds.split(0.5, 0).unwrap();
        let train = ds.split_indices().unwrap().train.clone();
        let vals: Vec<f64> = train.iter().map(|&i| ds.features()[(i, 0)]).collect();
        if vals[0] != vals[1] {
            let ds = ds.standardize().unwrap();
            let inputs = ds.train_samples().unwrap().inputs;
            for (got, want) in inputs.as_slice().iter().zip(vals) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardizer_inverse_round_trips() {
        let s = Standardizer {
            mean: vec![1.0, -2.0],
            scale: vec![3.0, 0.5],
        };
        let row = [4.0, 7.25];
        let back = s.inverse(&s.transform(&row));
        assert!((back[0] - row[0]).abs() < 1e-12 && (back[1] - row[1]).abs() < 1e-12);
    }

    #[test]
    fn preprocessing_round_trip() {
        let ds = toy(10).split(0.8, 2).unwrap().standardize().unwrap();
        let pre = ds.preprocessing().unwrap();
        let again = toy(10).apply_preprocessing(&pre).unwrap();
        assert_eq!(again, ds);
        let json = serde_json::to_string(&pre).unwrap();
        assert_eq!(serde_json::from_str::<Preprocessing>(&json).unwrap(), pre);
        assert!(toy(5).apply_preprocessing(&pre).is_err());
        assert!(toy(10).preprocessing().is_err());
    }

    #[test]
    fn noise_formula() {
        let bounds = FeatureBounds {
            min: vec![0.0],
            max: vec![10.0],
        };
        assert_eq!(perturb(&[3.0], 0.2, &bounds, &[0.5]), vec![4.0]);
        let x = Vector::new(vec![3.0]).unwrap();
        let mut rng = seeded_rng(0, RngStream::Noise);
        let same = apply_noise(&x, &NoiseSpec::new(0.0, 0), &bounds, &mut rng).unwrap();
        assert_eq!(same, x);
    }

    #[test]
    fn noise_draws_are_reproducible_and_shaped() {
        let spec = NoiseSpec::new(0.4, 7);
        assert_eq!(NoiseDraws::generate(5, 3, &spec), NoiseDraws::generate(5, 3, &spec));
        let u = NoiseDraws::generate(50, 3, &spec).u;
        assert!(u.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let scalar = NoiseDraws::generate(4, 3, &NoiseSpec { draw: NoiseDraw::Scalar, ..spec }).u;
        for r in 0..4 {
            assert!(scalar.row(r).iter().all(|&v| v == scalar.row(r)[0]));
        }
        let sym = NoiseDraws::generate(200, 2, &NoiseSpec { symmetric: true, ..spec }).u;
        assert!(sym.as_slice().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn noisy_samples_add_noise_before_scaling() {
        let ds = toy(10).split(0.8, 1).unwrap().standardize().unwrap();
        let test = ds.split_indices().unwrap().test.clone();
        let draws = NoiseDraws::generate(test.len(), 2, &NoiseSpec::new(0.0, 1));
        assert_eq!(ds.noisy_samples(&test, 0.0, &draws).unwrap(), ds.test_samples().unwrap());
        let noisy = ds.noisy_samples(&test, 0.5, &draws).unwrap();
        let s = ds.standardizer().unwrap();
        let range = ds.bounds().unwrap().range();
        for (k, &i) in test.iter().enumerate() {
            let raw = s.inverse(noisy.inputs.row(k));
            for j in 0..2 {
                let delta = raw[j] - ds.features()[(i, j)];
                assert!((delta - 0.5 * range[j] * draws.u[(k, j)]).abs() < 1e-9);
            }
        }
    }
}
