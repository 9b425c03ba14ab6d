//! CSV ingestion, train/test splits and synthetic stand-in datasets.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::transforms::sigmoid;
use crate::models::volatility::simulate_garch;

/// A numeric CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("missing column '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Reads a numeric CSV; line numbers in errors are 1-based and count the header.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_table(file)
}

pub fn parse_table<R: std::io::Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            column: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        let mut row = Vec::with_capacity(columns.len());
        for (j, cell) in record.iter().enumerate() {
            let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: j + 1,
                message: format!("non-numeric cell '{cell}' in column '{}'", columns[j]),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Classification,
    Regression,
    Returns,
    /// Realized-volatility series turned into HAR regressors.
    Har,
}

impl DataKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(DataKind::Classification),
            "regression" => Ok(DataKind::Regression),
            "returns" => Ok(DataKind::Returns),
            "har" => Ok(DataKind::Har),
            other => Err(Error::Config(format!("unknown data kind '{other}'"))),
        }
    }
}

/// Which columns to use and how to split.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub kind: DataKind,
    /// Label, target or series column.
    pub target: String,
    /// Feature columns; empty means every other column.
    pub features: Vec<String>,
    pub intercept: bool,
    pub train_fraction: f64,
    /// Shuffle rows with this seed before splitting.
    pub shuffle_seed: Option<u64>,
}

/// Design matrix plus response, or a return series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DataKind,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
    /// Rows `0..split` are training data.
    pub split: usize,
}

impl Dataset {
    pub fn new(kind: DataKind, x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>, split: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        if split == 0 || split > y.len() {
            return Err(Error::Config(format!("split {split} outside 1..={}", y.len())));
        }
        Ok(Dataset { kind, x, y, names, split })
    }

    /// Return series; `y` holds the returns and `x` has no columns.
    pub fn returns(series: Vec<f64>, train_fraction: f64) -> Result<Self> {
        let n = series.len();
        Self::new(
            DataKind::Returns,
            DMatrix::zeros(n, 0),
            DVector::from_vec(series),
            Vec::new(),
            split_index(n, train_fraction)?,
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn train(&self) -> (DMatrix<f64>, DVector<f64>) {
        (self.x.rows(0, self.split).into_owned(), self.y.rows(0, self.split).into_owned())
    }

    pub fn test(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.len() - self.split;
        (self.x.rows(self.split, m).into_owned(), self.y.rows(self.split, m).into_owned())
    }

    pub fn has_test(&self) -> bool {
        self.split < self.len()
    }

    /// Returns demeaned by the training mean, as (train, test).
    pub fn demeaned_returns(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = self.y.rows(0, self.split).mean();
        let all: Vec<f64> = self.y.iter().map(|r| r - mean).collect();
        let (a, b) = all.split_at(self.split);
        (a.to_vec(), b.to_vec())
    }
}

/// `floor(n * fraction)`, at least 1.
pub fn split_index(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0,1], got {fraction}")));
    }
    Ok(((n as f64 * fraction).floor() as usize).clamp(1, n.max(1)))
}

/// Builds a dataset from a table according to `schema`.
pub fn dataset_from_table(table: &Table, schema: &Schema) -> Result<Dataset> {
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("csv has no data rows"));
    }
    let mut rows: Vec<&Vec<f64>> = table.rows.iter().collect();
    if let Some(seed) = schema.shuffle_seed {
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let t = table.column_index(&schema.target)?;
    match schema.kind {
        DataKind::Returns => Dataset::returns(rows.iter().map(|r| r[t]).collect(), schema.train_fraction),
        DataKind::Har => {
            let rv: Vec<f64> = rows.iter().map(|r| r[t]).collect();
            let (x, y) = crate::models::linreg::har_design(&rv)?;
            let split = split_index(y.len(), schema.train_fraction)?;
            let names = ["const", "rv_day", "rv_week", "rv_month"].map(String::from).to_vec();
            Dataset::new(DataKind::Har, x, y, names, split)
        }
        DataKind::Classification | DataKind::Regression => {
            let features: Vec<String> = if schema.features.is_empty() {
                table.columns.iter().filter(|c| **c != schema.target).cloned().collect()
            } else {
                schema.features.clone()
            };
            let idx = features
                .iter()
                .map(|f| table.column_index(f))
                .collect::<Result<Vec<_>>>()?;
            let offset = usize::from(schema.intercept);
            let n = rows.len();
            let x = DMatrix::from_fn(n, idx.len() + offset, |i, j| {
                if j < offset {
                    1.0
                } else {
                    rows[i][idx[j - offset]]
                }
            });
            let y = DVector::from_fn(n, |i, _| rows[i][t]);
            let mut names = Vec::with_capacity(x.ncols());
            if schema.intercept {
                names.push("intercept".to_owned());
            }
            names.extend(features);
            Dataset::new(schema.kind, x, y, names, split_index(n, schema.train_fraction)?)
        }
    }
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    dataset_from_table(&read_table(path)?, schema)
}

fn normal_design<R: Rng + ?Sized>(n: usize, k: usize, intercept: bool, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, j| {
        if intercept && j == 0 {
            1.0
        } else {
            rng.sample(StandardNormal)
        }
    })
}

fn feature_names(k: usize, intercept: bool) -> Vec<String> {
    (0..k)
        .map(|j| if intercept && j == 0 { "intercept".to_owned() } else { format!("x{j}") })
        .collect()
}

/// Bernoulli labels from a logit model with standard-normal features.
pub fn synthetic_logistic<R: Rng + ?Sized>(
    n: usize,
    beta: &DVector<f64>,
    intercept: bool,
    train_fraction: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let x = normal_design(n, beta.len(), intercept, rng);
    let eta = &x * beta;
    let y = eta.map(|e| f64::from(rng.random::<f64>() < sigmoid(e)));
    Dataset::new(
        DataKind::Classification,
        x,
        y,
        feature_names(beta.len(), intercept),
        split_index(n, train_fraction)?,
    )
}

/// Linear-Gaussian responses with standard-normal features.
pub fn synthetic_linear<R: Rng + ?Sized>(
    n: usize,
    beta: &DVector<f64>,
    sigma: f64,
    intercept: bool,
    train_fraction: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let x = normal_design(n, beta.len(), intercept, rng);
    let noise = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let y = &x * beta + noise;
    Dataset::new(
        DataKind::Regression,
        x,
        y,
        feature_names(beta.len(), intercept),
        split_index(n, train_fraction)?,
    )
}

/// GARCH(1,1) returns.
pub fn synthetic_garch<R: Rng + ?Sized>(
    n: usize,
    omega: f64,
    alpha: f64,
    beta: f64,
    train_fraction: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0) {
        return Err(Error::Config("GARCH truth must satisfy omega > 0, alpha + beta < 1".into()));
    }
    Dataset::returns(simulate_garch(omega, alpha, beta, n, rng), train_fraction)
}

/// Log-AR(1) realized-volatility series for HAR fits.
pub fn synthetic_realized_vol<R: Rng + ?Sized>(n: usize, train_fraction: f64, rng: &mut R) -> Result<Dataset> {
    let mut level = 0.0f64;
    let rv: Vec<f64> = (0..n + 22)
        .map(|_| {
            level = 0.9 * level + 0.3 * rng.sample::<f64, _>(StandardNormal);
            level.exp()
        })
        .collect();
    let (x, y) = crate::models::linreg::har_design(&rv)?;
    let split = split_index(y.len(), train_fraction)?;
    let names = ["const", "rv_day", "rv_week", "rv_month"].map(String::from).to_vec();
    Dataset::new(DataKind::Har, x, y, names, split)
}
