//! Tabular input: CSV loading, SMOTE balancing, min-max scaling to [0, π] and
//! stratified splitting.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: label `{value}` is not 0 or 1")]
    LabelNotBinary { line: u64, value: String },
    #[error("class {class} has {have} samples; SMOTE with k={k} needs at least {}", k + 1)]
    TooFewMinoritySamples { class: u8, have: usize, k: usize },
    #[error("invalid split ratios {0:?}")]
    Ratio(Vec<f64>),
    #[error("dataset is empty")]
    Empty,
}

/// Feature matrix (row-major) with binary labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    num_features: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(num_features: usize) -> Self {
        Dataset {
            num_features,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Self {
        assert_eq!(rows.len(), labels.len());
        let num_features = rows.first().map_or(0, Vec::len);
        let mut d = Dataset::new(num_features);
        for (r, l) in rows.iter().zip(labels) {
            d.push(r, l);
        }
        d
    }

    pub fn push(&mut self, row: &[f64], label: u8) {
        assert_eq!(row.len(), self.num_features, "row width");
        assert!(label <= 1, "labels are binary");
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.num_features.max(1)).take(self.len())
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.len() - ones, ones]
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut d = Dataset::new(self.num_features);
        for &i in indices {
            d.push(self.row(i), self.labels[i]);
        }
        d
    }

    pub fn concat(&self, other: &Dataset) -> Dataset {
        assert_eq!(self.num_features, other.num_features);
        let mut d = self.clone();
        d.features.extend_from_slice(&other.features);
        d.labels.extend_from_slice(&other.labels);
        d
    }

    fn class_indices(&self, class: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

/// Which CSV columns hold features and the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub feature_columns: Vec<String>,
    pub label_column: String,
}

impl Default for CsvSchema {
    /// `V1`…`V28` and `Class`, the public credit-card fraud layout.
    fn default() -> Self {
        CsvSchema {
            feature_columns: (1..=28).map(|i| format!("V{i}")).collect(),
            label_column: "Class".to_string(),
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let lookup = |name: &str| {
        position.get(name).copied().ok_or_else(|| DataError::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let feature_idx = schema
        .feature_columns
        .iter()
        .map(|c| lookup(c))
        .collect::<Result<Vec<_>, _>>()?;
    let label_idx = lookup(&schema.label_column)?;

    let mut data = Dataset::new(feature_idx.len());
    let mut row = vec![0.0; feature_idx.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            record.get(i).ok_or_else(|| DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            })
        };
        for (dst, &i) in row.iter_mut().zip(&feature_idx) {
            let text = field(i)?;
            let v: f64 = text.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("`{text}` in column `{}` is not a number", &headers[i]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    message: format!("non-finite value in column `{}`", &headers[i]),
                });
            }
            *dst = v;
        }
        let text = field(label_idx)?;
        let label = match text.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            Ok(_) => {
                return Err(DataError::LabelNotBinary {
                    line,
                    value: text.to_string(),
                })
            }
            Err(_) => {
                return Err(DataError::Parse {
                    line,
                    message: format!("label `{text}` is not a number"),
                })
            }
        };
        data.push(&row, label);
    }
    Ok(data)
}

/// Where a synthetic SMOTE row came from, as indices into the input dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub base: usize,
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub data: Dataset,
    /// One entry per synthetic row; synthetic rows follow all retained originals.
    pub synthetic: Vec<SyntheticOrigin>,
    /// Input indices of the retained original rows, in output order.
    pub retained: Vec<usize>,
}

/// Brings both classes to exactly `target_per_class` rows: a class above the
/// target is subsampled without replacement, a class below it is topped up with
/// SMOTE interpolants between each picked sample and one of its `k` nearest
/// same-class neighbours. Retained originals keep their relative order.
pub fn smote<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    target_per_class: usize,
    rng: &mut R,
) -> Result<SmoteOutput, DataError> {
    assert!(k >= 1, "SMOTE needs k >= 1");
    let mut retained = Vec::new();
    let mut synthetic = Vec::new();
    let mut synth_rows = Dataset::new(data.num_features());
    for class in [0u8, 1] {
        let members = data.class_indices(class);
        if members.len() >= target_per_class {
            let mut keep: Vec<usize> = rand::seq::index::sample(rng, members.len(), target_per_class)
                .into_iter()
                .map(|i| members[i])
                .collect();
            keep.sort_unstable();
            retained.extend(keep);
            continue;
        }
        retained.extend(&members);
        if members.len() < k + 1 {
            return Err(DataError::TooFewMinoritySamples {
                class,
                have: members.len(),
                k,
            });
        }
        let mut neighbours: HashMap<usize, Vec<usize>> = HashMap::new();
        for _ in members.len()..target_per_class {
            let base = members[rng.random_range(0..members.len())];
            let nn = neighbours
                .entry(base)
                .or_insert_with(|| nearest_neighbours(data, base, &members, k));
            let neighbor = nn[rng.random_range(0..k)];
            let gap: f64 = rng.random();
            let row: Vec<f64> = data
                .row(base)
                .iter()
                .zip(data.row(neighbor))
                .map(|(a, b)| a + gap * (b - a))
                .collect();
            synth_rows.push(&row, class);
            synthetic.push(SyntheticOrigin { base, neighbor, gap });
        }
    }
    retained.sort_unstable();
    let out = data.select(&retained).concat(&synth_rows);
    Ok(SmoteOutput {
        data: out,
        synthetic,
        retained,
    })
}

/// The `k` rows of `members` nearest to `base` (Euclidean), ties by index.
fn nearest_neighbours(data: &Dataset, base: usize, members: &[usize], k: usize) -> Vec<usize> {
    let x = data.row(base);
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .filter(|&&m| m != base)
        .map(|&m| {
            let dist = x
                .iter()
                .zip(data.row(m))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (dist, m)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, m)| m).collect()
}

/// Per-feature min/max of the fitted data; maps each feature onto [0, π].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(data: &Dataset) -> Self {
        let f = data.num_features();
        let mut mins = vec![f64::INFINITY; f];
        let mut maxs = vec![f64::NEG_INFINITY; f];
        for row in data.rows() {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        if data.is_empty() {
            mins.fill(0.0);
            maxs.fill(0.0);
        }
        ScalerParams { mins, maxs }
    }

    /// Scales `data`; values outside the fitted range are clamped into [0, π].
    /// Constant features map to 0.
    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut out = Dataset::new(data.num_features());
        let mut buf = vec![0.0; data.num_features()];
        for (row, &label) in data.rows().zip(data.labels()) {
            for (j, (dst, &v)) in buf.iter_mut().zip(row).enumerate() {
                let span = self.maxs[j] - self.mins[j];
                *dst = if span > 0.0 {
                    ((v - self.mins[j]) / span * PI).clamp(0.0, PI)
                } else {
                    0.0
                };
            }
            out.push(&buf, label);
        }
        out
    }
}

pub fn minmax_scale(data: &Dataset) -> (Dataset, ScalerParams) {
    let params = ScalerParams::fit(data);
    (params.transform(data), params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Row indices (into the split input) of each partition, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn check_ratios(ratios: [f64; 3]) -> Result<(), DataError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::Ratio(ratios.to_vec()));
    }
    Ok(())
}

/// Per class: shuffle, then cut at round(r_train·n) and round(r_val·n); the
/// remainder is test.
pub fn stratified_split<R: Rng + ?Sized>(
    data: &Dataset,
    ratios: [f64; 3],
    rng: &mut R,
) -> Result<(SplitSet, SplitIndices), DataError> {
    check_ratios(ratios)?;
    let mut idx = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in [0u8, 1] {
        let mut members = data.class_indices(class);
        members.shuffle(rng);
        let n = members.len();
        let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
        let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
        idx.train.extend(&members[..n_train]);
        idx.val.extend(&members[n_train..n_train + n_val]);
        idx.test.extend(&members[n_train + n_val..]);
    }
    idx.train.sort_unstable();
    idx.val.sort_unstable();
    idx.test.sort_unstable();
    let split = SplitSet {
        train: data.select(&idx.train),
        val: data.select(&idx.val),
        test: data.select(&idx.test),
    };
    Ok((split, idx))
}
