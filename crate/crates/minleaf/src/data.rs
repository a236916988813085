//! Dataset loading, encoding and splitting.
//!
//! Everything downstream assumes feature values in `[0, 1]`, so loading
//! min-max normalizes each column (constant columns become all zeros).
//! Categorical columns are encoded either ordinally, in first-appearance
//! order, or one-hot. The per-feature resolution vector ([`compute_epsilon`])
//! captures the smallest gap between consecutive distinct values of each
//! feature; the largest entry doubles as a tight big-M constant in the
//! mixed-integer model.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How to turn a categorical column into numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// One column per input column; categories numbered in first-appearance
    /// order, then min-max normalized like any numeric column.
    Ordinal,
    /// One indicator column per category, named `column=category`.
    OneHot,
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordinal" => Ok(Encoding::Ordinal),
            "one_hot" | "one-hot" | "onehot" => Ok(Encoding::OneHot),
            other => Err(Error::InvalidConfig(format!(
                "unknown encoding {other:?}; expected \"ordinal\" or \"one_hot\""
            ))),
        }
    }
}

/// A fully numeric classification dataset with features in `[0, 1]`.
///
/// Values are stored row-major; `labels[i]` is an index into `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    p: usize,
    k: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from rows whose values already lie in `[0, 1]`.
    ///
    /// The number of classes is inferred as `max(labels) + 1`. Rejects ragged
    /// rows, empty data, out-of-range values and mismatched label length.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(rows, labels, k)
    }

    /// Like [`Dataset::new`] but with an explicit class count, so a dataset
    /// may declare classes that happen to be absent from its rows (as
    /// subsets produced by splitting can).
    pub fn with_classes(rows: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = rows.len();
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::InvalidDataset("dataset has no feature columns".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                n,
                labels.len()
            )));
        }
        let mut values = Vec::with_capacity(n * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "row {} has {} values, expected {}",
                    i,
                    row.len(),
                    p
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidDataset(format!(
                        "value {v} at row {i}, feature {j} is outside [0, 1]; normalize first"
                    )));
                }
                values.push(v);
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::InvalidDataset(format!(
                    "label {y} at row {i} is outside 0..{k}"
                )));
            }
        }
        let feature_names = (0..p).map(|j| format!("f{j}")).collect();
        let class_names = (0..k).map(|c| format!("class_{c}")).collect();
        Ok(Dataset {
            values,
            labels,
            n,
            p,
            k,
            feature_names,
            class_names,
        })
    }

    /// Builds a dataset from raw rows, min-max normalizing each column.
    pub fn from_unnormalized(mut rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = rows[0].len();
        for j in 0..p {
            let column: Vec<f64> = rows
                .iter()
                .map(|r| r.get(j).copied().unwrap_or(f64::NAN))
                .collect();
            let normalized = min_max_normalize(&column);
            for (r, v) in rows.iter_mut().zip(normalized) {
                if j < r.len() {
                    r[j] = v;
                }
            }
        }
        Self::new(rows, labels)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} features",
                names.len(),
                self.p
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k {
            return Err(Error::InvalidDataset(format!(
                "{} class names for {} classes",
                names.len(),
                self.k
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of features.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of classes (some may be absent from a subset).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Per-class sample counts, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// New dataset holding the given rows (indices may repeat); class count
    /// and names are preserved.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            values,
            labels,
            n: indices.len(),
            p: self.p,
            k: self.k,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Maps a column onto `[0, 1]` by min-max scaling; constant columns (and any
/// column containing a non-finite value) map to all zeros.
pub fn min_max_normalize(column: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in column {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi - lo).is_finite() || hi <= lo {
        return vec![0.0; column.len()];
    }
    column.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// Smallest positive gap between consecutive distinct values, per feature.
///
/// Features with fewer than two distinct values get a gap of 1. `max` is the
/// largest per-feature gap and bounds every gap from above, which is what the
/// big-M constant in the mixed-integer model needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonVector {
    per_feature: Vec<f64>,
    max: f64,
}

impl EpsilonVector {
    pub fn feature(&self, j: usize) -> f64 {
        self.per_feature[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.per_feature
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Computes the per-feature resolution vector of a dataset.
pub fn compute_epsilon(ds: &Dataset) -> EpsilonVector {
    let mut per_feature = Vec::with_capacity(ds.p());
    for j in 0..ds.p() {
        let mut column: Vec<f64> = (0..ds.n()).map(|i| ds.value(i, j)).collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        column.dedup();
        let gap = column
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        per_feature.push(if gap.is_finite() { gap } else { 1.0 });
    }
    let max = per_feature.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    EpsilonVector { per_feature, max }
}

/// Seeded train/test split parameters.
///
/// The shuffled first `floor(train_fraction * n)` indices are the training
/// pool; training keeps at most `train_cap` of them, and the test set is the
/// untouched complement of the pool, so capping the training size never
/// shrinks the test set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_cap: Option<usize>,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            seed,
            train_fraction: 0.8,
            train_cap: Some(10_000),
        }
    }
}

/// Splits a dataset into train and test subsets.
///
/// The permutation is a Fisher-Yates shuffle driven by `ChaCha8`, which is
/// stable across platforms, so a recorded seed reproduces the split exactly.
/// Within each side the original row order is kept.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} is outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n = ds.n();
    let pool = (spec.train_fraction * n as f64).floor() as usize;
    if pool == 0 || pool == n {
        return Err(Error::SplitTooSmall { n });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let train_size = spec.train_cap.map_or(pool, |cap| pool.min(cap));
    if train_size == 0 {
        return Err(Error::SplitTooSmall { n });
    }
    let mut train_idx: Vec<usize> = indices[..train_size].to_vec();
    let mut test_idx: Vec<usize> = indices[pool..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Loads a CSV file with a header row into a normalized [`Dataset`].
///
/// `label` selects the label column by header name, or by zero-based index if
/// no header matches and it parses as an integer. A column where every cell
/// parses as a number is numeric; one where no cell parses is categorical; a
/// mix of the two is rejected so typos cannot silently change a column's
/// type. Empty cells are rejected as missing values, with their location.
pub fn load_csv(path: impl AsRef<Path>, label: &str, encoding: Encoding) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = match headers.iter().position(|h| h == label) {
        Some(idx) => idx,
        None => label
            .parse::<usize>()
            .ok()
            .filter(|&idx| idx < headers.len())
            .ok_or_else(|| Error::LabelColumnNotFound(label.to_string()))?,
    };

    let width = headers.len();
    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut row: Vec<String> = record.iter().map(|c| c.trim().to_string()).collect();
        row.resize(width, String::new());
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // Rows are reported 1-based, counting data rows only.
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row: i + 1,
                    column: headers[j].clone(),
                });
            }
        }
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(cells.len());
    for row in &cells {
        let raw = &row[label_idx];
        let next = class_names.len();
        let id = *class_index.entry(raw.clone()).or_insert_with(|| {
            class_names.push(raw.clone());
            next
        });
        labels.push(id);
    }
    if class_names.len() < 2 {
        return Err(Error::SingleClass {
            class: class_names[0].clone(),
        });
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names: Vec<String> = Vec::new();
    for j in 0..width {
        if j == label_idx {
            continue;
        }
        let parsed: Vec<Option<f64>> = cells
            .iter()
            .map(|row| row[j].parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let numeric = parsed.iter().filter(|v| v.is_some()).count();
        if numeric == cells.len() {
            columns.push(min_max_normalize(
                &parsed.into_iter().map(Option::unwrap).collect::<Vec<_>>(),
            ));
            feature_names.push(headers[j].clone());
        } else if numeric == 0 {
            let mut categories: Vec<String> = Vec::new();
            let mut index: HashMap<&str, usize> = HashMap::new();
            let mut codes = Vec::with_capacity(cells.len());
            for row in &cells {
                let cell = row[j].as_str();
                let next = categories.len();
                let id = *index.entry(cell).or_insert_with(|| {
                    categories.push(cell.to_string());
                    next
                });
                codes.push(id);
            }
            match encoding {
                Encoding::Ordinal => {
                    let raw: Vec<f64> = codes.iter().map(|&c| c as f64).collect();
                    columns.push(min_max_normalize(&raw));
                    feature_names.push(headers[j].clone());
                }
                Encoding::OneHot => {
                    for (cat, name) in categories.iter().enumerate() {
                        let raw: Vec<f64> =
                            codes.iter().map(|&c| (c == cat) as usize as f64).collect();
                        columns.push(min_max_normalize(&raw));
                        feature_names.push(format!("{}={}", headers[j], name));
                    }
                }
            }
        } else {
            let (i, _) = parsed.iter().enumerate().find(|(_, v)| v.is_none()).unwrap();
            return Err(Error::NonNumericCell {
                row: i + 1,
                column: headers[j].clone(),
                value: cells[i][j].clone(),
            });
        }
    }
    if columns.is_empty() {
        return Err(Error::InvalidDataset("dataset has no feature columns".into()));
    }

    let n = cells.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect();
    Dataset::new(rows, labels)?
        .with_feature_names(feature_names)?
        .with_class_names(class_names)
}
