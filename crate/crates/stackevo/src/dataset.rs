//! Tabular classification data: CSV loading, label encoding, and seeded
//! train/test splitting.
//!
//! Feature values are finite `f64`s; labels are dense class indices assigned
//! by first appearance of each distinct label string. Missing or non-finite
//! cells are errors, never imputed. Columns carry provenance tags so cascade
//! stages can tell raw inputs from synthetic prediction columns.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::seed;

/// Provenance of one feature column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnMeta {
    /// Present in the source data.
    Raw,
    /// Appended by the cascade: predictions of `node` in `layer`.
    Synthetic { layer: usize, node: usize },
}

/// A numeric feature matrix plus encoded class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    /// Class index per row, each in `[0, n_classes)`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Per-column provenance, aligned with `features` columns.
    pub column_meta: Vec<ColumnMeta>,
    /// Original label string per class index (the encoding table).
    pub label_names: Vec<String>,
}

/// How to split a dataset into train and test partitions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of rows that go to the training partition, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Label column selector for the CSV loader. A matching header name takes
/// precedence; callers fall back to an index when the raw string is numeric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {message}")]
    Csv { path: String, message: String },
    #[error("{path}: no data rows below the header")]
    NoRows { path: String },
    #[error("{path}: no feature columns besides the label column")]
    NoFeatureColumns { path: String },
    #[error("label column {column:?} not found in header {headers:?}")]
    MissingLabelColumn {
        column: String,
        headers: Vec<String>,
    },
    #[error("label column index {index} out of range for {n_cols} columns")]
    LabelIndexOutOfRange { index: usize, n_cols: usize },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("found {found} distinct class label(s); need at least 2")]
    TooFewClasses { found: usize },
    #[error("train fraction {value} must lie strictly between 0 and 1")]
    BadFraction { value: f64 },
    #[error(
        "class {class:?} is missing from the training partition; \
         re-seed the split or enable stratified splitting (--stratify)"
    )]
    ClassMissingFromTrain { class: String },
    #[error("features have {features} rows but labels have {labels}")]
    RowCountMismatch { features: usize, labels: usize },
    #[error("feature at row {row}, column {col} is not finite")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("dataset must have at least one row and one column")]
    EmptyDataset,
}

impl Dataset {
    /// Validating constructor; all columns are tagged [`ColumnMeta::Raw`].
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        n_classes: usize,
        label_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if features.n_rows() == 0 || features.n_cols() == 0 {
            return Err(DataError::EmptyDataset);
        }
        if features.n_rows() != labels.len() {
            return Err(DataError::RowCountMismatch {
                features: features.n_rows(),
                labels: labels.len(),
            });
        }
        for (r, row) in features.rows().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFiniteFeature { row: r, col: c });
                }
            }
        }
        for &label in &labels {
            if label >= n_classes {
                return Err(DataError::LabelOutOfRange { label, n_classes });
            }
        }
        let column_meta = vec![ColumnMeta::Raw; features.n_cols()];
        Ok(Self {
            features,
            labels,
            n_classes,
            column_meta,
            label_names,
        })
    }

    /// Constructor for generated data: class names are the stringified
    /// indices `0..n_classes` where `n_classes = max(labels) + 1`.
    pub fn from_numeric(features: Matrix, labels: Vec<usize>) -> Result<Self, DataError> {
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Dataset::new(features, labels, n_classes, names)
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.features.n_cols()
    }

    /// Number of columns tagged raw.
    pub fn raw_width(&self) -> usize {
        self.column_meta
            .iter()
            .filter(|m| **m == ColumnMeta::Raw)
            .count()
    }

    /// Number of distinct classes actually present in `labels`.
    pub fn distinct_label_count(&self) -> usize {
        let mut seen = vec![false; self.n_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().filter(|s| **s).count()
    }

    /// New dataset holding the given rows (order preserved). Shares class
    /// space and column tags; may be empty.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
            column_meta: self.column_meta.clone(),
            label_names: self.label_names.clone(),
        }
    }
}

/// Loads a classification dataset from an RFC-4180 CSV file with a header
/// row. Every non-label cell must parse as a finite real; the label column
/// is treated as categorical even if it looks numeric, and classes are
/// encoded by first appearance.
pub fn load_csv(path: &Path, label: &LabelColumn) -> Result<Dataset, DataError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(&display, e))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(&display, e))?
        .iter()
        .map(str::to_string)
        .collect();

    let label_idx =
        match label {
            LabelColumn::Name(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
                DataError::MissingLabelColumn {
                    column: name.clone(),
                    headers: headers.clone(),
                }
            })?,
            LabelColumn::Index(idx) => {
                if *idx >= headers.len() {
                    return Err(DataError::LabelIndexOutOfRange {
                        index: *idx,
                        n_cols: headers.len(),
                    });
                }
                *idx
            }
        };
    if headers.len() < 2 {
        return Err(DataError::NoFeatureColumns { path: display });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_codes: HashMap<String, usize> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        // Data rows are 1-based in messages; the header is row 0.
        let row_no = i + 1;
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                continue;
            }
            let parsed = cell.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            match parsed {
                Some(v) => row.push(v),
                None => {
                    return Err(DataError::BadCell {
                        row: row_no,
                        column: headers[col].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        let raw_label = record.get(label_idx).unwrap_or("").to_string();
        let next_code = label_names.len();
        let code = *label_codes.entry(raw_label.clone()).or_insert_with(|| {
            label_names.push(raw_label);
            next_code
        });
        labels.push(code);
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(DataError::NoRows { path: display });
    }
    if label_names.len() < 2 {
        return Err(DataError::TooFewClasses {
            found: label_names.len(),
        });
    }
    Dataset::new(
        Matrix::from_rows(&rows),
        labels,
        label_names.len(),
        label_names,
    )
}

/// Loads a feature-only CSV (for `predict`): a header row plus finite real
/// cells. `drop` optionally names a column to skip, e.g. a label column
/// still present in the file.
pub fn load_features_csv(
    path: &Path,
    drop: Option<&LabelColumn>,
) -> Result<(Matrix, Vec<String>), DataError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(&display, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(&display, e))?
        .iter()
        .map(str::to_string)
        .collect();

    let drop_idx = match drop {
        None => None,
        Some(LabelColumn::Name(name)) => {
            Some(headers.iter().position(|h| h == name).ok_or_else(|| {
                DataError::MissingLabelColumn {
                    column: name.clone(),
                    headers: headers.clone(),
                }
            })?)
        }
        Some(LabelColumn::Index(idx)) => {
            if *idx >= headers.len() {
                return Err(DataError::LabelIndexOutOfRange {
                    index: *idx,
                    n_cols: headers.len(),
                });
            }
            Some(*idx)
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        let row_no = i + 1;
        let mut row = Vec::new();
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == drop_idx {
                continue;
            }
            let parsed = cell.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            match parsed {
                Some(v) => row.push(v),
                None => {
                    return Err(DataError::BadCell {
                        row: row_no,
                        column: headers[col].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::NoRows { path: display });
    }
    let kept: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != drop_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Ok((Matrix::from_rows(&rows), kept))
}

fn csv_error(path: &str, err: csv::Error) -> DataError {
    if err.is_io_error() {
        match err.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_string(),
                source,
            },
            other => DataError::Csv {
                path: path.to_string(),
                message: format!("{other:?}"),
            },
        }
    } else {
        DataError::Csv {
            path: path.to_string(),
            message: err.to_string(),
        }
    }
}

/// Computes the (train, test) row-index partition for a split. The
/// permutation is a Fisher–Yates shuffle driven entirely by `spec.seed`;
/// train receives exactly `floor(train_fraction * n)` rows.
///
/// With `stratified` set, rows are allocated per class (largest-remainder
/// rounding keeps the train row count exact); otherwise the permutation is
/// cut directly.
pub fn split_indices(
    labels: &[usize],
    spec: &SplitSpec,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::BadFraction {
            value: spec.train_fraction,
        });
    }
    let n = labels.len();
    let mut perm: Vec<usize> = (0..n).collect();
    fisher_yates(&mut perm, spec.seed);
    let train_len = (spec.train_fraction * n as f64).floor() as usize;

    if !stratified {
        let test = perm.split_off(train_len);
        return Ok((perm, test));
    }

    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for &row in &perm {
        per_class[labels[row]].push(row);
    }
    let mut targets: Vec<usize> = Vec::with_capacity(n_classes);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(n_classes);
    for (class, rows) in per_class.iter().enumerate() {
        let exact = spec.train_fraction * rows.len() as f64;
        let base = exact.floor() as usize;
        targets.push(base);
        remainders.push((exact - base as f64, class));
    }
    // Distribute the rounding deficit to the largest remainders (ties by
    // class index) so the train partition size matches the plain split.
    let mut deficit = train_len.saturating_sub(targets.iter().sum::<usize>());
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (_, class) in remainders {
        if deficit == 0 {
            break;
        }
        if targets[class] < per_class[class].len() {
            targets[class] += 1;
            deficit -= 1;
        }
    }

    let mut in_train = vec![false; n];
    for (class, rows) in per_class.iter().enumerate() {
        for &row in rows.iter().take(targets[class]) {
            in_train[row] = true;
        }
    }
    let train: Vec<usize> = perm.iter().copied().filter(|&r| in_train[r]).collect();
    let test: Vec<usize> = perm.iter().copied().filter(|&r| !in_train[r]).collect();
    Ok((train, test))
}

/// Shuffles and partitions a dataset into train/test by `spec`. Plain
/// (non-stratified) by default; errors if any class ends up absent from the
/// training partition.
pub fn shuffle_split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    shuffle_split_with(d, spec, false)
}

/// [`shuffle_split`] with an explicit stratification switch.
pub fn shuffle_split_with(
    d: &Dataset,
    spec: &SplitSpec,
    stratified: bool,
) -> Result<(Dataset, Dataset), DataError> {
    let (train_rows, test_rows) = split_indices(&d.labels, spec, stratified)?;
    let train = d.subset(&train_rows);
    let test = d.subset(&test_rows);
    let mut present = vec![false; d.n_classes];
    for &l in &train.labels {
        present[l] = true;
    }
    if let Some(class) = present.iter().position(|p| !p) {
        return Err(DataError::ClassMissingFromTrain {
            class: d
                .label_names
                .get(class)
                .cloned()
                .unwrap_or_else(|| class.to_string()),
        });
    }
    Ok((train, test))
}

fn fisher_yates(indices: &mut [usize], seed_value: u64) {
    let mut rng = seed::rng_from(seed_value);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}
