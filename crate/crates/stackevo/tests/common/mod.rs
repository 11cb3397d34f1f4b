//! Shared helpers for the integration suites.

use std::path::Path;
use std::process::{Command, Output};

use stackevo::dataset::Dataset;
use stackevo::matrix::Matrix;

/// Path of the compiled CLI binary.
pub fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_stackevo")
}

/// Runs the CLI with the given arguments and returns the raw output.
pub fn run_cli<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(binary())
        .args(args)
        .output()
        .expect("CLI binary runs")
}

/// Writes a dataset as a headered CSV: feature columns `f0..`, labels
/// decoded through the dataset's label table under a final `label` column.
pub fn write_dataset_csv(d: &Dataset, path: &Path) {
    let mut out = String::new();
    for c in 0..d.n_cols() {
        out.push_str(&format!("f{c},"));
    }
    out.push_str("label\n");
    for (row, &label) in d.features.rows().zip(d.labels.iter()) {
        for v in row {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&d.label_names[label]);
        out.push('\n');
    }
    std::fs::write(path, out).expect("test CSV written");
}

/// Writes a feature-only CSV (no label column).
pub fn write_features_csv(features: &Matrix, path: &Path) {
    let mut out = String::new();
    let headers: Vec<String> = (0..features.n_cols()).map(|c| format!("f{c}")).collect();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in features.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).expect("test CSV written");
}

/// Reads `summary.csv` rows (skipping the header) as cell vectors.
pub fn read_summary(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).expect("summary.csv exists");
    text.lines()
        .skip(1)
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect()
}
