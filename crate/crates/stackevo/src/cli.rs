//! Command-line surface: `search`, `predict`, and `info`.
//!
//! `search` loads a CSV, splits it, runs the evolutionary search on the
//! training portion, and writes the top pipelines plus reports to an output
//! directory. `predict` applies a serialized pipeline to new data. `info`
//! prints machine-readable descriptions of the primitive catalog and the
//! config file schema.
//!
//! Configuration precedence: command-line flags override config-file values,
//! which override the built-in defaults. Exit codes: 0 success, 2 usage or
//! configuration error, 3 data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::cascade::{PipelineDocument, TrainedPipeline};
use crate::dataset::{self, DataError, Dataset, LabelColumn, SplitSpec};
use crate::evolution::{self, EAConfig, EvolutionError};
use crate::genome::{GenomeError, SearchBounds};
use crate::metrics::{balanced_accuracy, FitnessRecord};
use crate::primitives;
use crate::seed;

#[derive(Parser)]
#[command(
    name = "stackevo",
    about = "Evolutionary search over cascading stacked-classifier pipelines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for pipelines on a tabular classification dataset.
    Search(Box<SearchArgs>),
    /// Apply a serialized pipeline to a feature CSV.
    Predict(PredictArgs),
    /// Print machine-readable catalog or configuration information.
    Info(InfoArgs),
}

#[derive(Parser, Debug, Default)]
pub struct SearchArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Label column name or 0-based index.
    #[arg(long)]
    pub label_col: Option<String>,
    /// Fraction of rows used for training, in (0, 1).
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Master seed; fixes every random decision of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stratify the train/test split by class.
    #[arg(long)]
    pub stratify: bool,
    /// Maximum pipeline depth, counting the final output layer.
    #[arg(long)]
    pub max_layers: Option<usize>,
    /// Maximum nodes per non-final layer.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Comma-separated primitive allow-list (default: full catalog).
    #[arg(long, value_delimiter = ',')]
    pub primitives: Option<Vec<String>>,
    /// Population size N (even, at least 4).
    #[arg(long)]
    pub population: Option<usize>,
    /// Generation count M.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Cross-validation folds.
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Parallel evaluation workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory for pipelines and reports.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Parser, Debug)]
pub struct PredictArgs {
    /// Serialized pipeline JSON produced by `search`.
    #[arg(long)]
    pub pipeline: PathBuf,
    /// Feature CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Column to drop from the CSV (e.g. a label column still present).
    #[arg(long)]
    pub label_col: Option<String>,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Parser, Debug)]
pub struct InfoArgs {
    #[arg(value_enum)]
    pub topic: InfoTopic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InfoTopic {
    /// Primitive catalog with hyperparameter grids.
    Primitives,
    /// Config file schema with defaults.
    ConfigSchema,
}

/// Config file shape; every field optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    data: Option<PathBuf>,
    label_col: Option<String>,
    train_frac: Option<f64>,
    seed: Option<u64>,
    stratify: Option<bool>,
    max_layers: Option<usize>,
    max_nodes: Option<usize>,
    primitives: Option<Vec<String>>,
    population: Option<usize>,
    iterations: Option<usize>,
    cv_folds: Option<usize>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data: PathBuf,
    pub label_col: String,
    pub train_frac: f64,
    pub seed: u64,
    pub stratify: bool,
    pub max_layers: usize,
    pub max_nodes: usize,
    pub primitives: Vec<String>,
    pub population: usize,
    pub iterations: usize,
    pub cv_folds: usize,
    pub workers: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Pipeline(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<EvolutionError> for CliError {
    fn from(err: EvolutionError) -> Self {
        match err {
            EvolutionError::Config(msg) => CliError::Config(msg),
            EvolutionError::Bounds(e) => CliError::Config(e.to_string()),
            other => CliError::Pipeline(other.to_string()),
        }
    }
}

impl From<GenomeError> for CliError {
    fn from(err: GenomeError) -> Self {
        CliError::Config(err.to_string())
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run_cli() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    let result = match cli.command {
        Command::Search(args) => cmd_search(*args),
        Command::Predict(args) => cmd_predict(args),
        Command::Info(args) => cmd_info(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as a normal
/// early exit rather than a panic.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        result => result.map_err(CliError::Io),
    }
}

/// Merges flags over config-file values over defaults.
pub fn resolve_config(args: SearchArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config file {}: {e}", path.display()))
            })?;
            serde_json::from_str::<ConfigFile>(&text).map_err(|e| {
                CliError::Config(format!("invalid config file {}: {e}", path.display()))
            })?
        }
        None => ConfigFile::default(),
    };
    let data = args.data.or(file.data).ok_or_else(|| {
        CliError::Usage(
            "missing dataset path: pass --data <path> or set \"data\" in the config file".into(),
        )
    })?;
    let label_col = args.label_col.or(file.label_col).ok_or_else(|| {
        CliError::Usage(
            "missing label column: pass --label-col <name|idx> or set \"label_col\" in the \
             config file"
                .into(),
        )
    })?;
    let train_frac = args.train_frac.or(file.train_frac).unwrap_or(0.8);
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(CliError::Usage(format!(
            "--train-frac must lie strictly between 0 and 1, got {train_frac}"
        )));
    }
    let default_catalog: Vec<String> = primitives::catalog().into_iter().map(|s| s.name).collect();
    Ok(RunConfig {
        data,
        label_col,
        train_frac,
        seed: args.seed.or(file.seed).unwrap_or(42),
        stratify: args.stratify || file.stratify.unwrap_or(false),
        max_layers: args.max_layers.or(file.max_layers).unwrap_or(5),
        max_nodes: args.max_nodes.or(file.max_nodes).unwrap_or(3),
        primitives: args
            .primitives
            .or(file.primitives)
            .unwrap_or(default_catalog),
        population: args.population.or(file.population).unwrap_or(200),
        iterations: args.iterations.or(file.iterations).unwrap_or(10),
        cv_folds: args.cv_folds.or(file.cv_folds).unwrap_or(5),
        workers: args
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        out_dir: args
            .out_dir
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("stackevo-out")),
    })
}

/// Loads a dataset, resolving the label column as a header name first and
/// falling back to a 0-based index when the name is absent but numeric.
fn load_dataset(path: &Path, label_raw: &str) -> Result<Dataset, DataError> {
    match dataset::load_csv(path, &LabelColumn::Name(label_raw.to_string())) {
        Err(DataError::MissingLabelColumn { .. }) => {
            if let Ok(index) = label_raw.parse::<usize>() {
                dataset::load_csv(path, &LabelColumn::Index(index))
            } else {
                dataset::load_csv(path, &LabelColumn::Name(label_raw.to_string()))
            }
        }
        other => other,
    }
}

fn cmd_search(args: SearchArgs) -> Result<(), CliError> {
    let config = resolve_config(args)?;
    let bounds = SearchBounds::new(
        config.max_layers,
        config.max_nodes,
        config.primitives.clone(),
    )?;
    let ea = EAConfig {
        population_n: config.population,
        iterations_m: config.iterations,
        bounds,
        cv_folds: config.cv_folds,
        master_seed: config.seed,
        worker_count: config.workers,
    };
    ea.validate()?;

    let full = load_dataset(&config.data, &config.label_col)?;
    let spec = SplitSpec {
        train_fraction: config.train_frac,
        seed: config.seed,
    };
    let (train, test) = dataset::shuffle_split_with(&full, &spec, config.stratify)?;

    fs::create_dir_all(&config.out_dir)?;
    let mut gen_log =
        std::io::BufWriter::new(fs::File::create(config.out_dir.join("generations.jsonl"))?);
    let mut log_error: Option<std::io::Error> = None;

    let ranked = evolution::run(&ea, &train, |report| {
        eprintln!(
            "generation {:>3}: best {:.6} median {:.6} mean {:.6}",
            report.generation_index, report.best_score, report.median_score, report.mean_score
        );
        if log_error.is_none() {
            let line = serde_json::to_string(report).expect("reports serialize");
            if let Err(e) = writeln!(gen_log, "{line}") {
                log_error = Some(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(CliError::Io(e));
    }
    gen_log.flush()?;

    let mut summary = String::from("rank,cv_score,test_score,layers,total_nodes,genome_digest\n");
    let mut best_line: Option<(f64, f64)> = None;
    for (rank, (pipeline, record)) in ranked.iter().enumerate() {
        let rank = rank + 1;
        let preds = pipeline
            .predict(&test.features)
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
        let test_score = balanced_accuracy(&test.labels, &preds, full.n_classes)
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
        if best_line.is_none() {
            best_line = Some((record.cv_score, test_score));
        }
        summary.push_str(&summary_row(rank, pipeline, record, test_score));

        let path = config.out_dir.join(format!("pipeline_{rank}.json"));
        let doc = pipeline.to_document();
        let mut file = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, &doc)
            .map_err(|e| CliError::Pipeline(format!("cannot serialize pipeline: {e}")))?;
        file.write_all(b"\n")?;
    }
    fs::write(config.out_dir.join("summary.csv"), summary)?;

    let (best_cv, best_test) = best_line.unwrap_or((0.0, 0.0));
    emit(&format!(
        "best pipeline cv balanced accuracy: {best_cv:.6}\n\
         best pipeline test balanced accuracy: {best_test:.6}\n\
         wrote {} pipeline(s) to {}\n",
        ranked.len(),
        config.out_dir.display()
    ))?;
    Ok(())
}

fn summary_row(
    rank: usize,
    pipeline: &TrainedPipeline,
    record: &FitnessRecord,
    test_score: f64,
) -> String {
    let shape = pipeline
        .genome
        .layers
        .iter()
        .map(|l| l.len().to_string())
        .collect::<Vec<_>>()
        .join("-");
    let canonical = serde_json::to_string(&pipeline.genome).expect("genomes serialize");
    let digest = seed::fingerprint(canonical.as_bytes());
    format!(
        "{rank},{cv:.6},{test:.6},{shape},{nodes},{digest:016x}\n",
        cv = record.cv_score,
        test = test_score,
        nodes = record.total_nodes,
    )
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.pipeline).map_err(|e| {
        CliError::Pipeline(format!(
            "cannot read pipeline {}: {e}",
            args.pipeline.display()
        ))
    })?;
    let doc: PipelineDocument = serde_json::from_str(&text).map_err(|e| {
        CliError::Pipeline(format!("corrupt pipeline {}: {e}", args.pipeline.display()))
    })?;
    let pipeline =
        TrainedPipeline::from_document(doc).map_err(|e| CliError::Pipeline(e.to_string()))?;

    let drop = args
        .label_col
        .as_ref()
        .map(|raw| LabelColumn::Name(raw.clone()));
    let (features, _headers) = match dataset::load_features_csv(&args.data, drop.as_ref()) {
        Err(original @ DataError::MissingLabelColumn { .. }) => {
            // The drop column may have been given as a 0-based index.
            let raw = args.label_col.as_deref().unwrap_or_default();
            match raw.parse::<usize>() {
                Ok(index) => {
                    dataset::load_features_csv(&args.data, Some(&LabelColumn::Index(index)))?
                }
                Err(_) => return Err(CliError::Data(original)),
            }
        }
        other => other?,
    };

    let predictions = pipeline
        .predict(&features)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    let decoded = pipeline.decode_labels(&predictions);

    let mut out = String::from("prediction\n");
    for label in decoded {
        out.push_str(&label);
        out.push('\n');
    }
    match args.out {
        Some(path) => fs::write(path, out)?,
        None => emit(&out)?,
    }
    Ok(())
}

fn cmd_info(args: InfoArgs) -> Result<(), CliError> {
    let value = match args.topic {
        InfoTopic::Primitives => json!({ "primitives": primitives::catalog() }),
        InfoTopic::ConfigSchema => config_schema(),
    };
    let mut text = serde_json::to_string_pretty(&value).expect("info values serialize");
    text.push('\n');
    emit(&text)
}

/// Machine-readable description of the config file accepted by `search`.
pub fn config_schema() -> serde_json::Value {
    json!({
        "format": "JSON object; every field optional, flags take precedence over file values",
        "fields": {
            "data":       {"type": "string",  "flag": "--data",
                           "description": "path to the training CSV (header row required)"},
            "label_col":  {"type": "string",  "flag": "--label-col",
                           "description": "label column name, or 0-based index"},
            "train_frac": {"type": "number",  "flag": "--train-frac", "default": 0.8},
            "seed":       {"type": "integer", "flag": "--seed", "default": 42},
            "stratify":   {"type": "boolean", "flag": "--stratify", "default": false},
            "max_layers": {"type": "integer", "flag": "--max-layers", "default": 5},
            "max_nodes":  {"type": "integer", "flag": "--max-nodes", "default": 3},
            "primitives": {"type": "array[string]", "flag": "--primitives",
                           "default": "full catalog; see `info primitives`"},
            "population": {"type": "integer", "flag": "--population", "default": 200},
            "iterations": {"type": "integer", "flag": "--iterations", "default": 10},
            "cv_folds":   {"type": "integer", "flag": "--cv-folds", "default": 5},
            "workers":    {"type": "integer", "flag": "--workers",
                           "default": "available CPU count"},
            "out_dir":    {"type": "string",  "flag": "--out-dir", "default": "stackevo-out"}
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_then_defaults() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(
            file,
            r#"{{"data": "from-file.csv", "label_col": "y", "population": 6, "iterations": 3}}"#
        )
        .unwrap();
        file.flush().unwrap();

        let args = SearchArgs {
            config: Some(file.path().to_path_buf()),
            population: Some(8),
            ..SearchArgs::default()
        };
        let config = resolve_config(args).unwrap();
        assert_eq!(config.population, 8, "flag beats file");
        assert_eq!(config.iterations, 3, "file beats default");
        assert_eq!(config.cv_folds, 5, "default applies");
        assert_eq!(config.data, PathBuf::from("from-file.csv"));
    }

    #[test]
    fn missing_data_path_names_the_flag() {
        let err = resolve_config(SearchArgs::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--data"), "{err}");
    }

    #[test]
    fn out_of_range_train_frac_is_a_usage_error() {
        for bad in [0.0, 1.0, 1.5, -0.2] {
            let args = SearchArgs {
                data: Some("x.csv".into()),
                label_col: Some("y".into()),
                train_frac: Some(bad),
                ..SearchArgs::default()
            };
            let err = resolve_config(args).unwrap_err();
            assert_eq!(err.exit_code(), 2, "train_frac {bad}");
            assert!(err.to_string().contains("--train-frac"), "{err}");
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, r#"{{"datta": "typo.csv"}}"#).unwrap();
        file.flush().unwrap();
        let args = SearchArgs {
            config: Some(file.path().to_path_buf()),
            ..SearchArgs::default()
        };
        let err = resolve_config(args).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("datta"), "{err}");
    }

    #[test]
    fn schema_covers_exactly_the_config_fields() {
        // The example config in the repository root must parse and stay
        // within the advertised schema.
        let schema = config_schema();
        let fields = schema["fields"].as_object().unwrap();
        let example_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config.example.json");
        let text = fs::read_to_string(&example_path).expect("example config is shipped");
        let parsed: ConfigFile = serde_json::from_str(&text).expect("example config parses");
        let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
        for (key, value) in raw.as_object().unwrap() {
            let declared = fields
                .get(key)
                .unwrap_or_else(|| panic!("example key {key:?} missing from schema"));
            let kind = declared["type"].as_str().unwrap();
            let matches = match kind {
                "string" => value.is_string(),
                "number" => value.is_number(),
                "integer" => value.is_u64() || value.is_i64(),
                "boolean" => value.is_boolean(),
                "array[string]" => {
                    value.is_array()
                        && value
                            .as_array()
                            .unwrap()
                            .iter()
                            .all(serde_json::Value::is_string)
                }
                other => panic!("unknown schema type {other:?}"),
            };
            assert!(
                matches,
                "example key {key:?} does not match schema type {kind:?}"
            );
        }
        let _ = parsed;
    }
}
