//! Command-line pipeline: simulate -> ingest -> extract -> rank ->
//! tune/train -> evaluate/predict, plus a one-shot `pipeline` runner.
//!
//! Every text artifact starts with a `# gaitlab <version> <command> ...`
//! header recording the effective configuration, and nothing written to a
//! file depends on wall-clock time, so fixed-seed runs are byte-identical.
//!
//! Exit codes: 0 success, 1 input error, 2 internal invariant failure.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use gaitlab::dataset::{load_table, standardize, stratified_split, Dataset};
use gaitlab::eval::{
    default_knn_grid, evaluate_holdout, grid_search, predict_rows, predictions_to_csv,
    SelectionMode,
};
use gaitlab::features::{
    extract_features_with, features_to_csv, wide_table, FeatureConfig, FeatureVector,
};
use gaitlab::gaitsim::{generate_cohort, CohortSpec};
use gaitlab::learn::{fit, load_model, save_model, Model, ModelSpec};
use gaitlab::select::rank_features;
use gaitlab::telemetry::{
    scan_stream, session_from_csv, session_to_csv, AssembleMeta, Label, SessionAssembler, Task,
};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Anticipated failure caused by the user's input or environment.
#[derive(Debug)]
pub struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type CmdResult = Result<(), InputError>;

fn input(msg: impl Into<String>) -> InputError {
    InputError(msg.into())
}

#[derive(Parser)]
#[command(name = "gaitlab", version, about = "Wrist-worn IMU gait screening pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-task cohort as session CSV files.
    Simulate(SimulateArgs),
    /// Decode raw sensor frames (file or stdin) into a session CSV.
    Ingest(IngestArgs),
    /// Extract gait features from session CSVs into feature tables.
    Extract(ExtractArgs),
    /// Rank features by mutual information with the label.
    Rank(RankArgs),
    /// Grid-search classifier hyperparameters by cross-validation.
    Tune(TuneArgs),
    /// Fit a classifier and write a model file.
    Train(TrainArgs),
    /// Score a model on a table: report if labeled, predictions if not.
    Evaluate(EvaluateArgs),
    /// Write predictions for every row of a table.
    Predict(PredictArgs),
    /// Run the whole flow from simulation to holdout evaluation.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Cohort description file (key=value lines); defaults apply if omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Control-group size (overrides the config file)
    #[arg(long)]
    n_control: Option<usize>,
    /// PD-group size (overrides the config file)
    #[arg(long)]
    n_pd: Option<usize>,
    /// Master seed (overrides config file and GAITLAB_SEED)
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that receives one CSV per (subject, task)
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Raw frame bytes; "-" reads stdin
    #[arg(long)]
    input: String,
    /// Session CSV destination; stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "session")]
    subject: String,
    /// walk or dual
    #[arg(long, default_value = "walk")]
    task: String,
    #[arg(long, default_value_t = 100.0)]
    rate_hz: f64,
    /// Class label 0 or 1 when known
    #[arg(long)]
    label: Option<u8>,
    /// Listen once on 127.0.0.1:<port> and ingest that connection's bytes
    #[cfg(feature = "tcp-ingest")]
    #[arg(long)]
    tcp: Option<u16>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Session CSV files and/or directories of them
    #[arg(long, required = true, num_args = 1..)]
    sessions: Vec<PathBuf>,
    /// Long-format feature table destination
    #[arg(long)]
    out: PathBuf,
    /// Also pivot to one-row-per-subject and write it here
    #[arg(long)]
    wide_out: Option<PathBuf>,
    /// Extraction parameter overrides, e.g. --set step_lowpass_hz=3.0
    #[arg(long = "set")]
    set: Vec<String>,
}

#[derive(Args)]
struct RankArgs {
    /// Labeled wide feature table
    #[arg(long)]
    table: PathBuf,
    /// How many features to mark selected
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Ranking CSV destination
    #[arg(long)]
    out: PathBuf,
    /// Bar-chart destination; stdout if omitted
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Labeled wide feature table
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// File of model specs, one per line (e.g. "knn k=7 metric=manhattan");
    /// the stock KNN grid if omitted
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Feature selection protocol: none, honest, or mimic
    #[arg(long, default_value = "honest")]
    selection: String,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Tuning report CSV destination
    #[arg(long)]
    out: PathBuf,
    /// Plain-text report destination; stdout if omitted
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled wide feature table
    #[arg(long)]
    table: PathBuf,
    /// Model spec line, e.g. "knn k=5 metric=euclidean weighting=uniform";
    /// unstated keys take their defaults
    #[arg(long, default_value = "knn")]
    spec: String,
    /// Keep only the top-k features by mutual information before fitting
    #[arg(long)]
    select_k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Model file destination
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature table; labels optional
    #[arg(long)]
    table: PathBuf,
    /// Report CSV (labeled input) or predictions CSV (unlabeled input);
    /// stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text report destination (labeled input only)
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    table: PathBuf,
    /// Predictions CSV destination; stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Directory for every artifact of the run
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Cohort description file; defaults with --n-control/--n-pd if omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    n_control: usize,
    #[arg(long, default_value_t = 20)]
    n_pd: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Fraction of subjects held out for the final evaluation
    #[arg(long, default_value_t = 0.25)]
    holdout_frac: f64,
}

/// Parse argv and execute. Returns the process exit code.
pub fn run<I>(argv: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli)));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            eprintln!("internal error: {msg}");
            2
        }
    }
}

fn execute(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

/// Seed precedence: flag, then GAITLAB_SEED, then 42.
fn resolve_seed(flag: Option<u64>) -> Result<u64, InputError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("GAITLAB_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| input(format!("GAITLAB_SEED must be an unsigned integer, got {text:?}"))),
        Err(_) => Ok(42),
    }
}

fn read_text(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))
}

fn read_bytes_arg(spec: &str) -> Result<Vec<u8>, InputError> {
    if spec == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| input(format!("cannot read stdin: {e}")))?;
        return Ok(buf);
    }
    std::fs::read(spec).map_err(|e| input(format!("cannot read {spec}: {e}")))
}

fn write_file(path: &Path, content: &[u8]) -> CmdResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

fn write_or_stdout(path: Option<&Path>, content: &str) -> CmdResult {
    match path {
        Some(p) => write_file(p, content.as_bytes()),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// `# gaitlab <version> <command> key=value ...` provenance line.
fn artifact_header(command: &str, pairs: &[(&str, String)]) -> String {
    let mut line = format!("# gaitlab v{VERSION} {command}");
    for (k, v) in pairs {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push('\n');
    line
}

fn parse_task(name: &str) -> Result<Task, InputError> {
    Task::from_str(name).ok_or_else(|| input(format!("task must be walk or dual, got {name:?}")))
}

fn parse_selection(mode: &str, k: usize, bins: usize) -> Result<SelectionMode, InputError> {
    match mode {
        "none" => Ok(SelectionMode::None),
        "honest" => Ok(SelectionMode::Honest { k, bins }),
        "mimic" => Ok(SelectionMode::Mimic { k, bins }),
        other => Err(input(format!("selection must be none, honest, or mimic, got {other:?}"))),
    }
}

/// Parse "kind key=value ..." into a spec, with defaults for absent keys.
pub fn parse_spec_line(line: &str) -> Result<ModelSpec, InputError> {
    let mut tokens = line.split_whitespace();
    let kind = tokens.next().ok_or_else(|| input("empty model spec"))?;
    let base = match kind {
        "knn" => ModelSpec::default_knn(),
        "logistic" => ModelSpec::default_logistic(),
        "linear_svm" => ModelSpec::default_linear_svm(),
        "random_forest" => ModelSpec::default_random_forest(),
        "boosted_trees" => ModelSpec::default_boosted_trees(),
        other => {
            return Err(input(format!(
                "unknown model kind {other:?} (knn, logistic, linear_svm, random_forest, boosted_trees)"
            )))
        }
    };
    let mut pairs: Vec<(String, String)> =
        base.to_kv().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| input(format!("expected key=value in model spec, got {token:?}")))?;
        match pairs.iter_mut().find(|(k, _)| k == key) {
            Some(pair) => pair.1 = value.to_string(),
            None => pairs.push((key.to_string(), value.to_string())),
        }
    }
    ModelSpec::from_kv(kind, &pairs).map_err(|e| input(e.to_string()))
}

/// Apply `key=value` overrides to the extraction parameters.
fn apply_feature_overrides(cfg: &mut FeatureConfig, sets: &[String]) -> CmdResult {
    for raw in sets {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| input(format!("expected key=value for --set, got {raw:?}")))?;
        let parse_f64 = || -> Result<f64, InputError> {
            value.parse().map_err(|_| input(format!("bad number for {key}: {value:?}")))
        };
        match key {
            "step_lowpass_hz" => cfg.step_lowpass_hz = parse_f64()?,
            "peak_threshold_frac" => cfg.peak_threshold_frac = parse_f64()?,
            "refractory_s" => cfg.refractory_s = parse_f64()?,
            "merge_window_s" => cfg.merge_window_s = parse_f64()?,
            "swing_band_lo_hz" => cfg.swing_band_lo_hz = parse_f64()?,
            "swing_band_hi_hz" => cfg.swing_band_hi_hz = parse_f64()?,
            "trim_s" => cfg.trim_s = parse_f64()?,
            "min_duration_s" => cfg.min_duration_s = parse_f64()?,
            "min_steps" => {
                cfg.min_steps =
                    value.parse().map_err(|_| input(format!("bad count for {key}: {value:?}")))?
            }
            "dominant_lo_hz" => cfg.dominant_lo_hz = parse_f64()?,
            "dominant_hi_hz" => cfg.dominant_hi_hz = parse_f64()?,
            "spectral_band_lo_hz" => cfg.spectral_band_lo_hz = parse_f64()?,
            "spectral_band_hi_hz" => cfg.spectral_band_hi_hz = parse_f64()?,
            other => {
                return Err(input(format!(
                    "unknown extraction key {other:?} (see `gaitlab extract --help` for the list)"
                )))
            }
        }
    }
    Ok(())
}

fn feature_config_kv(cfg: &FeatureConfig) -> Vec<(&'static str, String)> {
    vec![
        ("step_lowpass_hz", cfg.step_lowpass_hz.to_string()),
        ("peak_threshold_frac", cfg.peak_threshold_frac.to_string()),
        ("refractory_s", cfg.refractory_s.to_string()),
        ("merge_window_s", cfg.merge_window_s.to_string()),
        ("swing_band_lo_hz", cfg.swing_band_lo_hz.to_string()),
        ("swing_band_hi_hz", cfg.swing_band_hi_hz.to_string()),
        ("trim_s", cfg.trim_s.to_string()),
        ("min_duration_s", cfg.min_duration_s.to_string()),
        ("min_steps", cfg.min_steps.to_string()),
        ("dominant_lo_hz", cfg.dominant_lo_hz.to_string()),
        ("dominant_hi_hz", cfg.dominant_hi_hz.to_string()),
        ("spectral_band_lo_hz", cfg.spectral_band_lo_hz.to_string()),
        ("spectral_band_hi_hz", cfg.spectral_band_hi_hz.to_string()),
    ]
}

fn load_cohort_spec(
    config: Option<&Path>,
    n_control: Option<usize>,
    n_pd: Option<usize>,
    seed_flag: Option<u64>,
) -> Result<CohortSpec, InputError> {
    let mut spec = match config {
        Some(path) => CohortSpec::parse(&read_text(path)?)
            .map_err(|e| input(format!("{}: {e}", path.display())))?,
        None => CohortSpec::new(10, 10, 0),
    };
    if let Some(n) = n_control {
        spec.n_control = n;
    }
    if let Some(n) = n_pd {
        spec.n_pd = n;
    }
    // an explicit flag or env seed wins over the config file's seed
    if seed_flag.is_some() || std::env::var_os("GAITLAB_SEED").is_some() || config.is_none() {
        spec.seed = resolve_seed(seed_flag)?;
    }
    spec.validate().map_err(|e| input(e.to_string()))?;
    Ok(spec)
}

fn simulate_header(spec: &CohortSpec) -> String {
    artifact_header(
        "simulate",
        &[
            ("seed", spec.seed.to_string()),
            ("n_control", spec.n_control.to_string()),
            ("n_pd", spec.n_pd.to_string()),
            ("duration_s", spec.control.mean.duration_s.to_string()),
            ("rate_hz", spec.control.mean.sample_rate_hz.to_string()),
        ],
    )
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let spec = load_cohort_spec(a.config.as_deref(), a.n_control, a.n_pd, a.seed)?;
    let header = simulate_header(&spec);
    let sessions = generate_cohort(&spec).map_err(|e| input(e.to_string()))?;
    for session in &sessions {
        let name = format!("{}_{}.csv", session.subject_id, session.task);
        let body = format!("{header}{}", session_to_csv(session));
        write_file(&a.out_dir.join(name), body.as_bytes())?;
    }
    eprintln!(
        "wrote {} sessions ({} subjects x 2 tasks) to {}",
        sessions.len(),
        spec.n_control + spec.n_pd,
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> CmdResult {
    let task = parse_task(&a.task)?;
    if !(a.rate_hz > 0.0) {
        return Err(input(format!("rate_hz must be positive, got {}", a.rate_hz)));
    }
    let label = match a.label {
        None => None,
        Some(v) => Some(
            Label::from_u8(v).ok_or_else(|| input(format!("label must be 0 or 1, got {v}")))?,
        ),
    };

    #[cfg(feature = "tcp-ingest")]
    let bytes = match a.tcp {
        Some(port) => read_tcp_once(port)?,
        None => read_bytes_arg(&a.input)?,
    };
    #[cfg(not(feature = "tcp-ingest"))]
    let bytes = read_bytes_arg(&a.input)?;

    let (frames, stats) = scan_stream(&bytes);
    let mut meta = AssembleMeta::new(&a.subject, task, a.rate_hz);
    if let Some(l) = label {
        meta = meta.with_label(l);
    }
    let mut assembler = SessionAssembler::new(meta);
    assembler.push_all(frames);
    let session = assembler.finish().map_err(|e| input(e.to_string()))?;

    let header = artifact_header(
        "ingest",
        &[
            ("subject", a.subject.clone()),
            ("task", task.to_string()),
            ("rate_hz", a.rate_hz.to_string()),
            ("label", label.map_or("?".into(), |l| l.as_u8().to_string())),
        ],
    );
    let body = format!("{header}{}", session_to_csv(&session));
    write_or_stdout(a.out.as_deref(), &body)?;
    eprintln!(
        "ingested {} frames into {} sample rows ({} bytes rejected: {} bad magic, {} bad crc, {} bad device, {} truncated)",
        stats.frames_ok,
        session.len(),
        stats.rejected(),
        stats.bad_magic,
        stats.bad_crc,
        stats.bad_device_id,
        stats.truncated
    );
    Ok(())
}

#[cfg(feature = "tcp-ingest")]
fn read_tcp_once(port: u16) -> Result<Vec<u8>, InputError> {
    use std::net::TcpListener;
    let listener = TcpListener::bind(("127.0.0.1", port))
        .map_err(|e| input(format!("cannot listen on 127.0.0.1:{port}: {e}")))?;
    eprintln!("listening on 127.0.0.1:{port}");
    let (mut stream, peer) =
        listener.accept().map_err(|e| input(format!("accept failed: {e}")))?;
    eprintln!("reading frames from {peer}");
    let mut buf = Vec::new();
    stream.read_to_end(&mut buf).map_err(|e| input(format!("read from {peer} failed: {e}")))?;
    Ok(buf)
}

/// Expand file/directory arguments into a sorted list of CSV paths.
fn collect_session_files(args: &[PathBuf]) -> Result<Vec<PathBuf>, InputError> {
    let mut files = Vec::new();
    for arg in args {
        if arg.is_dir() {
            let entries = std::fs::read_dir(arg)
                .map_err(|e| input(format!("cannot list {}: {e}", arg.display())))?;
            for entry in entries {
                let path = entry.map_err(|e| input(e.to_string()))?.path();
                if path.extension().is_some_and(|x| x == "csv") {
                    files.push(path);
                }
            }
        } else {
            files.push(arg.clone());
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(input("no session files found"));
    }
    Ok(files)
}

fn extract_all(files: &[PathBuf], cfg: &FeatureConfig) -> Result<Vec<FeatureVector>, InputError> {
    let mut rows = Vec::with_capacity(files.len());
    for file in files {
        let session = session_from_csv(&read_text(file)?)
            .map_err(|e| input(format!("{}: {e}", file.display())))?;
        let fv = extract_features_with(&session, cfg)
            .map_err(|e| input(format!("{}: {e}", file.display())))?;
        rows.push(fv);
    }
    Ok(rows)
}

fn cmd_extract(a: ExtractArgs) -> CmdResult {
    let mut cfg = FeatureConfig::default();
    apply_feature_overrides(&mut cfg, &a.set)?;
    let files = collect_session_files(&a.sessions)?;
    let rows = extract_all(&files, &cfg)?;

    let header = artifact_header("extract", &feature_config_kv(&cfg));
    write_file(&a.out, format!("{header}{}", features_to_csv(&rows)).as_bytes())?;
    eprintln!("extracted {} feature rows from {} sessions", rows.len(), files.len());

    if let Some(wide_path) = &a.wide_out {
        let (wide_csv, skipped) = wide_table(&rows);
        write_file(wide_path, format!("{header}{wide_csv}").as_bytes())?;
        if !skipped.is_empty() {
            eprintln!("skipped subjects missing a task: {}", skipped.join(", "));
        }
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, InputError> {
    let (ds, dropped) =
        load_table(&read_text(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if dropped > 0 {
        eprintln!("dropped {dropped} malformed rows from {}", path.display());
    }
    Ok(ds)
}

fn cmd_rank(a: RankArgs) -> CmdResult {
    let ds = load_dataset(&a.table)?;
    let ranked = rank_features(&ds, a.k, a.bins).map_err(|e| input(e.to_string()))?;
    let header = artifact_header(
        "rank",
        &[("k", a.k.to_string()), ("bins", a.bins.to_string()), ("rows", ds.n().to_string())],
    );
    write_file(&a.out, format!("{header}{}", ranked.to_csv()).as_bytes())?;
    write_or_stdout(a.chart.as_deref(), &ranked.to_chart())?;
    Ok(())
}

fn load_grid(path: Option<&Path>) -> Result<Vec<ModelSpec>, InputError> {
    match path {
        None => Ok(default_knn_grid()),
        Some(p) => {
            let mut grid = Vec::new();
            for line in read_text(p)?.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                grid.push(parse_spec_line(line)?);
            }
            if grid.is_empty() {
                return Err(input(format!("{} contains no model specs", p.display())));
            }
            Ok(grid)
        }
    }
}

fn cmd_tune(a: TuneArgs) -> CmdResult {
    let ds = load_dataset(&a.table)?;
    let seed = resolve_seed(a.seed)?;
    let mode = parse_selection(&a.selection, a.k, a.bins)?;
    let grid = load_grid(a.grid.as_deref())?;
    let report =
        grid_search(&grid, &ds, a.folds, seed, mode).map_err(|e| input(e.to_string()))?;
    let header = artifact_header(
        "tune",
        &[
            ("seed", seed.to_string()),
            ("folds", a.folds.to_string()),
            ("selection", report.selection.clone()),
            ("grid_size", grid.len().to_string()),
        ],
    );
    write_file(&a.out, format!("{header}{}", report.to_csv()).as_bytes())?;
    write_or_stdout(a.text.as_deref(), &report.to_text())?;
    eprintln!("best: {} at {:.2}%", report.best_spec, report.best_accuracy_pct);
    Ok(())
}

/// Shared by train and pipeline: optional global top-k selection, then
/// standardize and fit.
fn train_model(
    ds: &Dataset,
    spec: &ModelSpec,
    select_k: Option<usize>,
    bins: usize,
) -> Result<Model, InputError> {
    let selected = match select_k {
        Some(k) => {
            let ranked = rank_features(ds, k, bins).map_err(|e| input(e.to_string()))?;
            let cols = ranked.selected_columns(ds);
            eprintln!("selected features: {}", ranked.selected().join(", "));
            ds.subset_columns(&cols)
        }
        None => ds.clone(),
    };
    let (train_std, _) = standardize(&selected);
    fit(spec, &train_std).map_err(|e| input(e.to_string()))
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let ds = load_dataset(&a.table)?;
    let spec = parse_spec_line(&a.spec)?;
    let model = train_model(&ds, &spec, a.select_k, a.bins)?;
    write_file(&a.out, &save_model(&model))?;
    eprintln!(
        "trained {} on {} rows, {} features -> {}",
        spec,
        ds.n(),
        model.feature_names.len(),
        a.out.display()
    );
    Ok(())
}

fn load_model_file(path: &Path) -> Result<Model, InputError> {
    let bytes =
        std::fs::read(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    load_model(&bytes).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let model = load_model_file(&a.model)?;
    let ds = load_dataset(&a.table)?;
    if ds.y.is_none() {
        // no labels means no accuracy: emit predictions instead
        let rows = predict_rows(&model, &ds).map_err(|e| input(e.to_string()))?;
        let header = artifact_header("evaluate", &[("rows", rows.len().to_string())]);
        write_or_stdout(a.out.as_deref(), &format!("{header}{}", predictions_to_csv(&rows)))?;
        eprintln!("table has no labels; wrote predictions instead of a report");
        return Ok(());
    }
    let report = evaluate_holdout(&model, &ds).map_err(|e| input(e.to_string()))?;
    let header = artifact_header("evaluate", &[("rows", ds.n().to_string())]);
    match (&a.out, &a.text) {
        (None, None) => print!("{}", report.to_text()),
        _ => {
            if let Some(out) = &a.out {
                write_file(out, format!("{header}{}", report.to_csv()).as_bytes())?;
            }
            if let Some(text) = &a.text {
                write_file(text, report.to_text().as_bytes())?;
            }
        }
    }
    eprintln!("holdout accuracy: {:.2}%", report.mean_accuracy_pct);
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CmdResult {
    let model = load_model_file(&a.model)?;
    let ds = load_dataset(&a.table)?;
    let rows = predict_rows(&model, &ds).map_err(|e| input(e.to_string()))?;
    let header = artifact_header("predict", &[("rows", rows.len().to_string())]);
    write_or_stdout(a.out.as_deref(), &format!("{header}{}", predictions_to_csv(&rows)))?;
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> CmdResult {
    let spec = load_cohort_spec(a.config.as_deref(), Some(a.n_control), Some(a.n_pd), a.seed)?;
    let seed = spec.seed;
    let dir = &a.out_dir;
    let header = artifact_header(
        "pipeline",
        &[
            ("seed", seed.to_string()),
            ("n_control", spec.n_control.to_string()),
            ("n_pd", spec.n_pd.to_string()),
            ("folds", a.folds.to_string()),
            ("k", a.k.to_string()),
            ("bins", a.bins.to_string()),
            ("holdout_frac", a.holdout_frac.to_string()),
        ],
    );

    // 1. simulate
    let sessions = generate_cohort(&spec).map_err(|e| input(e.to_string()))?;
    let sim_header = simulate_header(&spec);
    for session in &sessions {
        let name = format!("{}_{}.csv", session.subject_id, session.task);
        let body = format!("{sim_header}{}", session_to_csv(session));
        write_file(&dir.join("sessions").join(name), body.as_bytes())?;
    }
    eprintln!("[1/6] simulated {} sessions", sessions.len());

    // 2. extract
    let cfg = FeatureConfig::default();
    let mut rows = Vec::with_capacity(sessions.len());
    for session in &sessions {
        let fv = extract_features_with(session, &cfg)
            .map_err(|e| input(format!("{} {}: {e}", session.subject_id, session.task)))?;
        rows.push(fv);
    }
    write_file(
        &dir.join("features_long.csv"),
        format!("{header}{}", features_to_csv(&rows)).as_bytes(),
    )?;
    let (wide_csv, skipped) = wide_table(&rows);
    if !skipped.is_empty() {
        return Err(input(format!("subjects missing a task: {}", skipped.join(", "))));
    }
    write_file(&dir.join("features_wide.csv"), format!("{header}{wide_csv}").as_bytes())?;
    eprintln!("[2/6] extracted features for {} subjects", rows.len() / 2);

    // 3. split
    let (ds, dropped) = load_table(&wide_csv).map_err(|e| input(e.to_string()))?;
    if dropped > 0 {
        return Err(input(format!("{dropped} malformed rows in the pivoted table")));
    }
    let (train, test) =
        stratified_split(&ds, a.holdout_frac, seed).map_err(|e| input(e.to_string()))?;
    eprintln!("[3/6] split {} train / {} holdout subjects", train.n(), test.n());

    // 4. rank on the training split only
    let ranked = rank_features(&train, a.k, a.bins).map_err(|e| input(e.to_string()))?;
    write_file(&dir.join("rank.csv"), format!("{header}{}", ranked.to_csv()).as_bytes())?;
    write_file(&dir.join("rank_chart.txt"), ranked.to_chart().as_bytes())?;
    eprintln!("[4/6] ranked features; top pick {}", ranked.entries[0].0);

    // 5. tune under both selection protocols
    let grid = default_knn_grid();
    let honest = grid_search(&grid, &train, a.folds, seed, SelectionMode::Honest {
        k: a.k,
        bins: a.bins,
    })
    .map_err(|e| input(e.to_string()))?;
    let mimic = grid_search(&grid, &train, a.folds, seed, SelectionMode::Mimic {
        k: a.k,
        bins: a.bins,
    })
    .map_err(|e| input(e.to_string()))?;
    write_file(&dir.join("tune_honest.csv"), format!("{header}{}", honest.to_csv()).as_bytes())?;
    write_file(&dir.join("tune_mimic.csv"), format!("{header}{}", mimic.to_csv()).as_bytes())?;
    write_file(&dir.join("tune.txt"), honest.to_text().as_bytes())?;
    eprintln!(
        "[5/6] tuned: honest {:.2}% ({}), mimic {:.2}%",
        honest.best_accuracy_pct, honest.best_spec, mimic.best_accuracy_pct
    );

    // 6. final fit on the training split, holdout evaluation
    let model = train_model(&train, &honest.best_spec, Some(a.k), a.bins)?;
    write_file(&dir.join("model.bin"), &save_model(&model))?;
    let report = evaluate_holdout(&model, &test).map_err(|e| input(e.to_string()))?;
    write_file(&dir.join("eval_holdout.csv"), format!("{header}{}", report.to_csv()).as_bytes())?;
    write_file(&dir.join("eval_holdout.txt"), report.to_text().as_bytes())?;
    eprintln!("[6/6] holdout accuracy {:.2}%", report.mean_accuracy_pct);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gaitlab::learn::{Metric, Weighting};

    #[test]
    fn spec_line_defaults_and_overrides() {
        assert_eq!(parse_spec_line("knn").unwrap(), ModelSpec::default_knn());
        assert_eq!(
            parse_spec_line("knn k=7 metric=manhattan").unwrap(),
            ModelSpec::Knn { k: 7, metric: Metric::Manhattan, weighting: Weighting::Uniform }
        );
        assert_eq!(
            parse_spec_line("boosted_trees shrinkage=0.1").unwrap(),
            ModelSpec::BoostedTrees {
                n_rounds: 50,
                max_depth: 2,
                shrinkage: 0.1,
                l2_leaf_lambda: 1.0
            }
        );
        assert!(parse_spec_line("perceptron").is_err());
        assert!(parse_spec_line("knn k").is_err());
        assert!(parse_spec_line("knn k=4").is_err(), "even k must fail validation");
    }

    #[test]
    fn selection_parsing() {
        assert_eq!(parse_selection("none", 6, 10).unwrap(), SelectionMode::None);
        assert_eq!(
            parse_selection("honest", 4, 8).unwrap(),
            SelectionMode::Honest { k: 4, bins: 8 }
        );
        assert_eq!(
            parse_selection("mimic", 4, 8).unwrap(),
            SelectionMode::Mimic { k: 4, bins: 8 }
        );
        assert!(parse_selection("leaky", 4, 8).is_err());
    }

    #[test]
    fn feature_overrides_apply_and_reject_unknown_keys() {
        let mut cfg = FeatureConfig::default();
        apply_feature_overrides(
            &mut cfg,
            &["step_lowpass_hz=3.0".into(), "min_steps=12".into()],
        )
        .unwrap();
        assert_eq!(cfg.step_lowpass_hz, 3.0);
        assert_eq!(cfg.min_steps, 12);
        let err = apply_feature_overrides(&mut cfg, &["nope=1".into()]).unwrap_err();
        assert!(err.to_string().contains("unknown extraction key"));
    }

    #[test]
    fn header_shape() {
        let h = artifact_header("rank", &[("k", "6".into()), ("bins", "10".into())]);
        assert_eq!(h, format!("# gaitlab v{VERSION} rank k=6 bins=10\n"));
    }
}
