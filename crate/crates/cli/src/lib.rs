//! Command implementations behind the `cqe` binary.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqe::data::{
    self, load_csv, split_indices, CsvSchema, Dataset, Example, FeatureEncoder, InteractionLog, SyntheticSpec,
};
use cqe::evaluate::{self, GroundTruth, SweepRow};
use cqe::harness::{self, CandidatePool, SessionConfig, UserModel};
use cqe::head::QuantileLevels;
use cqe::metrics::{MetricsReport, DEFAULT_XAUC_MAX_PAIRS};
use cqe::model::batch_loss_and_grad;
use cqe::nn::{grad_check, MlpParams};
use cqe::{CqeModel, OracleModel, QuantileModel, StrategyConfig, StrategyKind, Task};

pub mod config;

pub use config::RunConfig;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Gradient-check tolerance on the largest relative error.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<cqe::Error> for CliError {
    fn from(e: cqe::Error) -> Self {
        use cqe::Error::*;
        let code = match &e {
            InvalidArgument(_) | InvalidState(_) => EXIT_USAGE,
            Schema(_) | Io { .. } | UndefinedMetric(_) => EXIT_DATA,
            NumericFailure(_) => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cqe", version, about = "Conditional quantile watch-time models: train, evaluate, rank, simulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic interaction log with known watch-time distributions.
    GenData(GenDataArgs),
    /// Fit a quantile model to an interaction CSV.
    Train(TrainArgs),
    /// Score a dataset and report metrics.
    Eval(EvalArgs),
    /// Order a candidate pool by strategy score.
    Rank(RankArgs),
    /// Check analytic gradients of the training loss against finite differences.
    GradCheck(GradCheckArgs),
    /// Train and evaluate one model per quantile count.
    SweepQuantiles(SweepArgs),
    /// Simulate sessions under several ranking strategies.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct Shared {
    /// Run configuration file (flat `key = value`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Shared {
    fn config(&self) -> CliResult<RunConfig> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Debug, Args, Clone, Default)]
pub struct StrategyFlags {
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    #[arg(long)]
    pub tau_low: Option<f64>,
    #[arg(long)]
    pub tau_high: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
}

impl StrategyFlags {
    fn resolve(&self, config: &RunConfig) -> CliResult<StrategyConfig> {
        let mut s = config.strategy_config()?;
        if let Some(kind) = self.strategy {
            s.kind = kind;
        }
        if let Some(v) = self.tau_low {
            s.tau_low = v;
        }
        if let Some(v) = self.tau_high {
            s.tau_high = v;
        }
        if let Some(v) = self.k {
            s.k = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Lognormal,
    SkipOrEngage,
}

#[derive(Debug, Args, Clone)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Synthetic spec file; see `--preset` for built-ins.
    #[arg(long, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in spec used when `--spec` is absent.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of rows.
    #[arg(long)]
    pub n: usize,
    /// Output CSV; the spec is written next to it as `<stem>.spec.toml`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Encoding {
    /// Hashed ids and categoricals plus standardized numerics.
    #[default]
    Hashed,
    /// The `num_*` columns as they are.
    Raw,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write; the loss trace goes to `<stem>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Encoding::Hashed)]
    pub encoding: Encoding,
}

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "watchtime")]
    pub task: Task,
    #[command(flatten)]
    pub strategy: StrategyFlags,
    #[arg(long, default_value_t = DEFAULT_XAUC_MAX_PAIRS)]
    pub max_pairs: u64,
    /// Also write the report as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct RankArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub pool: PathBuf,
    /// Model trained with `--encoding raw`; defaults to the pool's exact quantiles.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 20])]
    pub n_quantiles: Vec<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Spec the data was drawn from, for quantile recovery error.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value = "watchtime")]
    pub task: Task,
    #[arg(long, value_enum, default_value_t = Encoding::Hashed)]
    pub encoding: Encoding,
    #[command(flatten)]
    pub strategy: StrategyFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UserPreset {
    Default,
    HighChurn,
}

#[derive(Debug, Args, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Pool file; defaults to 10 risky and 10 safe candidates.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [StrategyKind::Cse, StrategyKind::Dqc, StrategyKind::Cde])]
    pub strategies: Vec<StrategyKind>,
    #[arg(long, default_value_t = 10_000)]
    pub n_sessions: usize,
    #[arg(long, default_value_t = 5)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value_t = UserPreset::Default)]
    pub user_model: UserPreset,
    #[arg(long)]
    pub p_churn: Option<f64>,
    #[arg(long)]
    pub threshold_s: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::GenData(a) => gen_data(&a, stdout),
        Command::Train(a) => train(&a, stdout),
        Command::Eval(a) => eval(&a, stdout),
        Command::Rank(a) => rank(&a, stdout),
        Command::GradCheck(a) => grad_check_cmd(&a, stdout),
        Command::SweepQuantiles(a) => sweep(&a, stdout),
        Command::Compare(a) => compare(&a, stdout),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn emit(stdout: &mut dyn Write, text: &str) -> CliResult {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("<stdout>: {e}")))
}

/// `foo/data.csv` + `spec.toml` -> `foo/data.spec.toml`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn comment_block(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

fn gen_data(a: &GenDataArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let spec = match &a.spec {
        Some(p) => SyntheticSpec::from_toml_str(&read_file(p)?)?,
        None => match a.preset.unwrap_or(Preset::Lognormal) {
            Preset::Lognormal => SyntheticSpec::example_lognormal(),
            Preset::SkipOrEngage => SyntheticSpec::example_skip_or_engage(),
        },
    };
    let dataset = data::generate(&spec, a.n, config.seed)?;
    let records = data::synth::to_records(&dataset);
    let mut buf = vec![];
    let preamble = vec![
        "cqe gen-data".to_string(),
        format!("family = {}", spec.family.name()),
        format!("seed = {}", config.seed),
        format!("n_rows = {}", a.n),
    ];
    data::write_csv(&mut buf, &preamble, &[], &spec.numeric_columns(), &records)?;
    write_file(&a.out, &buf)?;
    let spec_path = sibling(&a.out, "spec.toml");
    write_file(&spec_path, spec.to_toml_string(Some((config.seed, a.n))).as_bytes())?;
    emit(
        stdout,
        &format!("wrote {} rows to {} and {}\n", a.n, a.out.display(), spec_path.display()),
    )
}

fn load_log(path: &Path) -> CliResult<InteractionLog> {
    let log = load_csv(path, &CsvSchema::default())?;
    if log.records.is_empty() {
        return Err(CliError::data(format!("{}: no usable rows", path.display())));
    }
    Ok(log)
}

fn raw_dataset(log: &InteractionLog) -> Dataset {
    log.records
        .iter()
        .map(|r| Example {
            features: r.numeric_feats.clone(),
            watch_time: r.watch_time_s,
            duration: r.duration_s,
            user_id: r.user_id.clone(),
            item_id: r.item_id.clone(),
        })
        .collect()
}

/// Model inputs for a log, using the model's own encoder when it has one.
pub fn model_inputs(model: &CqeModel, log: &InteractionLog) -> CliResult<Dataset> {
    match model.encoder() {
        Some(enc) => Ok(enc.encode_log(log)?),
        None => Ok(raw_dataset(log)),
    }
}

fn encode_for_training(log: &InteractionLog, encoding: Encoding, config: &RunConfig) -> CliResult<(Dataset, Option<FeatureEncoder>)> {
    match encoding {
        Encoding::Raw => {
            if log.numeric_columns.is_empty() {
                return Err(CliError::data("raw encoding needs at least one num_* column"));
            }
            Ok((raw_dataset(log), None))
        }
        Encoding::Hashed => {
            let mut enc = FeatureEncoder::new(config.n_dims, cqe::data::encoder::DEFAULT_HASH_SEED);
            enc.fit(log)?;
            Ok((enc.encode_log(log)?, Some(enc)))
        }
    }
}

fn train(a: &TrainArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let log = load_log(&a.data)?;
    let (dataset, encoder) = encode_for_training(&log, a.encoding, &config)?;
    let out = cqe::train(&dataset, &config.model_config()?, config.seed)?;
    let mut model = out.model;
    if let Some(enc) = encoder {
        model.set_encoder(enc)?;
    }
    let mut header = config.echo();
    header.push(format!("encoding = {:?}", a.encoding).to_lowercase());
    header.push(format!("skipped_rows = {}", log.skipped.len()));
    write_file(&a.out, model.to_text(&header).as_bytes())?;

    let mut loss = comment_block(&config.echo());
    loss.push_str("epoch,loss\n");
    for (i, l) in out.loss_trace.iter().enumerate() {
        loss.push_str(&format!("{},{l}\n", i + 1));
    }
    let loss_path = sibling(&a.out, "loss.csv");
    write_file(&loss_path, loss.as_bytes())?;
    emit(
        stdout,
        &format!(
            "trained on {} rows ({} skipped); final loss {:.6}; wrote {} and {}\n",
            dataset.len(),
            log.skipped.len(),
            out.loss_trace.last().copied().unwrap_or(f64::NAN),
            a.out.display(),
            loss_path.display()
        ),
    )
}

pub fn load_model(path: &Path) -> CliResult<CqeModel> {
    let text = read_file(path)?;
    CqeModel::from_text(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn report_csv(preamble: &[String], report: &MetricsReport) -> String {
    let mut s = comment_block(preamble);
    s.push_str("metric,value\n");
    for (k, v) in report.to_rows() {
        s.push_str(&format!("{k},{}\n", csv_field(&v)));
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

fn strategy_echo(s: &StrategyConfig) -> String {
    format!(
        "strategy = {} tau_low = {:?} tau_high = {:?} k = {:?}",
        s.kind, s.tau_low, s.tau_high, s.k
    )
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let strategy = a.strategy.resolve(&config)?;
    let model = load_model(&a.model)?;
    let log = load_log(&a.data)?;
    let dataset = model_inputs(&model, &log)?;
    let report = evaluate::evaluate(&model, &dataset, &strategy, a.task, a.max_pairs, config.seed)?;
    let mut preamble = config.echo();
    preamble.push(strategy_echo(&strategy));
    preamble.push(format!("task = {}", a.task));
    let text = report_csv(&preamble, &report);
    if let Some(out) = &a.out {
        write_file(out, text.as_bytes())?;
    }
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    emit(stdout, &body)
}

fn load_pool(path: Option<&Path>) -> CliResult<CandidatePool> {
    match path {
        Some(p) => CandidatePool::from_toml_str(&read_file(p)?).map_err(|e| {
            let c = CliError::from(e);
            CliError {
                message: format!("{}: {}", p.display(), c.message),
                ..c
            }
        }),
        None => Ok(CandidatePool::risky_vs_safe(10, 10)?),
    }
}

fn pool_model(path: Option<&Path>, pool: &CandidatePool, config: &RunConfig) -> CliResult<Box<dyn QuantileModel>> {
    match path {
        None => Ok(Box::new(OracleModel::new(pool.spec().clone(), config.n_quantiles)?)),
        Some(p) => {
            let model = load_model(p)?;
            if model.encoder().is_some() {
                return Err(CliError::usage(format!(
                    "{}: ranking pools needs a model trained with --encoding raw",
                    p.display()
                )));
            }
            Ok(Box::new(model))
        }
    }
}

fn rank(a: &RankArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let strategy = a.strategy.resolve(&config)?;
    let pool = load_pool(Some(&a.pool))?;
    let model = pool_model(a.model.as_deref(), &pool, &config)?;
    let scores = harness::score_pool(model.as_ref(), &pool, &strategy)?;
    let order = harness::order_by_score(&scores);
    let mut s = comment_block(&config.echo());
    s.push_str(&format!("# {}\n", strategy_echo(&strategy)));
    s.push_str("rank,candidate,score\n");
    for (r, &i) in order.iter().enumerate() {
        s.push_str(&format!("{},{i},{:.6}\n", r + 1, scores[i]));
    }
    if let Some(out) = &a.out {
        write_file(out, s.as_bytes())?;
    }
    emit(stdout, &s)
}

/// Largest relative gradient error of the full training pipeline (hashed
/// encoder, MLP, head, summed pinball loss) on a small network.
/// Returns `(parameter count, max relative error)`.
pub fn pipeline_grad_check(n_quantiles: usize, eps: f64, seed: u64) -> CliResult<(usize, f64)> {
    let spec = SyntheticSpec::example_lognormal();
    let dataset = data::generate(&spec, 8, seed)?;
    let records = data::synth::to_records(&dataset);
    let log = InteractionLog {
        categorical_columns: vec![],
        numeric_columns: spec.numeric_columns(),
        records,
        skipped: vec![],
    };
    let mut enc = FeatureEncoder::new(12, seed);
    enc.fit(&log)?;
    let encoded = enc.encode_log(&log)?;
    let params = MlpParams::init(&[12, 8, n_quantiles], seed)?;
    let levels = QuantileLevels::new(n_quantiles)?;
    // Scale targets into the range the fresh network emits.
    let batch: Vec<(&[f64], f64)> = encoded
        .examples()
        .iter()
        .map(|e| (e.features.as_slice(), e.watch_time / 40.0))
        .collect();
    let worst = grad_check(&params, eps, |p| batch_loss_and_grad(p, &levels, &batch))?;
    Ok((params.param_count(), worst))
}

fn grad_check_cmd(a: &GradCheckArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let mut s = format!("# seed = {}\n# eps = {:?}\nn_quantiles,param_count,max_rel_error\n", config.seed, a.eps);
    let mut failed = vec![];
    for &n in &a.n_quantiles {
        let (count, err) = pipeline_grad_check(n, a.eps, config.seed)?;
        s.push_str(&format!("{n},{count},{err:e}\n"));
        if !(err < GRAD_CHECK_TOLERANCE) {
            failed.push(n);
        }
    }
    if let Some(out) = &a.out {
        write_file(out, s.as_bytes())?;
    }
    emit(stdout, &s)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numeric(format!(
            "gradient check above {GRAD_CHECK_TOLERANCE:e} for n_quantiles {failed:?}"
        )))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub const SWEEP_HEADER: &str = "n_quantiles,status,mae,xauc,gauc,recovery_error,final_loss";

fn sweep_row(r: &SweepRow) -> String {
    match &r.outcome {
        Ok(rep) => format!(
            "{},ok,{},{},{},{},{}",
            r.n_quantiles,
            fmt_opt(rep.mae),
            fmt_opt(rep.xauc.map(|x| x.value)),
            fmt_opt(rep.gauc),
            fmt_opt(r.recovery_error),
            fmt_opt(r.final_loss)
        ),
        Err(msg) => format!("{},{},,,,,", r.n_quantiles, csv_field(&format!("error: {msg}"))),
    }
}

fn sweep(a: &SweepArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let strategy = a.strategy.resolve(&config)?;
    let log = load_log(&a.data)?;
    let spec = a
        .spec
        .as_deref()
        .map(|p| SyntheticSpec::from_toml_str(&read_file(p)?).map_err(CliError::from))
        .transpose()?;
    let (dataset, _) = encode_for_training(&log, a.encoding, &config)?;
    let (train_idx, test_idx) = split_indices(dataset.len(), a.holdout, config.seed);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(CliError::usage("holdout leaves an empty train or test split"));
    }
    let raw: Vec<Vec<f64>> = test_idx.iter().map(|&i| log.records[i].numeric_feats.clone()).collect();
    let truth = spec.as_ref().map(|spec| GroundTruth {
        spec,
        raw_features: &raw,
    });
    let rows = evaluate::sweep_quantiles(
        &dataset.subset(&train_idx),
        &dataset.subset(&test_idx),
        &config.model_config()?,
        &a.n_list,
        &strategy,
        a.task,
        config.seed,
        truth,
    )?;
    let mut preamble = config.echo();
    preamble.push(strategy_echo(&strategy));
    preamble.push(format!("task = {} holdout = {:?} encoding = {:?}", a.task, a.holdout, a.encoding).to_lowercase());
    let mut s = comment_block(&preamble);
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in &rows {
        s.push_str(&sweep_row(r));
        s.push('\n');
    }
    write_file(&a.out, s.as_bytes())?;
    let body: String = s.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    emit(stdout, &body)
}

fn compare(a: &CompareArgs, stdout: &mut dyn Write) -> CliResult {
    let config = a.shared.config()?;
    let base = config.strategy_config()?;
    let pool = load_pool(a.pool.as_deref())?;
    let model = pool_model(a.model.as_deref(), &pool, &config)?;
    let mut user = match a.user_model {
        UserPreset::Default => UserModel::default(),
        UserPreset::HighChurn => UserModel::high_churn(),
    };
    if let Some(p) = a.p_churn {
        user.p_churn = p;
    }
    if let Some(t) = a.threshold_s {
        user.threshold_s = t;
    }
    user.validate()?;
    if a.strategies.is_empty() {
        return Err(CliError::usage("at least one strategy is required"));
    }
    let strategies: Vec<(String, StrategyConfig)> = a
        .strategies
        .iter()
        .map(|&kind| (kind.to_string(), StrategyConfig { kind, ..base }))
        .collect();
    let sessions = SessionConfig {
        user,
        horizon: a.horizon,
        n_sessions: a.n_sessions,
    };
    let rows = harness::compare_strategies(model.as_ref(), &pool, &strategies, &sessions, config.seed)?;
    let mut preamble = config.echo();
    preamble.push(format!(
        "p_churn = {:?} threshold_s = {:?} horizon = {} n_sessions = {} pool_size = {}",
        user.p_churn,
        user.threshold_s,
        a.horizon,
        a.n_sessions,
        pool.len()
    ));
    let mut buf = vec![];
    harness::write_report(&mut buf, &preamble, &rows).map_err(|e| CliError::data(e.to_string()))?;
    if let Some(out) = &a.out {
        write_file(out, &buf)?;
    }
    stdout.write_all(&buf).map_err(|e| CliError::data(e.to_string()))
}
