//! Batch entry points: synth, prepare, train, eval, uq and sweep.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crackcast::data::{self, PipelineOptions, PreparedDataset, Split, WindowSample};
use crackcast::metrics::{self, EvalReport};
use crackcast::models::{Checkpoint, Model, ModelKind, ModelSpec, Route};
use crackcast::nn::CellKind;
use crackcast::synth::{self, GeneratorConfig};
use crackcast::training::{self, LossKind, TrainConfig};
use crackcast::uncertainty::{self, MCDropoutConfig};

use config::FileConfig;

const OUT_ENV: &str = "CRACKCAST_OUT";
const RECORDS_FILE: &str = "records.ndjson";
const TRUTH_FILE: &str = "ground_truth.ndjson";
const DATASET_FILE: &str = "dataset.json";

/// Usage or configuration problem, reported with exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "crackcast", version, about = "Rail crack length forecasting experiments")]
struct Cli {
    /// Key=value config file with sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $CRACKCAST_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Regularize, filter, split and window raw records.
    Prepare(PrepareArgs),
    /// Train one model and write its checkpoint and history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Monte Carlo dropout intervals and coverage for a bmh checkpoint.
    Uq(UqArgs),
    /// Past-horizon sweep and optional dropout-rate sweep.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_defects: Option<u64>,
    /// Model-visible feature channels.
    #[arg(long)]
    features: Option<usize>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Newline-delimited input records.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    past: Option<usize>,
    #[arg(long)]
    future: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Prepared dataset file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Cell of the multi-horizon models.
    #[arg(long, value_parser = parse_cell)]
    cell: Option<CellKind>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    past: Option<usize>,
    #[arg(long)]
    future: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Clip gradients to this global norm.
    #[arg(long)]
    clip: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Locates `<out>/<model>.ckpt.json` when no checkpoint is given.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Also count a fall from the last observed length to the first forecast.
    #[arg(long)]
    boundary_falls: bool,
}

#[derive(Args, Debug)]
struct UqArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    widen: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Inclusive past-horizon range, e.g. `1..10`.
    #[arg(long, value_parser = parse_range, default_value = "1..10")]
    past_range: (usize, usize),
    /// Comma-separated MC dropout rates evaluated on a bmh checkpoint.
    #[arg(long, value_delimiter = ',')]
    dropout_rates: Vec<f64>,
    /// bmh checkpoint for the dropout-rate sweep (default: trained at the
    /// first past length of the range).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn parse_cell(s: &str) -> std::result::Result<CellKind, String> {
    match s {
        "lstm" => Ok(CellKind::Lstm),
        "gru" => Ok(CellKind::Gru),
        _ => Err(format!("unknown cell `{s}` (expected lstm or gru)")),
    }
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 1..10, got `{s}`"))?;
    let lo: usize = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
    let hi: usize = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range must satisfy 1 <= start <= end, got {s}"));
    }
    Ok((lo, hi))
}

/// Flags merged with the config file.
struct Context_ {
    file: FileConfig,
    seed: u64,
    out: PathBuf,
}

impl Context_ {
    fn new(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
            None => FileConfig::default(),
        };
        let seed = cli.seed.or(file.general.seed).unwrap_or(0);
        let out = cli
            .out
            .clone()
            .or_else(|| file.general.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { file, seed, out })
    }

    fn ensure_out(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn data_path(&self, flag: &Option<PathBuf>, default_file: &str) -> PathBuf {
        flag.clone()
            .or_else(|| self.file.general.data.clone())
            .unwrap_or_else(|| self.out.join(default_file))
    }

    fn model_kind(&self, flag: Option<ModelKind>, default: ModelKind) -> Result<ModelKind> {
        match flag {
            Some(k) => Ok(k),
            None => match &self.file.model.model {
                Some(s) => s.parse().map_err(|e: crackcast::Error| usage(e.to_string())),
                None => Ok(default),
            },
        }
    }

    fn checkpoint_path(&self, flag: &Option<PathBuf>, kind: ModelKind) -> PathBuf {
        flag.clone()
            .or_else(|| self.file.general.checkpoint.clone())
            .unwrap_or_else(|| self.out.join(format!("{kind}.ckpt.json")))
    }

    fn mc_config(&self, samples: Option<usize>, dropout: Option<f64>, widen: Option<f64>, z: Option<f64>) -> Result<MCDropoutConfig> {
        let d = MCDropoutConfig::default();
        let u = &self.file.uq;
        let c = MCDropoutConfig {
            samples: samples.or(u.samples).unwrap_or(d.samples),
            dropout: dropout.or(u.dropout).unwrap_or(d.dropout),
            widen_mm: widen.or(u.widen).unwrap_or(d.widen_mm),
            z: z.or(u.z).unwrap_or(d.z),
            seed: self.seed,
        };
        c.validate().map_err(|e| usage(e.to_string()))?;
        Ok(c)
    }
}

/// Fully resolved model and training settings.
struct Plan {
    spec: ModelSpec,
    train: TrainConfig,
}

fn plan(ctx: &Context_, args: &ModelArgs, layout: data::FeatureLayout, default_kind: ModelKind) -> Result<Plan> {
    let m = &ctx.file.model;
    let t = &ctx.file.train;
    let kind = ctx.model_kind(args.model, default_kind)?;
    let mut spec = ModelSpec::new(kind, layout);
    let cell = match args.cell {
        Some(c) => Some(c),
        None => m.cell.as_deref().map(parse_cell).transpose().map_err(usage)?,
    };
    if let Some(c) = cell {
        spec.cell = c;
    }
    if let Some(h) = args.hidden.or(m.hidden) {
        spec.hidden = h;
    }
    if let Some(d) = args.dropout.or(m.dropout) {
        spec.dropout = d;
    }
    if let Some(p) = args.past.or(m.past) {
        spec.past = p;
    }
    if let Some(f) = args.future.or(m.future) {
        spec.future = f;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let default_epochs = if kind.route() == Route::MultiHorizon { 10 } else { 25 };
    let train = TrainConfig {
        learning_rate: args.lr.or(t.lr).unwrap_or(1e-3),
        batch_size: args.batch.or(t.batch).unwrap_or(128),
        max_epochs: args.epochs.or(t.epochs).unwrap_or(default_epochs),
        seed: ctx.seed,
        loss: if kind.is_bayesian() { LossKind::Bmh } else { LossKind::MaskedMse },
        clip_norm: args.clip.or(t.clip),
        ..TrainConfig::default()
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Plan { spec, train })
}

fn load_dataset(path: &Path) -> Result<PreparedDataset> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading prepared dataset {} (run `prepare` first)", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string(value)?).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(ctx: &Context_, args: &SynthArgs) -> Result<()> {
    let s = &ctx.file.synth;
    let d = GeneratorConfig::default();
    let n_defects = match args.n_defects {
        Some(n) => n as usize,
        None => s.n_defects.unwrap_or(d.n_defects),
    };
    let config = GeneratorConfig {
        n_defects,
        seed: ctx.seed,
        n_features: args.features.or(s.features).unwrap_or(d.n_features),
        rounding_probability: s.rounding_probability.unwrap_or(d.rounding_probability),
        grinding_probability: s.grinding_probability.unwrap_or(d.grinding_probability),
        jump_probability: s.jump_probability.unwrap_or(d.jump_probability),
        misread_probability: s.misread_probability.unwrap_or(d.misread_probability),
        visit_gap_median_months: s.visit_gap_median_months.unwrap_or(d.visit_gap_median_months),
        ..d
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let ds = synth::generate_dataset(&config)?;
    let out = ctx.ensure_out()?;
    data::write_records(&out.join(RECORDS_FILE), &ds.records)?;
    synth::write_ground_truth(&out.join(TRUTH_FILE), &ds.truth)?;
    let summary = ds.summary();
    fs::write(out.join("synth_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("defects: {}", summary.n_defects);
    println!("visits: {} (per defect {}..{})", summary.total_visits, summary.min_visits, summary.max_visits);
    println!("visit gap months: {}..{}", summary.min_gap_months, summary.max_gap_months);
    println!("series span months: {}..{}", summary.min_span_months, summary.max_span_months);
    println!(
        "events: grinding {}, jumps {}, misreads {}",
        summary.grinding_events, summary.jump_events, summary.misread_events
    );
    println!("wrote {}", out.join(RECORDS_FILE).display());
    Ok(())
}

fn cmd_prepare(ctx: &Context_, args: &PrepareArgs) -> Result<()> {
    let m = &ctx.file.model;
    let past = args.past.or(m.past).unwrap_or(5);
    let future = args.future.or(m.future).unwrap_or(4);
    if future == 0 {
        return Err(usage("future horizon must be at least 1"));
    }
    let path = ctx.data_path(&args.data, RECORDS_FILE);
    let records = data::read_records(&path).with_context(|| format!("reading {}", path.display()))?;
    if records.is_empty() {
        bail!("no records in {}", path.display());
    }
    let options = PipelineOptions {
        seed: ctx.seed,
        ..PipelineOptions::default()
    };
    let ds = data::prepare(&records, &options)?;
    let windows = ds.windows(past, future)?;
    let out = ctx.ensure_out()?;
    write_json(&out.join(DATASET_FILE), &ds)?;
    for split in Split::ALL {
        write_json(&out.join(format!("{split}.json")), &windows.raw(split))?;
    }
    write_json(&out.join("scaler.json"), &windows.scaler)?;
    ds.write_series_csv(&out.join("series.csv"))?;
    let mut rejected = String::from("defect_id,reason\n");
    for r in &ds.rejected {
        rejected.push_str(&format!("{},{}\n", r.defect_id, r.reason.code()));
    }
    fs::write(out.join("rejected.csv"), rejected)?;

    println!("accepted defects: {}", ds.series.len());
    println!("rejected defects: {}", ds.rejected.len());
    println!("feature channels: {}", ds.layout.n_features());
    println!("window: past {past}, future {future}");
    for split in Split::ALL {
        println!(
            "{split}: {} defects, {} samples",
            ds.split.count(split),
            windows.raw(split).len()
        );
    }
    Ok(())
}

fn cmd_train(ctx: &Context_, args: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&ctx.data_path(&args.model.data, DATASET_FILE))?;
    let plan = plan(ctx, &args.model, ds.layout, ModelKind::Mh)?;
    let windows = ds.windows(plan.spec.past, plan.spec.future)?;
    let mut store = crackcast::autodiff::ParameterStore::new();
    let model = Model::new(plan.spec.clone(), &mut store, &mut training::init_rng(ctx.seed))?;
    println!(
        "training {} (past {}, future {}, {} parameters) on {} samples, loss {}",
        plan.spec.kind,
        plan.spec.past,
        plan.spec.future,
        store.num_scalars(),
        windows.scaled(Split::Train).len(),
        plan.train.loss.column_name()
    );
    let outcome = training::train(
        &model,
        &mut store,
        windows.scaled(Split::Train),
        windows.scaled(Split::Validation),
        &plan.train,
    )?;
    for r in &outcome.history {
        println!(
            "epoch {:>3}  train {:.6}  val {:.6}  val_mse {:.6}  {:.1}s",
            r.epoch, r.train_loss, r.val_loss, r.val_mse, r.wall_time_s
        );
    }
    let out = ctx.ensure_out()?;
    let kind = plan.spec.kind;
    let ckpt_path = ctx.checkpoint_path(&args.checkpoint, kind);
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Checkpoint {
        spec: plan.spec,
        scaler: Some(windows.scaler.clone()),
        store: outcome.best.clone(),
    }
    .save(&ckpt_path)?;
    let history = out.join(format!("{kind}_history.csv"));
    outcome.write_history_csv(&history)?;
    match outcome.plateau_epoch(plan.train.plateau_tolerance, plan.train.plateau_window) {
        Some(e) => println!("validation plateau reached at epoch {e}"),
        None => println!("no validation plateau within {} epochs", plan.train.max_epochs),
    }
    println!("best epoch {}; checkpoint {}", outcome.best_epoch, ckpt_path.display());
    println!("history {}", history.display());
    Ok(())
}

/// Test windows of `ckpt`'s horizon, scaled with the checkpoint's scaler.
fn test_windows(ds: &PreparedDataset, ckpt: &Checkpoint) -> Result<(Vec<WindowSample>, Vec<WindowSample>, data::ScalerParams)> {
    let w = ds.windows(ckpt.spec.past, ckpt.spec.future)?;
    let scaler = ckpt.scaler.clone().unwrap_or_else(|| w.scaler.clone());
    let raw = w.raw(Split::Test).to_vec();
    let scaled = raw.iter().map(|s| scaler.transform(s)).collect();
    Ok((raw, scaled, scaler))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {} (run `train` first)", path.display()))
}

fn cmd_eval(ctx: &Context_, args: &EvalArgs) -> Result<()> {
    let kind = ctx.model_kind(args.model, ModelKind::Mh)?;
    let ckpt = load_checkpoint(&ctx.checkpoint_path(&args.checkpoint, kind))?;
    let ds = load_dataset(&ctx.data_path(&args.data, DATASET_FILE))?;
    let (raw, scaled, scaler) = test_windows(&ds, &ckpt)?;
    let model = ckpt.model()?;
    let (mut report, preds) = metrics::evaluate_model(&model, &ckpt.store, &scaler, &raw, &scaled)?;
    if args.boundary_falls {
        let boundary: Vec<f64> = raw.iter().map(|s| s.past_y.last().copied().unwrap_or(s.last_measured_value)).collect();
        let p = metrics::physical_metrics(&preds.y_hat, &preds.masks, Some(&boundary))?;
        report.msqns = p.msqns;
        report.mstns = p.mstns;
        report.mlns = p.mlns;
    }
    let out = ctx.ensure_out()?;
    metrics::write_metrics_csv(&out.join("metrics.csv"), std::slice::from_ref(&report))?;
    metrics::write_scatter(out, &preds)?;
    print!("{}", metrics::format_table(&[report]));
    println!("wrote {}", out.join("metrics.csv").display());
    Ok(())
}

fn cmd_uq(ctx: &Context_, args: &UqArgs) -> Result<()> {
    let config = ctx.mc_config(args.samples, args.dropout, args.widen, args.z)?;
    let ckpt = load_checkpoint(&ctx.checkpoint_path(&args.checkpoint, ModelKind::Bmh))?;
    if !ckpt.spec.kind.is_bayesian() {
        return Err(usage(format!("uq needs a bmh checkpoint, got {}", ckpt.spec.kind)));
    }
    let ds = load_dataset(&ctx.data_path(&args.data, DATASET_FILE))?;
    let (raw, scaled, scaler) = test_windows(&ds, &ckpt)?;
    let model = ckpt.model()?;
    let report = uncertainty::run_uq(&model, &ckpt.store, &scaler, &raw, &scaled, &config)?;
    let out = ctx.ensure_out()?;
    uncertainty::write_uq_csv(&out.join("uq.csv"), &report, &raw)?;
    println!(
        "samples {}, dropout {}, z {}, widen {} mm",
        config.samples, config.dropout, config.z, config.widen_mm
    );
    println!("raw coverage: {:.2}%", report.raw_coverage);
    println!("widened coverage: {:.2}%", report.widened_coverage);
    println!("mean epistemic variance: {:.4} mm^2", report.mean_epistemic);
    println!("mean aleatoric variance: {:.4} mm^2", report.mean_aleatoric);
    println!("wrote {}", out.join("uq.csv").display());
    Ok(())
}

fn cmd_sweep(ctx: &Context_, args: &SweepArgs) -> Result<()> {
    let ds = load_dataset(&ctx.data_path(&args.model.data, DATASET_FILE))?;
    let out = ctx.ensure_out()?.to_path_buf();
    let (lo, hi) = args.past_range;
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut first_bmh: Option<Checkpoint> = None;
    for past in lo..=hi {
        let mut margs = args.model.clone();
        margs.past = Some(past);
        let plan = plan(ctx, &margs, ds.layout, ModelKind::Mh)?;
        if plan.spec.kind.route() == Route::FeatureOnly {
            return Err(usage("the past-horizon sweep needs a history or multi-horizon model"));
        }
        let w = ds.windows(past, plan.spec.future)?;
        let mut store = crackcast::autodiff::ParameterStore::new();
        let model = Model::new(plan.spec.clone(), &mut store, &mut training::init_rng(ctx.seed))?;
        let outcome = training::train(&model, &mut store, w.scaled(Split::Train), w.scaled(Split::Validation), &plan.train)?;
        let (report, _) = metrics::evaluate_model(&model, &outcome.best, &w.scaler, w.raw(Split::Test), w.scaled(Split::Test))?;
        println!(
            "past {past:>2}: mean MAE {:.3}  mean RMSE {:.3}  (best epoch {})",
            report.mean_mae, report.mean_rmse, outcome.best_epoch
        );
        if first_bmh.is_none() && plan.spec.kind.is_bayesian() {
            first_bmh = Some(Checkpoint {
                spec: plan.spec.clone(),
                scaler: Some(w.scaler.clone()),
                store: outcome.best.clone(),
            });
        }
        reports.push(report);
    }
    metrics::write_horizon_sweep(&out.join("horizon_sweep.csv"), &reports)?;
    print!("{}", metrics::format_table(&reports));
    println!("wrote {}", out.join("horizon_sweep.csv").display());

    if !args.dropout_rates.is_empty() {
        let ckpt = match &args.checkpoint {
            Some(p) => load_checkpoint(p)?,
            None => first_bmh.ok_or_else(|| usage("dropout-rate sweep needs --model bmh or a bmh --checkpoint"))?,
        };
        if !ckpt.spec.kind.is_bayesian() {
            return Err(usage("dropout-rate sweep needs a bmh checkpoint"));
        }
        let (raw, scaled, scaler) = test_windows(&ds, &ckpt)?;
        let model = ckpt.model()?;
        let mut csv = String::from("dropout,mean_epistemic,mean_aleatoric,raw_coverage,widened_coverage\n");
        for &rate in &args.dropout_rates {
            let config = ctx.mc_config(args.samples, Some(rate), None, None)?;
            let r = uncertainty::run_uq(&model, &ckpt.store, &scaler, &raw, &scaled, &config)?;
            println!(
                "dropout {rate}: epistemic {:.4}  aleatoric {:.4}  coverage {:.2}% / {:.2}%",
                r.mean_epistemic, r.mean_aleatoric, r.raw_coverage, r.widened_coverage
            );
            csv.push_str(&format!(
                "{rate},{},{},{},{}\n",
                r.mean_epistemic, r.mean_aleatoric, r.raw_coverage, r.widened_coverage
            ));
        }
        fs::write(out.join("dropout_sweep.csv"), csv)?;
        println!("wrote {}", out.join("dropout_sweep.csv").display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Context_::new(cli)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Prepare(a) => cmd_prepare(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Uq(a) => cmd_uq(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<crackcast::Error>(), Some(crackcast::Error::Config(_)));
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}
