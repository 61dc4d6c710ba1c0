//! `diskprep` command-line front end.
//!
//! Settings come from an optional TOML file (`--config`) with the sections
//! `[pipeline]` (including `[pipeline.train]`), `[synth]`, `[ingest]` and
//! `[sliding]`, plus a top-level `seed`. Dedicated flags override the file,
//! and `--set section.key=value` overrides any single setting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use diskprep::analysis::{self, MissingStats, ModelSummary};
use diskprep::backtrack;
use diskprep::data::{Dataset, Day, TicketEvent};
use diskprep::eval;
use diskprep::features::{self, FeatureMatrix};
use diskprep::filling::FillMethod;
use diskprep::ingest::{self, SchemaConfig};
use diskprep::model::{ModelKind, SamplingPolicy, TrainedModel};
use diskprep::pipeline::{self, Manifest, ModelMeta, PipelineConfig, SplitSpec};
use diskprep::synth::{self, SynthConfig};
use diskprep::typefilter::RankedAttribute;

#[derive(Parser, Debug)]
#[command(
    name = "diskprep",
    version,
    about = "SMART preprocessing and disk failure prediction"
)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set pipeline.train.n_trees=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for every random choice (synthesis, sampling, training).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output; repeat for debug level.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(flatten)]
    overrides: PipelineArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct PipelineArgs {
    /// Only use disks of this model.
    #[arg(long, global = true)]
    model_filter: Option<String>,
    #[arg(long, global = true, value_parser = parse_fill_method)]
    fill_method: Option<FillMethod>,
    /// Longest gap (days) that is filled; longer gaps drop the disk.
    #[arg(long, global = true)]
    max_gap: Option<usize>,
    /// Attributes kept by correlation ranking.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    detection_window: Option<usize>,
    #[arg(long, global = true)]
    z_threshold: Option<f64>,
    /// Backtracking window in days, or `auto` to detect it.
    #[arg(long, global = true)]
    n_days: Option<String>,
    #[arg(long, global = true, action = ArgAction::Set)]
    failure_type_filtering: Option<bool>,
    #[arg(long, global = true, action = ArgAction::Set)]
    observation_window: Option<bool>,
    /// FPR budget for evaluation.
    #[arg(long, global = true)]
    fpr: Option<f64>,
    /// Training months of the single split (30-day months from day 0).
    #[arg(long, global = true)]
    train_months: Option<usize>,
    #[arg(long, global = true)]
    test_months: Option<usize>,
    #[arg(long, global = true, value_enum)]
    model_kind: Option<KindArg>,
    #[arg(long, global = true)]
    n_trees: Option<usize>,
    #[arg(long, global = true)]
    max_depth: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    feature_subsample: Option<f64>,
    #[arg(long, global = true)]
    min_samples_leaf: Option<usize>,
    #[arg(long, global = true, value_enum)]
    sampling: Option<SamplingArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Gbdt,
    Rf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplingArg {
    Lastday,
    Undersample,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FeatureFormat {
    Csv,
    Bin,
}

fn parse_fill_method(s: &str) -> Result<FillMethod, String> {
    s.parse().map_err(|e: diskprep::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse SMART CSV logs (and an optional ticket file) into a dataset directory.
    Ingest {
        /// CSV file or directory of daily CSV files.
        #[arg(long)]
        input: PathBuf,
        /// Ticket file (CSV or JSON lines) with serial, day/date, failure_type.
        #[arg(long)]
        tickets: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-model disk counts, AFR and missing-data statistics.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        /// Restrict to one model (default: every model).
        #[arg(long)]
        model: Option<String>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic fleet with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_disks: Option<usize>,
        #[arg(long)]
        span_days: Option<Day>,
        #[arg(long)]
        afr: Option<f64>,
        #[arg(long)]
        ramp_days: Option<usize>,
        #[arg(long)]
        ramp_exponent: Option<f64>,
        #[arg(long)]
        daily_drop_rate: Option<f64>,
        #[arg(long)]
        gap_probability: Option<f64>,
        #[arg(long)]
        gap_min_days: Option<usize>,
        #[arg(long)]
        gap_max_days: Option<usize>,
    },
    /// Rank attributes and find predictable failure types.
    FilterTypes {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill missing days; failed disks are extended to their ticket day.
    Fill {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect the pre-failure period and summarize the resulting labels.
    Backtrack {
        /// Filled dataset.
        #[arg(long)]
        data: PathBuf,
        /// Output of `filter-types`; every ticket is a positive without it.
        #[arg(long)]
        typefilter: Option<PathBuf>,
        /// Last training day (default: end of the configured training window).
        #[arg(long)]
        train_end: Option<Day>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the feature matrix for every sample.
    Featurize {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated basic attributes (default: attributes every disk reports).
        #[arg(long, value_delimiter = ',')]
        attributes: Vec<String>,
        #[arg(long, value_enum, default_value = "bin")]
        format: FeatureFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the training phase of the configured split and save the model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the test phase with a model saved by `train`.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sliding-window evaluation over the whole span.
    EvaluateSliding {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window_train_months: Option<usize>,
        #[arg(long)]
        window_test_months: Option<usize>,
    },
    /// Every stage on the configured split, with all artifacts.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SlidingSettings {
    train_months: usize,
    test_months: usize,
    fpr_budget: f64,
}

impl Default for SlidingSettings {
    fn default() -> Self {
        SlidingSettings {
            train_months: 3,
            test_months: 1,
            fpr_budget: eval::DEFAULT_SLIDING_FPR,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    seed: Option<u64>,
    pipeline: PipelineConfig,
    synth: SynthConfig,
    ingest: SchemaConfig,
    sliding: SlidingSettings,
}

/// Parses `value` as a TOML value, falling back to a plain string.
fn toml_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .with_context(|| format!("--set expects KEY=VALUE, got `{assignment}`"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for p in path {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("`{p}` in `{key}` is not a table"))?;
    }
    node.insert(last.to_string(), toml_value(value.trim()));
    Ok(())
}

fn load_settings(cli: &Cli) -> Result<Settings> {
    let mut table = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .parse::<toml::Table>()
            .with_context(|| format!("parsing {}", path.display()))?,
        None => toml::Table::new(),
    };
    for s in &cli.set {
        apply_set(&mut table, s)?;
    }
    let mut settings: Settings = toml::Value::Table(table).try_into().context("invalid configuration")?;

    let o = &cli.overrides;
    let p = &mut settings.pipeline;
    if let Some(seed) = cli.seed.or(settings.seed) {
        p.seed = seed;
        settings.synth.seed = seed;
    }
    if let Some(m) = &o.model_filter {
        p.model_filter = Some(m.clone());
    }
    if let Some(m) = o.fill_method {
        p.fill_method = m;
    }
    if let Some(v) = o.max_gap {
        p.max_gap = v;
    }
    if let Some(v) = o.top_k {
        p.top_k = v;
    }
    if let Some(v) = o.detection_window {
        p.detection_window = v;
    }
    if let Some(v) = o.z_threshold {
        p.z_threshold = v;
    }
    if let Some(v) = &o.n_days {
        p.n_days = match v.as_str() {
            "auto" => None,
            n => Some(
                n.parse()
                    .with_context(|| format!("--n-days expects a number or `auto`, got `{n}`"))?,
            ),
        };
    }
    if let Some(v) = o.failure_type_filtering {
        p.failure_type_filtering = v;
    }
    if let Some(v) = o.observation_window {
        p.observation_window = v;
    }
    if let Some(v) = o.fpr {
        p.fpr_budget = v;
        settings.sliding.fpr_budget = v;
    }
    if o.train_months.is_some() || o.test_months.is_some() {
        let (tr, te) = match p.split {
            SplitSpec::Months {
                train_months,
                test_months,
            } => (train_months, test_months),
            SplitSpec::Days { .. } => (10, 1),
        };
        p.split = SplitSpec::Months {
            train_months: o.train_months.unwrap_or(tr),
            test_months: o.test_months.unwrap_or(te),
        };
    }
    let t = &mut p.train;
    if let Some(k) = o.model_kind {
        t.model_kind = match k {
            KindArg::Gbdt => ModelKind::Gbdt,
            KindArg::Rf => ModelKind::RandomForest,
        };
    }
    if let Some(v) = o.n_trees {
        t.n_trees = v;
    }
    if let Some(v) = o.max_depth {
        t.max_depth = v;
    }
    if let Some(v) = o.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = o.feature_subsample {
        t.feature_subsample = v;
    }
    if let Some(v) = o.min_samples_leaf {
        t.min_samples_leaf = v;
    }
    if let Some(s) = o.sampling {
        t.sampling_policy = match s {
            SamplingArg::Lastday => SamplingPolicy::WholePhasePositivesLastDayNegatives,
            SamplingArg::Undersample => SamplingPolicy::Undersample1to10,
        };
    }
    t.validate()?;
    Ok(settings)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `<path>.manifest.json` next to a file, or `manifest.json` inside a directory.
fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

#[derive(Serialize)]
struct ModelAnalysis {
    model: String,
    afr: f64,
    missing: MissingStats,
}

#[derive(Serialize)]
struct AnalysisReport {
    summaries: Vec<ModelSummary>,
    models: Vec<ModelAnalysis>,
}

#[derive(Serialize, Deserialize)]
struct FilterTypesOutput {
    ranking: Vec<RankedAttribute>,
    table: Option<diskprep::typefilter::PredictabilityTable>,
    /// Failed disks kept as positives: serial → failure day.
    positives: BTreeMap<String, Day>,
}

#[derive(Serialize)]
struct BacktrackOutput {
    n: usize,
    prefailure: Option<backtrack::PrefailurePeriod>,
    train_end_day: Day,
    observation_window: bool,
    positive_samples: usize,
    negative_samples: usize,
    dropped_samples: usize,
    positive_disks: usize,
    excluded_disks: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let settings = load_settings(&cli)?;
    let cfg = &settings.pipeline;
    let fp = cfg.fingerprint();

    match &cli.command {
        Command::Ingest { input, tickets, out } => {
            let (ds, report) = ingest::parse_smart_csv(input, &settings.ingest)
                .with_context(|| format!("ingesting {}", input.display()))?;
            let ds = match &cfg.model_filter {
                Some(m) => ds.of_model(m),
                None => ds,
            };
            let ds = match tickets {
                Some(path) => {
                    let (typed, treport) = ingest::parse_tickets(path, ds.epoch)
                        .with_context(|| format!("reading tickets {}", path.display()))?;
                    log::info!("tickets: {treport:?}");
                    let mut merged: BTreeMap<String, TicketEvent> =
                        ds.tickets.iter().map(|(s, t)| (s.clone(), t.clone())).collect();
                    for t in typed {
                        if ds.disks.contains_key(&t.serial) {
                            merged.insert(t.serial.clone(), t);
                        }
                    }
                    ds.with_tickets(merged.into_values())?
                }
                None => ds,
            };
            ds.save(out)?;
            write_json(&out.join("ingest-report.json"), &report)?;
            Manifest::new("ingest", &fp)
                .input("input", input)?
                .output("dataset", out)?
                .write(&manifest_path(out))?;
            println!(
                "ingested {} rows into {} disks ({} failed), {} attributes -> {}",
                report.rows,
                ds.disks.len(),
                ds.tickets.len(),
                ds.attributes.len(),
                out.display()
            );
        }
        Command::Analyze { data, model, out } => {
            let ds = load_dataset(data)?;
            let models: Vec<String> = match model {
                Some(m) if !ds.has_model(m) => bail!("no disks of model `{m}`"),
                Some(m) => vec![m.clone()],
                None => ds.models().into_iter().map(String::from).collect(),
            };
            let report = AnalysisReport {
                summaries: analysis::model_summaries(&ds),
                models: models
                    .iter()
                    .map(|m| {
                        Ok(ModelAnalysis {
                            model: m.clone(),
                            afr: analysis::afr(&ds, m)?,
                            missing: analysis::missing_stats(&ds, m),
                        })
                    })
                    .collect::<Result<_>>()?,
            };
            match out {
                Some(path) => {
                    write_json(path, &report)?;
                    for m in &report.models {
                        println!(
                            "{}: AFR {:.2}%, DMR failed {:.2}%, healthy {:.2}%",
                            m.model,
                            100.0 * m.afr,
                            100.0 * m.missing.dmr_failed,
                            100.0 * m.missing.dmr_healthy
                        );
                    }
                }
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Synth {
            out,
            n_disks,
            span_days,
            afr,
            ramp_days,
            ramp_exponent,
            daily_drop_rate,
            gap_probability,
            gap_min_days,
            gap_max_days,
        } => {
            let mut sc = settings.synth.clone();
            sc.n_disks = n_disks.unwrap_or(sc.n_disks);
            sc.span_days = span_days.unwrap_or(sc.span_days);
            sc.afr_target = afr.unwrap_or(sc.afr_target);
            sc.ramp_days = ramp_days.unwrap_or(sc.ramp_days);
            sc.ramp_exponent = ramp_exponent.unwrap_or(sc.ramp_exponent);
            let m = &mut sc.missing;
            m.daily_drop_rate = daily_drop_rate.unwrap_or(m.daily_drop_rate);
            m.gap_probability = gap_probability.unwrap_or(m.gap_probability);
            m.gap_min_days = gap_min_days.unwrap_or(m.gap_min_days);
            m.gap_max_days = gap_max_days.unwrap_or(m.gap_max_days);
            let (ds, truth) = synth::generate(&sc)?;
            ds.save(out)?;
            write_json(&out.join("ground-truth.json"), &truth)?;
            write_json(&out.join("synth-config.json"), &sc)?;
            let synth_fp = diskprep::hashing::sha256_hex(serde_json::to_string(&sc)?.as_bytes());
            Manifest::new("synth", &synth_fp)
                .output("dataset", out)?
                .write(&manifest_path(out))?;
            println!(
                "generated {} disks over {} days, {} failures (seed {}) -> {}",
                ds.disks.len(),
                ds.span_days,
                ds.tickets.len(),
                sc.seed,
                out.display()
            );
        }
        Command::FilterTypes { data, out } => {
            let ds = load_dataset(data)?;
            let ds = match &cfg.model_filter {
                Some(m) => ds.of_model(m),
                None => ds,
            };
            let tf = pipeline::typefilter_stage(&ds, cfg)?;
            let output = FilterTypesOutput {
                ranking: tf.ranking,
                table: tf.table,
                positives: tf.positives,
            };
            write_json(out, &output)?;
            Manifest::new("typefilter", &fp)
                .input("dataset", data)?
                .output("typefilter", out)?
                .write(&manifest_path(out))?;
            let ranked: Vec<&str> = output.ranking.iter().map(|r| r.attribute.as_str()).collect();
            println!("top attributes: {}", ranked.join(", "));
            match &output.table {
                Some(t) => {
                    let types: Vec<&str> = t.predictable_types.iter().map(|t| t.as_str()).collect();
                    println!("predictable types: {}", types.join(", "));
                }
                None => println!("type filtering off or no failure types; all failures kept"),
            }
            println!("{} positive disks -> {}", output.positives.len(), out.display());
        }
        Command::Fill { data, out } => {
            let ds = load_dataset(data)?;
            let (filled, report) = pipeline::fill_stage(&ds, cfg)?;
            filled.save(out)?;
            write_json(&out.join("fill-report.json"), &report)?;
            Manifest::new("fill", &fp)
                .input("dataset", data)?
                .output("filled", out)?
                .write(&manifest_path(out))?;
            println!(
                "{} fill: {} days filled, {} disks dropped -> {}",
                report.method,
                report.filled_days,
                report.dropped_disks.len(),
                out.display()
            );
        }
        Command::Backtrack {
            data,
            typefilter,
            train_end,
            out,
        } => {
            let ds = load_dataset(data)?;
            let ds = match &cfg.model_filter {
                Some(m) => ds.of_model(m),
                None => ds,
            };
            let (ranking, positives) = match typefilter {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let tf: FilterTypesOutput = serde_json::from_str(&text)?;
                    (tf.ranking, tf.positives)
                }
                None => {
                    let tf = pipeline::typefilter_stage(
                        &ds,
                        &PipelineConfig {
                            failure_type_filtering: false,
                            ..cfg.clone()
                        },
                    )?;
                    (tf.ranking, tf.positives)
                }
            };
            let train_end = train_end.unwrap_or_else(|| cfg.split.windows().1 - 1);
            let (n, prefailure) = pipeline::backtrack_stage(&ds, &positives, &ranking, cfg)?;
            let plan = backtrack::label_samples(&ds, &positives, n, cfg.observation_window, train_end);
            let mut counts = [0usize; 3];
            for (serial, disk) in &ds.disks {
                for s in &disk.samples {
                    match plan.label(serial, s.day) {
                        Some(backtrack::Label::Positive) => counts[0] += 1,
                        Some(backtrack::Label::Negative) => counts[1] += 1,
                        Some(backtrack::Label::Dropped) => counts[2] += 1,
                        None => {}
                    }
                }
            }
            let output = BacktrackOutput {
                n,
                prefailure,
                train_end_day: train_end,
                observation_window: cfg.observation_window,
                positive_samples: counts[0],
                negative_samples: counts[1],
                dropped_samples: counts[2],
                positive_disks: plan.failed_disks().count(),
                excluded_disks: plan.excluded.len(),
            };
            write_json(out, &output)?;
            let mut m = Manifest::new("backtrack", &fp).input("filled", data)?;
            if let Some(path) = typefilter {
                m = m.input("typefilter", path)?;
            }
            m.output("backtrack", out)?.write(&manifest_path(out))?;
            println!(
                "n = {n} days; {} positive, {} negative, {} dropped samples -> {}",
                counts[0],
                counts[1],
                counts[2],
                out.display()
            );
        }
        Command::Featurize {
            data,
            attributes,
            format,
            out,
        } => {
            let ds = load_dataset(data)?;
            let basic = if attributes.is_empty() {
                features::common_attributes(&ds)
            } else {
                attributes.clone()
            };
            let matrix: FeatureMatrix = features::featurize_all(&ds, &basic)?;
            match format {
                FeatureFormat::Csv => matrix.write_csv(out)?,
                FeatureFormat::Bin => matrix.write_binary(out)?,
            }
            Manifest::new("featurize", &fp)
                .input("dataset", data)?
                .output("features", out)?
                .write(&manifest_path(out))?;
            println!(
                "{} rows x {} columns (schema {:016x}) -> {}",
                matrix.n_rows(),
                matrix.n_cols(),
                matrix.schema_hash(),
                out.display()
            );
        }
        Command::Train { data, out } => {
            let ds = load_dataset(data)?;
            let (train_start, train_end, ..) = cfg.split.windows();
            let t = pipeline::train_split(&ds, cfg, train_start, train_end)?;
            pipeline::write_train_artifacts(&t, cfg, (train_start, train_end), data, out)?;
            println!(
                "trained {} on days {train_start}..{train_end}: n = {}, {} training rows, model {} -> {}",
                t.model.kind,
                t.n,
                t.training.n_rows(),
                &t.model.fingerprint()[..16],
                out.display()
            );
        }
        Command::Evaluate { data, model_dir, out } => {
            let ds = load_dataset(data)?;
            let model_path = model_dir.join(pipeline::MODEL_FILE);
            let model = TrainedModel::load(&model_path)?;
            let meta_path = model_dir.join(pipeline::MODEL_META_FILE);
            let meta: ModelMeta = serde_json::from_str(
                &fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
            )?;
            if meta.config_fingerprint != fp {
                log::warn!("evaluating with a configuration that differs from the one used for training");
            }
            let (_, _, test_start, test_end) = cfg.split.windows();
            if test_start < meta.train_end {
                bail!(
                    "test phase starts on day {test_start}, before the training end {}",
                    meta.train_end
                );
            }
            let windows = (meta.train_start, meta.train_end, test_start, test_end);
            let test = pipeline::evaluate_split(&ds, cfg, &model, &meta.basic_attributes, windows)?;
            pipeline::write_eval_artifacts(&test, cfg, data, &model_path, out)?;
            print_report(&test.report);
        }
        Command::EvaluateSliding {
            data,
            out,
            window_train_months,
            window_test_months,
        } => {
            let ds = load_dataset(data)?;
            let tr = window_train_months.unwrap_or(settings.sliding.train_months);
            let te = window_test_months.unwrap_or(settings.sliding.test_months);
            let sliding_cfg = PipelineConfig {
                fpr_budget: settings.sliding.fpr_budget,
                ..cfg.clone()
            };
            let report = pipeline::sliding_runs(&ds, tr, te, &sliding_cfg)?;
            write_json(out, &report)?;
            Manifest::new("evaluate-sliding", &sliding_cfg.fingerprint())
                .input("dataset", data)?
                .output("report", out)?
                .write(&manifest_path(out))?;
            println!(
                "{} runs ({} skipped) at FPR {}",
                report.runs.len(),
                report.skipped.len(),
                settings.sliding.fpr_budget
            );
            if let Some(ci) = report.tpr {
                println!("mean TPR {:.3} (95% CI {:.3}..{:.3})", ci.mean, ci.lower, ci.upper);
            }
        }
        Command::Run { data, out } => {
            let ds = load_dataset(data)?;
            let outcome = pipeline::run_pipeline(&ds, cfg)?;
            pipeline::write_artifacts(&outcome, cfg, data, out)?;
            println!(
                "n = {} days, {} basic attributes",
                outcome.train.n,
                outcome.train.basic_attributes.len()
            );
            print_report(&outcome.test.report);
        }
    }
    Ok(())
}

fn print_report(r: &eval::EvalReport) {
    println!(
        "TPR {:.3} ({}/{}) at FPR {:.4} (budget {}), threshold {:.6}",
        r.tpr, r.true_positives, r.failed_disks, r.fpr, r.fpr_budget, r.threshold
    );
    for t in &r.per_type {
        println!("  {}: {}/{}", t.failure_type.as_str(), t.detected, t.failed_disks);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_parses_typed_values() {
        let mut t = toml::Table::new();
        apply_set(&mut t, "pipeline.train.n_trees=5").unwrap();
        apply_set(&mut t, "pipeline.fill_method=linear").unwrap();
        apply_set(&mut t, "pipeline.observation_window=false").unwrap();
        let s: Settings = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(s.pipeline.train.n_trees, 5);
        assert_eq!(s.pipeline.fill_method, FillMethod::Linear);
        assert!(!s.pipeline.observation_window);
    }

    #[test]
    fn set_rejects_missing_equals() {
        assert!(apply_set(&mut toml::Table::new(), "pipeline.seed").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t: toml::Table = "[pipeline]\nbogus = 1\n".parse().unwrap();
        assert!(toml::Value::Table(t).try_into::<Settings>().is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(
            &path,
            "seed = 3\n[pipeline]\ntop_k = 2\n[pipeline.train]\nn_trees = 9\n",
        )
        .unwrap();
        let cli = Cli::parse_from([
            "diskprep",
            "--config",
            path.to_str().unwrap(),
            "--n-trees",
            "4",
            "--seed",
            "11",
            "train",
            "--data",
            "d",
            "--out",
            "o",
        ]);
        let s = load_settings(&cli).unwrap();
        assert_eq!(s.pipeline.top_k, 2);
        assert_eq!(s.pipeline.train.n_trees, 4);
        assert_eq!(s.pipeline.seed, 11);
        assert_eq!(s.synth.seed, 11);
    }
}
