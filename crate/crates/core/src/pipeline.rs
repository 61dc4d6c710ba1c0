//! End-to-end runs: fill, type filtering, backtracking, featurization,
//! training and disk-level evaluation on one train/test split or on
//! sliding monthly windows, plus stage manifests for on-disk artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtrack::{self, DetectionConfig, LabelPlan, PrefailurePeriod};
use crate::data::{Dataset, Day};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, MeanCi, RunDescriptor, Truth, MONTH_DAYS};
use crate::features::{self, FeatureMatrix};
use crate::filling::{self, FillExtent, FillMethod, FillReport};
use crate::model::{self, TrainConfig, TrainedModel};
use crate::typefilter::{self, KsConfig, PredictabilityTable, RankedAttribute};
use crate::{exec, hashing};

/// Days of history before the test phase used to fill and featurize
/// test disks, so trailing windows are complete on the first test day.
pub const TEST_HISTORY_DAYS: Day = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// `train_months` of 30 days from day 0, then `test_months`.
    Months { train_months: usize, test_months: usize },
    /// Half-open day ranges.
    Days {
        train_start: Day,
        train_end: Day,
        test_start: Day,
        test_end: Day,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Months {
            train_months: 10,
            test_months: 1,
        }
    }
}

impl SplitSpec {
    pub fn windows(&self) -> (Day, Day, Day, Day) {
        match *self {
            SplitSpec::Months {
                train_months,
                test_months,
            } => {
                let tr = train_months as Day * MONTH_DAYS;
                (0, tr, tr, tr + test_months as Day * MONTH_DAYS)
            }
            SplitSpec::Days {
                train_start,
                train_end,
                test_start,
                test_end,
            } => (train_start, train_end, test_start, test_end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model_filter: Option<String>,
    pub failure_type_filtering: bool,
    pub observation_window: bool,
    pub fill_method: FillMethod,
    pub max_gap: usize,
    pub top_k: usize,
    pub detection_window: usize,
    pub z_threshold: f64,
    /// Fixed backtracking window; detected automatically when unset.
    pub n_days: Option<usize>,
    pub split: SplitSpec,
    pub fpr_budget: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model_filter: None,
            failure_type_filtering: true,
            observation_window: true,
            fill_method: FillMethod::Spline,
            max_gap: filling::DEFAULT_MAX_GAP,
            top_k: typefilter::DEFAULT_TOP_K,
            detection_window: backtrack::DEFAULT_DETECTION_WINDOW,
            z_threshold: backtrack::DEFAULT_Z_THRESHOLD,
            n_days: None,
            split: SplitSpec::default(),
            fpr_budget: eval::DEFAULT_FPR,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Spline fill with no type filtering, no observation window and a
    /// zero-day backtracking window.
    pub fn baseline() -> Self {
        PipelineConfig {
            failure_type_filtering: false,
            observation_window: false,
            n_days: Some(0),
            ..PipelineConfig::default()
        }
    }

    pub fn fingerprint(&self) -> String {
        hashing::sha256_hex(serde_json::to_string(self).expect("serializable").as_bytes())
    }

    fn detection(&self) -> DetectionConfig {
        DetectionConfig {
            detection_window: self.detection_window,
            z_threshold: self.z_threshold,
        }
    }

    /// Training config with the pipeline seed threaded through.
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: hashing::mix_seed(self.seed, self.train.seed),
            ..self.train.clone()
        }
    }
}

/// Everything one split produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub train: TrainOutcome,
    pub test: TestOutcome,
}

fn restrict_model(dataset: &Dataset, cfg: &PipelineConfig) -> Result<Dataset> {
    match &cfg.model_filter {
        Some(m) if !dataset.has_model(m) => Err(Error::InvalidInput(format!("no disks of model `{m}`"))),
        Some(m) => Ok(dataset.of_model(m)),
        None => Ok(dataset.clone()),
    }
}

/// Fills the training window; failed disks are extended to their ticket.
pub fn fill_stage(dataset: &Dataset, cfg: &PipelineConfig) -> Result<(Dataset, FillReport)> {
    filling::fill_dataset_with(
        dataset,
        cfg.fill_method,
        cfg.max_gap,
        FillExtent { to_ticket_day: true },
    )
}

pub struct TypeFilterOutcome {
    pub ranking: Vec<RankedAttribute>,
    pub table: Option<PredictabilityTable>,
    pub positives: BTreeMap<String, Day>,
}

/// Ranks attributes and, when enabled and types are known, filters the
/// positives down to predictable failure types.
pub fn typefilter_stage(filled: &Dataset, cfg: &PipelineConfig) -> Result<TypeFilterOutcome> {
    let ranking = typefilter::top_correlated_attributes(filled, None, cfg.top_k)?;
    let all: BTreeMap<String, Day> = filled.tickets.values().map(|t| (t.serial.clone(), t.day)).collect();
    if !(cfg.failure_type_filtering && filled.has_failure_types()) {
        return Ok(TypeFilterOutcome {
            ranking,
            table: None,
            positives: all,
        });
    }
    let attrs: Vec<String> = ranking.iter().map(|r| r.attribute.clone()).collect();
    let ks = KsConfig {
        seed: cfg.seed,
        ..KsConfig::default()
    };
    let table = typefilter::predictability_table(filled, None, &attrs, ks)?;
    let positives = typefilter::filter_positives(filled.tickets.values(), &table)
        .into_iter()
        .map(|t| (t.serial, t.day))
        .collect();
    Ok(TypeFilterOutcome {
        ranking,
        table: Some(table),
        positives,
    })
}

/// Backtracking window: the override when set, else detected.
pub fn backtrack_stage(
    filled: &Dataset,
    positives: &BTreeMap<String, Day>,
    ranking: &[RankedAttribute],
    cfg: &PipelineConfig,
) -> Result<(usize, Option<PrefailurePeriod>)> {
    if let Some(n) = cfg.n_days {
        return Ok((n, None));
    }
    let attrs: Vec<String> = ranking.iter().map(|r| r.attribute.clone()).collect();
    let p = backtrack::prefailure_period(filled, None, positives, &attrs, cfg.detection())?;
    Ok((p.n_days, Some(p)))
}

/// Filled view of the test phase with some history before it. Disks that
/// failed before the test phase are left out; failed disks are not
/// extended past their last sample.
fn test_view(dataset: &Dataset, cfg: &PipelineConfig, start: Day, end: Day) -> Result<Dataset> {
    let mut view = dataset.window(start - TEST_HISTORY_DAYS, end);
    let gone: Vec<String> = view
        .tickets
        .values()
        .filter(|t| t.day < start)
        .map(|t| t.serial.clone())
        .collect();
    for s in gone {
        view.disks.remove(&s);
        view.tickets.remove(&s);
    }
    let (filled, _) =
        filling::fill_dataset_with(&view, cfg.fill_method, usize::MAX, FillExtent { to_ticket_day: false })?;
    Ok(filled)
}

/// Scores the test phase `[start, end)`: every disk with a sample in the
/// phase or a ticket in it.
fn score_test(
    dataset: &Dataset,
    model: &TrainedModel,
    basic: &[String],
    cfg: &PipelineConfig,
    start: Day,
    end: Day,
) -> Result<(BTreeMap<String, f64>, BTreeMap<String, Truth>)> {
    let view = test_view(dataset, cfg, start, end)?;
    let idx = view.attr_indices(basic)?;
    let mut rows: BTreeMap<String, Vec<Day>> = BTreeMap::new();
    for (serial, disk) in &view.disks {
        let complete = |s: &crate::SmartSample| idx.iter().all(|&a| s.values[a].is_some());
        if !disk.samples.iter().all(complete) {
            log::warn!("test disk {serial} has unfillable attributes; not scored");
            continue;
        }
        let days: Vec<Day> = disk
            .samples
            .iter()
            .map(|s| s.day)
            .filter(|d| *d >= start && *d < end)
            .collect();
        if !days.is_empty() {
            rows.insert(serial.clone(), days);
        }
    }
    let matrix = features::featurize(&view, basic, &rows)?;
    let scores = model::predict_scores(model, &matrix)?;
    let per_disk = eval::disk_scores(&matrix.keys, &scores);

    let mut truth: BTreeMap<String, Truth> = rows.keys().map(|s| (s.clone(), None)).collect();
    for t in dataset.tickets.values() {
        if t.day >= start && t.day < end {
            truth.insert(t.serial.clone(), Some(t.failure_type));
        } else if t.day < start {
            truth.remove(&t.serial);
        }
    }
    Ok((per_disk, truth))
}

/// Everything the training phase of a split produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub fill_report: FillReport,
    pub filled_train: Dataset,
    pub ranking: Vec<RankedAttribute>,
    pub table: Option<PredictabilityTable>,
    pub positives: BTreeMap<String, Day>,
    pub prefailure: Option<PrefailurePeriod>,
    pub n: usize,
    pub plan: LabelPlan,
    pub basic_attributes: Vec<String>,
    pub training: FeatureMatrix,
    pub model: TrainedModel,
}

/// Fill, type filtering, backtracking, featurization and training on the
/// half-open window `[train_start, train_end)`.
pub fn train_split(dataset: &Dataset, cfg: &PipelineConfig, train_start: Day, train_end: Day) -> Result<TrainOutcome> {
    if train_end <= train_start {
        return Err(Error::Config(format!(
            "empty training window {train_start}..{train_end}"
        )));
    }
    let dataset = restrict_model(dataset, cfg)?;
    let train_view = dataset.window(train_start, train_end);
    let (filled_train, fill_report) = fill_stage(&train_view, cfg).map_err(|e| e.in_stage("fill"))?;
    let tf = typefilter_stage(&filled_train, cfg).map_err(|e| e.in_stage("typefilter"))?;
    let (n, prefailure) =
        backtrack_stage(&filled_train, &tf.positives, &tf.ranking, cfg).map_err(|e| e.in_stage("backtrack"))?;
    let plan = backtrack::label_samples(&filled_train, &tf.positives, n, cfg.observation_window, train_end - 1);

    let train_cfg = cfg.train_config();
    let basic = features::common_attributes(&filled_train);
    let training = (|| {
        let rows = model::select_training_rows(&plan, &filled_train, train_cfg.sampling_policy, cfg.seed)?;
        let mut by_disk: BTreeMap<String, Vec<Day>> = BTreeMap::new();
        for (s, d, _) in &rows {
            by_disk.entry(s.clone()).or_default().push(*d);
        }
        let mut m = features::featurize(&filled_train, &basic, &by_disk)?;
        m.labels = Some(rows.iter().map(|r| r.2).collect());
        Ok(m)
    })()
    .map_err(|e: Error| e.in_stage("featurize"))?;
    let labels = training.labels.clone().unwrap_or_default();
    let trained = model::train(&training, &labels, &train_cfg).map_err(|e| e.in_stage("train"))?;
    Ok(TrainOutcome {
        fill_report,
        filled_train,
        ranking: tf.ranking,
        table: tf.table,
        positives: tf.positives,
        prefailure,
        n,
        plan,
        basic_attributes: basic,
        training,
        model: trained,
    })
}

#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub scores: BTreeMap<String, f64>,
    pub truth: BTreeMap<String, Truth>,
    pub report: EvalReport,
}

/// Scores `[test_start, test_end)` with a trained model over the `basic`
/// attributes it was trained on.
pub fn evaluate_split(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    model: &TrainedModel,
    basic: &[String],
    windows: (Day, Day, Day, Day),
) -> Result<TestOutcome> {
    let (_, _, test_start, test_end) = windows;
    if test_end <= test_start {
        return Err(Error::Config(format!("empty test window {test_start}..{test_end}")));
    }
    let dataset = restrict_model(dataset, cfg)?;
    let (scores, truth) =
        score_test(&dataset, model, basic, cfg, test_start, test_end).map_err(|e| e.in_stage("evaluate"))?;
    let mut report = eval::tpr_at_fpr(&scores, &truth, cfg.fpr_budget).map_err(|e| e.in_stage("evaluate"))?;
    let (train_start, train_end, ..) = windows;
    report.run = Some(RunDescriptor {
        train_start,
        train_end,
        test_start,
        test_end,
        config_fingerprint: cfg.fingerprint(),
    });
    Ok(TestOutcome { scores, truth, report })
}

/// Runs every stage on one split.
pub fn run_split(dataset: &Dataset, cfg: &PipelineConfig, windows: (Day, Day, Day, Day)) -> Result<RunOutcome> {
    let (train_start, train_end, test_start, test_end) = windows;
    if train_end <= train_start || test_end <= test_start || test_start < train_end {
        return Err(Error::Config(format!("invalid split {windows:?}")));
    }
    let train = train_split(dataset, cfg, train_start, train_end)?;
    let test = evaluate_split(dataset, cfg, &train.model, &train.basic_attributes, windows)?;
    Ok(RunOutcome { train, test })
}

/// Runs the configured single split.
pub fn run_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<RunOutcome> {
    run_split(dataset, cfg, cfg.split.windows())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRun {
    pub run: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingReport {
    pub train_months: usize,
    pub test_months: usize,
    pub runs: Vec<EvalReport>,
    pub skipped: Vec<SkippedRun>,
    pub tpr: Option<MeanCi>,
}

/// One pipeline run per 30-day start month. Runs whose training window
/// yields no usable positives are skipped and recorded.
pub fn sliding_runs(
    dataset: &Dataset,
    train_months: usize,
    test_months: usize,
    cfg: &PipelineConfig,
) -> Result<SlidingReport> {
    if train_months == 0 || test_months == 0 {
        return Err(Error::Config("train and test months must be positive".into()));
    }
    let windows = eval::sliding_windows(dataset.span_days, train_months, test_months);
    if windows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "a {}-day span is shorter than {} months",
            dataset.span_days,
            train_months + test_months
        )));
    }
    let outcomes = exec::map(&windows, |w| run_split(dataset, cfg, *w).map(|o| o.test.report));
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => runs.push(r),
            Err(e) if is_skippable(&e) => skipped.push(SkippedRun {
                run: i,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let tprs: Vec<f64> = runs.iter().map(|r| r.tpr).collect();
    Ok(SlidingReport {
        train_months,
        test_months,
        tpr: eval::mean_ci95(&tprs),
        runs,
        skipped,
    })
}

fn is_skippable(e: &Error) -> bool {
    match e {
        Error::Stage { source, .. } => is_skippable(source),
        Error::NoPositives | Error::SingleClass | Error::NoChangeDetected | Error::Eval(_) => true,
        Error::InvalidInput(msg) => msg.contains("failed disks"),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// SHA-256 of a file, or of a directory's sorted `(relative path, file
/// hash)` listing.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = BTreeSet::new();
        collect_files(path, path, &mut files)?;
        let mut listing = String::new();
        for rel in files {
            let h = hash_path(&path.join(&rel))?;
            listing.push_str(&format!("{rel}\t{h}\n"));
        }
        Ok(hashing::sha256_hex(listing.as_bytes()))
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(hashing::sha256_hex(&bytes))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeSet<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.insert(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

impl Manifest {
    pub fn new(stage: &str, config_fingerprint: &str) -> Self {
        Manifest {
            stage: stage.to_string(),
            config_fingerprint: config_fingerprint.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Result<Self> {
        self.inputs.insert(name.to_string(), hash_path(path)?);
        Ok(self)
    }

    pub fn output(mut self, name: &str, path: &Path) -> Result<Self> {
        self.outputs.insert(name.to_string(), hash_path(path)?);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktrackSummary {
    pub n: usize,
    pub observation_window: bool,
    pub prefailure: Option<PrefailurePeriod>,
    pub positive_disks: usize,
    pub excluded_disks: usize,
}

impl BacktrackSummary {
    pub fn of(t: &TrainOutcome) -> Self {
        BacktrackSummary {
            n: t.n,
            observation_window: t.plan.observation_window,
            prefailure: t.prefailure.clone(),
            positive_disks: t.plan.failed_disks().count(),
            excluded_disks: t.plan.excluded.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeFilterSummary {
    pub ranking: Vec<RankedAttribute>,
    pub table: Option<PredictabilityTable>,
}

/// What `evaluate` needs besides the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub basic_attributes: Vec<String>,
    pub train_start: Day,
    pub train_end: Day,
    pub n: usize,
    pub config_fingerprint: String,
}

pub const MODEL_FILE: &str = "model.bin";
pub const MODEL_META_FILE: &str = "model-meta.json";

/// Writes the training-phase artifacts under `out`, each with a manifest
/// chaining it to the previous stage. `input` is the dataset directory the
/// run read.
pub fn write_train_artifacts(
    t: &TrainOutcome,
    cfg: &PipelineConfig,
    train_window: (Day, Day),
    input: &Path,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let fp = cfg.fingerprint();
    write_json(&out.join("config.json"), cfg)?;

    let filled = out.join("filled");
    t.filled_train.save(&filled)?;
    write_json(&out.join("fill-report.json"), &t.fill_report)?;
    Manifest::new("fill", &fp)
        .input("dataset", input)?
        .output("filled", &filled)?
        .write(&out.join("fill.manifest.json"))?;

    let tf = out.join("typefilter.json");
    write_json(
        &tf,
        &TypeFilterSummary {
            ranking: t.ranking.clone(),
            table: t.table.clone(),
        },
    )?;
    Manifest::new("typefilter", &fp)
        .input("filled", &filled)?
        .output("typefilter", &tf)?
        .write(&out.join("typefilter.manifest.json"))?;

    let bt = out.join("backtrack.json");
    write_json(&bt, &BacktrackSummary::of(t))?;
    Manifest::new("backtrack", &fp)
        .input("filled", &filled)?
        .input("typefilter", &tf)?
        .output("backtrack", &bt)?
        .write(&out.join("backtrack.manifest.json"))?;

    let feats = out.join("training.features");
    t.training.write_binary(&feats)?;
    Manifest::new("featurize", &fp)
        .input("filled", &filled)?
        .input("backtrack", &bt)?
        .output("features", &feats)?
        .write(&out.join("featurize.manifest.json"))?;

    let model_path = out.join(MODEL_FILE);
    t.model.save(&model_path)?;
    let meta = out.join(MODEL_META_FILE);
    write_json(
        &meta,
        &ModelMeta {
            basic_attributes: t.basic_attributes.clone(),
            train_start: train_window.0,
            train_end: train_window.1,
            n: t.n,
            config_fingerprint: fp.clone(),
        },
    )?;
    Manifest::new("train", &fp)
        .input("features", &feats)?
        .output("model", &model_path)?
        .output("meta", &meta)?
        .write(&out.join("train.manifest.json"))?;
    Ok(())
}

/// Writes `report.json` and its manifest under `out`.
pub fn write_eval_artifacts(
    test: &TestOutcome,
    cfg: &PipelineConfig,
    input: &Path,
    model: &Path,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let report = out.join("report.json");
    write_json(&report, &test.report)?;
    Manifest::new("evaluate", &cfg.fingerprint())
        .input("dataset", input)?
        .input("model", model)?
        .output("report", &report)?
        .write(&out.join("evaluate.manifest.json"))
}

/// Writes every stage artifact of a finished run under `out`.
pub fn write_artifacts(outcome: &RunOutcome, cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let (train_start, train_end, ..) = outcome
        .test
        .report
        .run
        .as_ref()
        .map(|r| (r.train_start, r.train_end, r.test_start, r.test_end))
        .unwrap_or_else(|| cfg.split.windows());
    write_train_artifacts(&outcome.train, cfg, (train_start, train_end), input, out)?;
    write_eval_artifacts(&outcome.test, cfg, input, &out.join(MODEL_FILE), out)
}
