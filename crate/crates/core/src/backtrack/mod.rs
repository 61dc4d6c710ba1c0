//! Pre-failure period detection and training-sample labeling.
//!
//! For every failed disk the detector looks at a fixed window of days
//! ending at the failure, finds the earliest significant change in each
//! attribute and records how many days before the failure it happened.
//! The backtracking window `n` is the largest per-attribute 75th
//! percentile of those distances. Labeling then marks the `n` days before
//! each failure (and the failure day) positive and, with the observation
//! window enabled, drops the last `n` samples of healthy disks.

pub mod bocpd;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use bocpd::change_probabilities;

use crate::data::{Dataset, Day};
use crate::error::{Error, Result};
use crate::{exec, numstats};

pub const DEFAULT_DETECTION_WINDOW: usize = 60;
pub const DEFAULT_Z_THRESHOLD: f64 = 2.5;
const P75: f64 = 0.75;

/// Earliest position whose z-scored probability exceeds `z_threshold` in
/// absolute value.
pub fn significant_change_day(probs: &[f64], z_threshold: f64) -> Option<usize> {
    let z = numstats::zscores(probs);
    if z.degenerate {
        return None;
    }
    z.values.iter().position(|v| v.abs() > z_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefailurePeriod {
    pub n_days: usize,
    /// Attributes with at least one detected change.
    pub per_attribute_p75: BTreeMap<String, usize>,
    /// Number of failed disks with a detected change, per attribute.
    pub detections: BTreeMap<String, usize>,
    pub detection_window: usize,
    pub z_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub detection_window: usize,
    pub z_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            detection_window: DEFAULT_DETECTION_WINDOW,
            z_threshold: DEFAULT_Z_THRESHOLD,
        }
    }
}

/// Days between the earliest significant change and the failure day, for
/// one disk and one attribute. `None` if the window holds fewer than two
/// values or no change stands out.
pub fn days_before_failure(
    dataset: &Dataset,
    serial: &str,
    attr: usize,
    failure_day: Day,
    cfg: DetectionConfig,
) -> Option<usize> {
    let disk = dataset.disks.get(serial)?;
    let start = failure_day - cfg.detection_window as Day + 1;
    let (days, values): (Vec<Day>, Vec<f64>) = disk
        .samples
        .iter()
        .filter(|s| s.day >= start && s.day <= failure_day)
        .filter_map(|s| s.values[attr].map(|v| (s.day, v)))
        .unzip();
    if values.len() < 2 {
        return None;
    }
    let probs = change_probabilities(&values);
    let pos = significant_change_day(&probs, cfg.z_threshold)?;
    Some((failure_day - days[pos]) as usize)
}

/// Chooses the backtracking window from the failed disks in `positives`
/// (serial → failure day) over the attributes `attrs`. Only disks of
/// `model` are considered when it is given.
pub fn prefailure_period(
    dataset: &Dataset,
    model: Option<&str>,
    positives: &BTreeMap<String, Day>,
    attrs: &[String],
    cfg: DetectionConfig,
) -> Result<PrefailurePeriod> {
    if cfg.detection_window < 2 {
        return Err(Error::Config("detection window must be at least 2 days".into()));
    }
    let idx = dataset.attr_indices(attrs)?;
    let disks: Vec<(&String, Day)> = positives
        .iter()
        .filter(|(s, _)| {
            dataset
                .disks
                .get(*s)
                .is_some_and(|d| model.is_none_or(|m| d.model == m))
        })
        .map(|(s, d)| (s, *d))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..idx.len())
        .flat_map(|a| (0..disks.len()).map(move |d| (a, d)))
        .collect();
    let found = exec::map(&jobs, |&(a, d)| {
        days_before_failure(dataset, disks[d].0, idx[a], disks[d].1, cfg)
    });

    let mut per_attribute_p75 = BTreeMap::new();
    let mut detections = BTreeMap::new();
    for (a, name) in attrs.iter().enumerate() {
        let gaps: Vec<f64> = jobs
            .iter()
            .zip(&found)
            .filter(|((ja, _), _)| *ja == a)
            .filter_map(|(_, g)| g.map(|g| g as f64))
            .collect();
        if gaps.is_empty() {
            continue;
        }
        detections.insert(name.clone(), gaps.len());
        per_attribute_p75.insert(name.clone(), numstats::percentile(&gaps, P75)? as usize);
    }
    let n_days = per_attribute_p75
        .values()
        .copied()
        .max()
        .ok_or(Error::NoChangeDetected)?;
    Ok(PrefailurePeriod {
        n_days,
        per_attribute_p75,
        detections,
        detection_window: cfg.detection_window,
        z_threshold: cfg.z_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiskPlan {
    /// Positive on `[positive_start, failure_day]`, negative before.
    Failed { failure_day: Day, positive_start: Day },
    /// Dropped on `[start, end]` when present, negative elsewhere.
    Healthy {
        dropped: Option<(Day, Day)>,
        /// Latest training-phase sample outside the dropped span.
        last_negative: Option<Day>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPlan {
    pub n: usize,
    pub observation_window: bool,
    pub train_end_day: Day,
    pub disks: BTreeMap<String, DiskPlan>,
    /// Disks that failed in the training phase but whose tickets were
    /// filtered out. They carry no labels at all.
    pub excluded: BTreeSet<String>,
}

impl LabelPlan {
    /// Label of a sample; `None` for days after the training end or disks
    /// not in the plan.
    pub fn label(&self, serial: &str, day: Day) -> Option<Label> {
        if day > self.train_end_day {
            return None;
        }
        match self.disks.get(serial)? {
            DiskPlan::Failed {
                failure_day,
                positive_start,
            } => {
                if day > *failure_day {
                    None
                } else if day >= *positive_start {
                    Some(Label::Positive)
                } else {
                    Some(Label::Negative)
                }
            }
            DiskPlan::Healthy { dropped, .. } => match dropped {
                Some((a, b)) if day >= *a && day <= *b => Some(Label::Dropped),
                _ => Some(Label::Negative),
            },
        }
    }

    pub fn failed_disks(&self) -> impl Iterator<Item = (&String, Day)> {
        self.disks.iter().filter_map(|(s, p)| match p {
            DiskPlan::Failed { failure_day, .. } => Some((s, *failure_day)),
            DiskPlan::Healthy { .. } => None,
        })
    }

    pub fn healthy_disks(&self) -> impl Iterator<Item = (&String, Option<Day>)> {
        self.disks.iter().filter_map(|(s, p)| match p {
            DiskPlan::Healthy { last_negative, .. } => Some((s, *last_negative)),
            DiskPlan::Failed { .. } => None,
        })
    }
}

/// Builds the label plan. `positives` maps serial → failure day for the
/// failed disks kept by type filtering; tickets in the dataset on or before
/// `train_end_day` that are not in `positives` mark excluded disks.
pub fn label_samples(
    dataset: &Dataset,
    positives: &BTreeMap<String, Day>,
    n: usize,
    observation_window: bool,
    train_end_day: Day,
) -> LabelPlan {
    let mut disks = BTreeMap::new();
    let mut excluded = BTreeSet::new();
    for (serial, disk) in &dataset.disks {
        let ticket_day = dataset.ticket(serial).map(|t| t.day);
        let failed_in_train = ticket_day.filter(|d| *d <= train_end_day);
        match (failed_in_train, positives.get(serial)) {
            (Some(_), None) => {
                excluded.insert(serial.clone());
            }
            (_, Some(&failure_day)) if failure_day <= train_end_day => {
                let positive_start = (failure_day - n as Day).max(disk.first_day());
                disks.insert(
                    serial.clone(),
                    DiskPlan::Failed {
                        failure_day,
                        positive_start,
                    },
                );
            }
            _ => {
                let train_days: Vec<Day> = disk
                    .samples
                    .iter()
                    .map(|s| s.day)
                    .take_while(|d| *d <= train_end_day)
                    .collect();
                let dropped = (observation_window && n > 0 && !train_days.is_empty()).then(|| {
                    let from = train_days.len().saturating_sub(n);
                    (train_days[from], *train_days.last().expect("non-empty"))
                });
                let last_negative = match dropped {
                    Some((a, _)) => train_days.iter().rev().find(|d| **d < a).copied(),
                    None => train_days.last().copied(),
                };
                disks.insert(serial.clone(), DiskPlan::Healthy { dropped, last_negative });
            }
        }
    }
    LabelPlan {
        n,
        observation_window,
        train_end_day,
        disks,
        excluded,
    }
}
