//! Fleet measurements: annualized failure rates, data-missing ratios and
//! the gap between a failed disk's last sample and its ticket.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Day, DiskSeries};
use crate::error::{Error, Result};

/// `failed / total` scaled from `span_days` to one year.
pub fn annualized_failure_rate(failed: usize, total: usize, span_days: i64) -> f64 {
    failed as f64 / total as f64 * (365.0 / span_days as f64)
}

pub fn afr(dataset: &Dataset, model: &str) -> Result<f64> {
    if dataset.span_days <= 0 {
        return Err(Error::InvalidInput("dataset span must be positive".into()));
    }
    let (total, failed) = counts(dataset, model);
    if total == 0 {
        return Err(Error::InvalidInput(format!("no disks of model `{model}`")));
    }
    Ok(annualized_failure_rate(failed, total, dataset.span_days))
}

fn counts(dataset: &Dataset, model: &str) -> (usize, usize) {
    dataset.disks_of_model(model).fold((0, 0), |(t, f), d| {
        (t + 1, f + usize::from(dataset.ticket(&d.serial).is_some()))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub vendor: String,
    pub disks: usize,
    pub failed: usize,
    pub afr: f64,
}

pub fn model_summaries(dataset: &Dataset) -> Vec<ModelSummary> {
    dataset
        .models()
        .into_iter()
        .map(|m| {
            let (disks, failed) = counts(dataset, m);
            let vendor = dataset
                .disks_of_model(m)
                .next()
                .map(|d| d.vendor.clone())
                .unwrap_or_default();
            ModelSummary {
                model: m.to_string(),
                vendor,
                disks,
                failed,
                afr: if dataset.span_days > 0 {
                    annualized_failure_rate(failed, disks, dataset.span_days)
                } else {
                    0.0
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingStats {
    pub dmr_failed: f64,
    pub dmr_healthy: f64,
    /// Fractions of data-missing failed disks (last sample before the
    /// ticket day) with a gap of at least 10 and 25 days.
    pub pct_gap_ge_10: f64,
    pub pct_gap_ge_25: f64,
    pub gap_histogram: BTreeMap<i64, usize>,
    pub failed_disks: usize,
    pub healthy_disks: usize,
    pub data_missing_failed_disks: usize,
    pub empty_failed_cohort: bool,
    pub empty_healthy_cohort: bool,
}

impl MissingStats {
    /// `(gap, fraction of data-missing failed disks with gap >= gap)`.
    pub fn gap_ccdf(&self) -> Vec<(i64, f64)> {
        let total = self.data_missing_failed_disks as f64;
        let mut remaining = self.data_missing_failed_disks;
        let mut out = Vec::with_capacity(self.gap_histogram.len());
        for (&gap, &count) in &self.gap_histogram {
            out.push((gap, remaining as f64 / total));
            remaining -= count;
        }
        out
    }
}

/// Days in `[start, end]` on which the disk has no sample with any value.
fn missing_in(disk: &DiskSeries, start: Day, end: Day) -> usize {
    let present = disk
        .samples
        .iter()
        .filter(|s| s.day >= start && s.day <= end && s.values.iter().any(Option::is_some))
        .count();
    (end - start + 1) as usize - present
}

/// Missing-data measurements for one model. Failed disks are expected on
/// every day from their first sample through the ticket day; healthy disks
/// present on day 0 are expected on every day of the span.
pub fn missing_stats(dataset: &Dataset, model: &str) -> MissingStats {
    let (mut f_missing, mut f_expected, mut f_disks) = (0usize, 0usize, 0usize);
    let (mut h_missing, mut h_expected, mut h_disks) = (0usize, 0usize, 0usize);
    let mut gaps = BTreeMap::new();
    for disk in dataset.disks_of_model(model) {
        match dataset.ticket(&disk.serial) {
            Some(t) => {
                let start = disk.first_day();
                f_disks += 1;
                f_missing += missing_in(disk, start, t.day);
                f_expected += (t.day - start + 1) as usize;
                let last = disk
                    .samples
                    .iter()
                    .rev()
                    .find(|s| s.values.iter().any(Option::is_some))
                    .map_or(start - 1, |s| s.day);
                if last < t.day {
                    *gaps.entry(t.day - last).or_insert(0) += 1;
                }
            }
            None if disk.first_day() == 0 && dataset.span_days > 0 => {
                h_disks += 1;
                h_missing += missing_in(disk, 0, dataset.span_days - 1);
                h_expected += dataset.span_days as usize;
            }
            None => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let n_gap: usize = gaps.values().sum();
    let at_least = |g: i64| gaps.range(g..).map(|(_, c)| c).sum::<usize>();
    MissingStats {
        dmr_failed: ratio(f_missing, f_expected),
        dmr_healthy: ratio(h_missing, h_expected),
        pct_gap_ge_10: ratio(at_least(10), n_gap),
        pct_gap_ge_25: ratio(at_least(25), n_gap),
        gap_histogram: gaps,
        failed_disks: f_disks,
        healthy_disks: h_disks,
        data_missing_failed_disks: n_gap,
        empty_failed_cohort: f_disks == 0,
        empty_healthy_cohort: h_disks == 0,
    }
}
