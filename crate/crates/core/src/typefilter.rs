//! Failure-type filtering.
//!
//! Attributes are ranked by the absolute Spearman correlation between each
//! disk's last observed value and whether the disk failed. For the top
//! attributes, a two-sample KS test compares each failure type's failed
//! disks against healthy disks; a type with at least two rejections is
//! predictable, and only predictable failures are kept as positives.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DiskSeries, FailureType, TicketEvent};
use crate::error::{Error, Result};
use crate::{exec, hashing, numstats};

pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_HEALTHY_CAP: usize = 20_000;
pub const KS_ALPHA: f64 = 0.05;
/// Attributes missing on more than this fraction of disks are not ranked.
const MAX_MISSING_FRACTION: f64 = 0.5;
const MIN_TICKS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAttribute {
    pub attribute: String,
    pub srcc: f64,
}

fn last_value(disk: &DiskSeries, attr: usize) -> Option<f64> {
    disk.samples.last().and_then(|s| s.values[attr])
}

fn disks<'a>(dataset: &'a Dataset, model: Option<&'a str>) -> Vec<&'a DiskSeries> {
    dataset
        .disks
        .values()
        .filter(|d| model.is_none_or(|m| d.model == m))
        .collect()
}

/// Every rankable attribute with its SRCC, sorted by `|srcc|` descending
/// and attribute name ascending.
pub fn rank_attributes(dataset: &Dataset, model: Option<&str>) -> Result<Vec<RankedAttribute>> {
    let disks = disks(dataset, model);
    if disks.len() < 2 {
        return Err(Error::InvalidInput("need at least two disks to rank attributes".into()));
    }
    let failed: Vec<f64> = disks
        .iter()
        .map(|d| f64::from(u8::from(dataset.ticket(&d.serial).is_some())))
        .collect();
    if !failed.contains(&1.0) {
        return Err(Error::InvalidInput("no failed disks to correlate against".into()));
    }
    let attrs: Vec<usize> = (0..dataset.attributes.len()).collect();
    let scored = exec::map(&attrs, |&a| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = disks
            .iter()
            .zip(&failed)
            .filter_map(|(d, y)| last_value(d, a).map(|x| (x, *y)))
            .unzip();
        let missing = 1.0 - xs.len() as f64 / disks.len() as f64;
        if missing > MAX_MISSING_FRACTION {
            return None;
        }
        let srcc = numstats::spearman(&xs, &ys).unwrap_or(0.0);
        Some(RankedAttribute {
            attribute: dataset.attributes[a].clone(),
            srcc,
        })
    });
    let mut ranked: Vec<RankedAttribute> = scored.into_iter().flatten().collect();
    ranked.sort_by(|a, b| {
        b.srcc
            .abs()
            .total_cmp(&a.srcc.abs())
            .then_with(|| a.attribute.cmp(&b.attribute))
    });
    Ok(ranked)
}

/// The `k` attributes most correlated with failure.
pub fn top_correlated_attributes(dataset: &Dataset, model: Option<&str>, k: usize) -> Result<Vec<RankedAttribute>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut ranked = rank_attributes(dataset, model)?;
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityRow {
    pub failure_type: FailureType,
    pub failed_disks: usize,
    pub ticks: Vec<bool>,
    pub ks_statistics: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityTable {
    pub attributes: Vec<String>,
    pub rows: Vec<PredictabilityRow>,
    pub predictable_types: BTreeSet<FailureType>,
}

impl PredictabilityTable {
    pub fn row(&self, t: FailureType) -> Option<&PredictabilityRow> {
        self.rows.iter().find(|r| r.failure_type == t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsConfig {
    pub alpha: f64,
    pub healthy_cap: usize,
    pub seed: u64,
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig {
            alpha: KS_ALPHA,
            healthy_cap: DEFAULT_HEALTHY_CAP,
            seed: 0,
        }
    }
}

pub fn predictability_table(
    dataset: &Dataset,
    model: Option<&str>,
    attrs: &[String],
    cfg: KsConfig,
) -> Result<PredictabilityTable> {
    if attrs.is_empty() {
        return Err(Error::InvalidInput("no attributes for the predictability table".into()));
    }
    let idx = dataset.attr_indices(attrs)?;
    let disks = disks(dataset, model);
    let mut healthy: Vec<&DiskSeries> = disks
        .iter()
        .copied()
        .filter(|d| dataset.ticket(&d.serial).is_none())
        .collect();
    if healthy.is_empty() {
        return Err(Error::InvalidInput("no healthy disks to compare against".into()));
    }
    if healthy.len() > cfg.healthy_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(hashing::mix_seed(cfg.seed, 0x6b73));
        let mut picked = rand::seq::index::sample(&mut rng, healthy.len(), cfg.healthy_cap).into_vec();
        picked.sort_unstable();
        healthy = picked.into_iter().map(|i| healthy[i]).collect();
    }
    let mut by_type: BTreeMap<FailureType, Vec<&DiskSeries>> = BTreeMap::new();
    for d in &disks {
        if let Some(t) = dataset.ticket(&d.serial) {
            by_type.entry(t.failure_type).or_default().push(d);
        }
    }
    let values =
        |group: &[&DiskSeries], a: usize| -> Vec<f64> { group.iter().filter_map(|d| last_value(d, a)).collect() };
    let healthy_values: Vec<Vec<f64>> = idx.iter().map(|&a| values(&healthy, a)).collect();

    let cells: Vec<(FailureType, usize)> = by_type
        .keys()
        .flat_map(|t| (0..idx.len()).map(move |j| (*t, j)))
        .collect();
    let results = exec::map(&cells, |&(t, j)| {
        let failed = values(&by_type[&t], idx[j]);
        numstats::ks_two_sample(&failed, &healthy_values[j], cfg.alpha).ok()
    });

    let mut rows = Vec::new();
    let mut predictable_types = BTreeSet::new();
    for (i, (t, group)) in by_type.iter().enumerate() {
        let cell = &results[i * idx.len()..(i + 1) * idx.len()];
        let ticks: Vec<bool> = cell.iter().map(|r| r.as_ref().is_some_and(|r| r.reject)).collect();
        if ticks.iter().filter(|x| **x).count() >= MIN_TICKS {
            predictable_types.insert(*t);
        }
        rows.push(PredictabilityRow {
            failure_type: *t,
            failed_disks: group.len(),
            ticks,
            ks_statistics: cell.iter().map(|r| r.as_ref().map(|r| r.statistic)).collect(),
        });
    }
    Ok(PredictabilityTable {
        attributes: attrs.to_vec(),
        rows,
        predictable_types,
    })
}

/// Keeps tickets of predictable types. With no predictable type at all,
/// every ticket is kept and a warning is logged.
pub fn filter_positives<'a>(
    tickets: impl IntoIterator<Item = &'a TicketEvent>,
    table: &PredictabilityTable,
) -> Vec<TicketEvent> {
    let tickets = tickets.into_iter();
    if table.predictable_types.is_empty() {
        log::warn!("no predictable failure type; keeping all failures as positives");
        return tickets.cloned().collect();
    }
    tickets
        .filter(|t| table.predictable_types.contains(&t.failure_type))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_epoch, SmartSample};

    /// `a` tracks failure, `b` alternates, `c` is constant.
    fn fleet() -> Dataset {
        let mut disks = Vec::new();
        let mut tickets = Vec::new();
        for i in 0..40 {
            let failed = i % 4 == 0;
            let a = if failed { 100.0 + i as f64 } else { i as f64 };
            let b = (i % 2) as f64;
            let s = vec![SmartSample::new(9, vec![Some(a), Some(b), Some(7.0)])];
            disks.push(DiskSeries::new(format!("d{i:02}"), "M", "V", s).unwrap());
            if failed {
                let t = if i % 8 == 0 {
                    FailureType::DataCorruption
                } else {
                    FailureType::IoRequestError
                };
                tickets.push(TicketEvent::new(format!("d{i:02}"), 9, t));
            }
        }
        Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            disks,
            tickets,
            default_epoch(),
            10,
        )
        .unwrap()
    }

    #[test]
    fn ranking_prefers_signal_and_zeroes_constants() {
        let r = rank_attributes(&fleet(), None).unwrap();
        assert_eq!(r[0].attribute, "a");
        let c = r.iter().find(|x| x.attribute == "c").unwrap();
        assert_eq!(c.srcc, 0.0);
        let top = top_correlated_attributes(&fleet(), Some("M"), 2).unwrap();
        assert_eq!(top.len(), 2);
    }

    #[test]
    fn ties_break_by_name() {
        let r = rank_attributes(&fleet(), None).unwrap();
        // b: alternating parity; every failed disk is even → b = 0 on failures
        assert!(r[1].srcc.abs() > 0.0);
        assert_eq!(r[1].attribute, "b");
        assert_eq!(r[2].attribute, "c");
    }

    #[test]
    fn needs_failures() {
        let ds = fleet().with_tickets(vec![]).unwrap();
        assert!(rank_attributes(&ds, None).is_err());
    }

    #[test]
    fn shifted_types_are_predictable() {
        let ds = fleet();
        let t = predictability_table(&ds, None, &["a".into(), "b".into(), "c".into()], KsConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        // a and b both reject for every type; c never does
        for row in &t.rows {
            assert_eq!(row.ticks, vec![true, true, false], "{:?}", row.failure_type);
        }
        assert_eq!(t.predictable_types.len(), 2);
        assert!(t.row(FailureType::DiskNotFound).is_none());
    }

    #[test]
    fn filter_keeps_predictable() {
        let ds = fleet();
        let table = PredictabilityTable {
            attributes: vec!["a".into()],
            rows: vec![],
            predictable_types: BTreeSet::from([FailureType::DataCorruption]),
        };
        let kept = filter_positives(ds.tickets.values(), &table);
        assert!(kept.iter().all(|t| t.failure_type == FailureType::DataCorruption));
        assert_eq!(kept.len(), 5);
        let again = filter_positives(&kept, &table);
        assert_eq!(again, kept);
        let empty = PredictabilityTable {
            predictable_types: BTreeSet::new(),
            ..table
        };
        assert_eq!(filter_positives(ds.tickets.values(), &empty).len(), 10);
    }
}
