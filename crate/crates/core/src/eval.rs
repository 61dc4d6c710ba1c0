//! Disk-level evaluation: true-positive rate at a false-positive budget.
//!
//! A disk's score is the maximum of its per-sample scores in the test
//! phase. The threshold is the smallest observed score that keeps the
//! fraction of healthy disks at or above it within the budget.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Day, FailureType};
use crate::error::{Error, Result};

pub const DEFAULT_FPR: f64 = 0.001;
pub const DEFAULT_SLIDING_FPR: f64 = 0.04;
pub const MONTH_DAYS: Day = 30;

/// Ground truth of a test disk: `None` for healthy, the failure type for
/// a disk whose ticket falls in the test phase.
pub type Truth = Option<FailureType>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeBreakdown {
    pub failure_type: FailureType,
    pub failed_disks: usize,
    pub detected: usize,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub train_start: Day,
    pub train_end: Day,
    pub test_start: Day,
    pub test_end: Day,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tpr: f64,
    pub fpr: f64,
    pub fpr_budget: f64,
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub failed_disks: usize,
    pub healthy_disks: usize,
    pub per_type: Vec<TypeBreakdown>,
    pub run: Option<RunDescriptor>,
}

/// Maximum score per disk over `(serial, day)`-keyed sample scores.
pub fn disk_scores(keys: &[(String, Day)], scores: &[f64]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for ((serial, _), s) in keys.iter().zip(scores) {
        out.entry(serial.clone()).and_modify(|m| *m = m.max(*s)).or_insert(*s);
    }
    out
}

/// Smallest observed score `t` with `#{healthy >= t} <= budget * #healthy`.
/// When no observed score qualifies the threshold sits just above the
/// highest healthy score, so nothing healthy is flagged.
pub fn choose_threshold(healthy: &[f64], all: &[f64], budget: f64) -> f64 {
    let allowed = (budget * healthy.len() as f64 + 1e-9).floor() as usize;
    let mut h = healthy.to_vec();
    h.sort_by(|a, b| b.total_cmp(a));
    if allowed >= h.len() {
        return all.iter().copied().fold(f64::INFINITY, f64::min).min(f64::MAX);
    }
    // every threshold above the (allowed+1)-th highest healthy score complies
    let bar = h[allowed];
    all.iter()
        .copied()
        .filter(|s| *s > bar)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))))
        .unwrap_or_else(|| bar.next_up())
}

/// Evaluates per-disk scores against the truth. Disks in `truths` but
/// missing from `scores` count as never flagged.
pub fn tpr_at_fpr(
    scores: &BTreeMap<String, f64>,
    truths: &BTreeMap<String, Truth>,
    fpr_budget: f64,
) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&fpr_budget) {
        return Err(Error::Config("FPR budget must be in [0, 1]".into()));
    }
    let score = |s: &str| scores.get(s).copied().unwrap_or(f64::NEG_INFINITY);
    let healthy: Vec<f64> = truths
        .iter()
        .filter(|(_, t)| t.is_none())
        .map(|(s, _)| score(s))
        .collect();
    let failed: Vec<(f64, FailureType)> = truths.iter().filter_map(|(s, t)| t.map(|t| (score(s), t))).collect();
    if failed.is_empty() {
        return Err(Error::Eval(
            "no failed disks in the test phase; TPR is undefined".into(),
        ));
    }
    if healthy.is_empty() {
        return Err(Error::Eval("no healthy disks in the test phase".into()));
    }
    let all: Vec<f64> = healthy
        .iter()
        .copied()
        .chain(failed.iter().map(|f| f.0))
        .filter(|s| s.is_finite())
        .collect();
    let threshold = choose_threshold(&healthy, &all, fpr_budget);
    let false_positives = healthy.iter().filter(|s| **s >= threshold).count();
    let true_positives = failed.iter().filter(|f| f.0 >= threshold).count();
    let mut by_type: BTreeMap<FailureType, (usize, usize)> = BTreeMap::new();
    for (s, t) in &failed {
        let e = by_type.entry(*t).or_default();
        e.0 += 1;
        e.1 += usize::from(*s >= threshold);
    }
    Ok(EvalReport {
        tpr: true_positives as f64 / failed.len() as f64,
        fpr: false_positives as f64 / healthy.len() as f64,
        fpr_budget,
        threshold,
        true_positives,
        false_positives,
        failed_disks: failed.len(),
        healthy_disks: healthy.len(),
        per_type: by_type
            .into_iter()
            .map(|(failure_type, (n, d))| TypeBreakdown {
                failure_type,
                failed_disks: n,
                detected: d,
                tpr: d as f64 / n as f64,
            })
            .collect(),
        run: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// TPR and FPR at every distinct observed score, highest threshold first.
pub fn curve(scores: &BTreeMap<String, f64>, truths: &BTreeMap<String, Truth>) -> Vec<CurvePoint> {
    let score = |s: &str| scores.get(s).copied().unwrap_or(f64::NEG_INFINITY);
    let mut points: Vec<(f64, bool)> = truths.iter().map(|(s, t)| (score(s), t.is_some())).collect();
    let n_failed = points.iter().filter(|p| p.1).count().max(1) as f64;
    let n_healthy = points.iter().filter(|p| !p.1).count().max(1) as f64;
    points.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < points.len() {
        let t = points[i].0;
        while i < points.len() && points[i].0 == t {
            if points[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if t.is_finite() {
            out.push(CurvePoint {
                threshold: t,
                tpr: tp as f64 / n_failed,
                fpr: fp as f64 / n_healthy,
            });
        }
    }
    out
}

/// Number of sliding runs over `span_days` split into 30-day months.
pub fn sliding_run_count(span_days: Day, train_months: usize, test_months: usize) -> usize {
    let months = (span_days / MONTH_DAYS).max(0) as usize;
    (months + 1).saturating_sub(train_months + test_months)
}

/// `(train_start, train_end, test_start, test_end)` day ranges, half-open.
pub fn sliding_windows(span_days: Day, train_months: usize, test_months: usize) -> Vec<(Day, Day, Day, Day)> {
    let (tr, te) = (train_months as Day * MONTH_DAYS, test_months as Day * MONTH_DAYS);
    (0..sliding_run_count(span_days, train_months, test_months))
        .map(|i| {
            let s = i as Day * MONTH_DAYS;
            (s, s + tr, s + tr, s + tr + te)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

/// Mean with a two-sided 95% Student-t confidence interval. A single value
/// gets a zero-width interval.
pub fn mean_ci95(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some(MeanCi {
            mean,
            lower: mean,
            upper: mean,
            n,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    Some(MeanCi {
        mean,
        lower: mean - half,
        upper: mean + half,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(healthy: &[f64], failed: &[f64]) -> (BTreeMap<String, f64>, BTreeMap<String, Truth>) {
        let mut scores = BTreeMap::new();
        let mut truths = BTreeMap::new();
        for (i, s) in healthy.iter().enumerate() {
            scores.insert(format!("h{i}"), *s);
            truths.insert(format!("h{i}"), None);
        }
        for (i, s) in failed.iter().enumerate() {
            scores.insert(format!("f{i}"), *s);
            truths.insert(format!("f{i}"), Some(FailureType::Unknown));
        }
        (scores, truths)
    }

    /// Best TPR over every candidate threshold that respects the budget.
    fn brute_force(healthy: &[f64], failed: &[f64], budget: f64) -> (f64, f64) {
        let mut cands: Vec<f64> = healthy.iter().chain(failed).copied().collect();
        cands.push(f64::INFINITY);
        let mut best = (0.0, 0.0);
        for t in cands {
            let fp = healthy.iter().filter(|s| **s >= t).count() as f64 / healthy.len() as f64;
            let tp = failed.iter().filter(|s| **s >= t).count() as f64 / failed.len() as f64;
            if fp <= budget + 1e-12 && (tp > best.0 || (tp == best.0 && fp > best.1)) {
                best = (tp, fp);
            }
        }
        best
    }

    #[test]
    fn quarter_budget_example() {
        let (s, t) = cohort(&[0.1, 0.2, 0.9, 0.3], &[0.8, 0.95]);
        let r = tpr_at_fpr(&s, &t, 0.25).unwrap();
        assert_eq!(r.threshold, 0.8);
        assert_eq!(r.fpr, 0.25);
        assert_eq!(r.tpr, 1.0);
        assert_eq!((r.tpr, r.fpr), brute_force(&[0.1, 0.2, 0.9, 0.3], &[0.8, 0.95], 0.25));
    }

    #[test]
    fn perfect_separation() {
        let (s, t) = cohort(&[0.1, 0.2, 0.3], &[0.7, 0.9]);
        for b in [0.001, 0.1, 0.5] {
            assert_eq!(tpr_at_fpr(&s, &t, b).unwrap().tpr, 1.0);
        }
    }

    #[test]
    fn tiny_budget_flags_no_healthy_disk() {
        let (s, t) = cohort(&[0.1, 0.9], &[0.5, 0.95]);
        let r = tpr_at_fpr(&s, &t, 0.001).unwrap();
        assert_eq!(r.fpr, 0.0);
        assert_eq!(r.tpr, 0.5);
        let (s, t) = cohort(&[0.1, 0.9], &[0.5]);
        let r = tpr_at_fpr(&s, &t, 0.001).unwrap();
        assert!(r.threshold > 0.9);
        assert_eq!(r.tpr, 0.0);
    }

    #[test]
    fn undefined_without_failures() {
        let (s, t) = cohort(&[0.1], &[]);
        assert!(tpr_at_fpr(&s, &t, 0.1).is_err());
    }

    #[test]
    fn unscored_failed_disk_is_missed() {
        let (mut s, t) = cohort(&[0.1, 0.2], &[0.9, 0.8]);
        s.remove("f1");
        let r = tpr_at_fpr(&s, &t, 0.0).unwrap();
        assert_eq!(r.tpr, 0.5);
    }

    #[test]
    fn per_type_rows_reconcile() {
        let (s, mut t) = cohort(&[0.1, 0.2, 0.3, 0.4], &[0.9, 0.25, 0.8]);
        t.insert("f1".into(), Some(FailureType::IoRequestError));
        let r = tpr_at_fpr(&s, &t, 0.0).unwrap();
        let weighted: f64 = r.per_type.iter().map(|b| b.tpr * b.failed_disks as f64).sum::<f64>() / 3.0;
        assert!((weighted - r.tpr).abs() < 1e-12);
    }

    #[test]
    fn disk_score_is_max() {
        let keys = vec![("a".to_string(), 1), ("a".to_string(), 2), ("b".to_string(), 1)];
        let m = disk_scores(&keys, &[0.2, 0.7, 0.1]);
        assert_eq!(m["a"], 0.7);
        assert_eq!(m["b"], 0.1);
    }

    #[test]
    fn curve_ends_at_one() {
        let (s, t) = cohort(&[0.1, 0.5], &[0.5, 0.9]);
        let c = curve(&s, &t);
        assert_eq!(c.len(), 3);
        assert_eq!(
            c[1],
            CurvePoint {
                threshold: 0.5,
                tpr: 1.0,
                fpr: 0.5
            }
        );
        let last = c.last().unwrap();
        assert_eq!((last.tpr, last.fpr), (1.0, 1.0));
    }

    #[test]
    fn run_counts() {
        assert_eq!(sliding_run_count(18 * 30, 3, 1), 15);
        assert_eq!(sliding_run_count(40 * 30, 3, 1), 37);
        assert_eq!(sliding_run_count(4 * 30, 3, 1), 1);
        assert_eq!(sliding_run_count(3 * 30, 3, 1), 0);
        let w = sliding_windows(5 * 30, 3, 1);
        assert_eq!(w, vec![(0, 90, 90, 120), (30, 120, 120, 150)]);
    }

    #[test]
    fn confidence_interval() {
        let ci = mean_ci95(&[1.0, 2.0, 3.0]).unwrap();
        // t(0.975, 2) = 4.302653, sd = 1
        assert!((ci.upper - 2.0 - 4.302653 / 3f64.sqrt()).abs() < 1e-5);
        assert_eq!(mean_ci95(&[0.5]).unwrap().lower, 0.5);
    }
}
