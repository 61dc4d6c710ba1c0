//! Seeded synthetic fleets with known ground truth.
//!
//! Cumulative attributes are non-decreasing counters with Poisson daily
//! increments on a small fraction of disks; instantaneous attributes follow
//! an AR(1) process around a baseline. Failed disks of a signature-bearing
//! type ramp their signature attributes over the `ramp_days` before
//! failure, adding `slope * j^exponent` on the j-th ramp day; other failure
//! types look healthy until they fail.
//! Missing days come from a daily drop rate plus, on failed disks, an
//! optional run of missing days ending at the failure day.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{default_epoch, Dataset, Day, DiskSeries, FailureType, SmartSample, TicketEvent};
use crate::error::{Error, Result};
use crate::{exec, hashing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Cumulative,
    Instantaneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    /// Gaussian measurement noise added to every reading.
    #[serde(default)]
    pub noise: f64,
    /// Cumulative: fraction of disks whose counter grows while healthy.
    #[serde(default)]
    pub active_fraction: f64,
    /// Cumulative: daily rate of error events on growing disks.
    #[serde(default)]
    pub daily_rate: f64,
    /// Cumulative: mean counter increase per event (at least 1).
    #[serde(default = "one")]
    pub burst_mean: f64,
    /// Instantaneous: level the process reverts to.
    #[serde(default)]
    pub baseline: f64,
    /// Instantaneous: AR(1) coefficient.
    #[serde(default)]
    pub persistence: f64,
    /// Ramps before failures of signature-bearing types.
    #[serde(default)]
    pub signature: bool,
    /// Added per ramp day on signature attributes.
    #[serde(default)]
    pub ramp_slope: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureTypeSpec {
    pub failure_type: FailureType,
    pub weight: f64,
    pub signature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingModel {
    /// Probability that any day after the first is missing.
    pub daily_drop_rate: f64,
    /// Probability that a failed disk loses the days leading up to failure.
    pub gap_probability: f64,
    pub gap_min_days: usize,
    pub gap_max_days: usize,
}

impl Default for MissingModel {
    fn default() -> Self {
        MissingModel {
            daily_drop_rate: 0.0,
            gap_probability: 0.0,
            gap_min_days: 0,
            gap_max_days: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_disks: usize,
    pub span_days: Day,
    pub afr_target: f64,
    pub attributes: Vec<AttributeSpec>,
    pub failure_types: Vec<FailureTypeSpec>,
    pub ramp_days: usize,
    /// 1 gives a linear ramp, larger values an accelerating one.
    pub ramp_exponent: f64,
    /// Failures happen on or after this day, so every failed disk has
    /// some history.
    pub min_failure_day: Day,
    pub missing: MissingModel,
    pub model: String,
    pub vendor: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let cumulative = |name: &str, signature: bool, slope: f64| AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Cumulative,
            noise: 0.0,
            active_fraction: 0.05,
            daily_rate: 0.1,
            burst_mean: 1.0,
            baseline: 0.0,
            persistence: 0.0,
            signature,
            ramp_slope: slope,
        };
        let instantaneous = |name: &str, baseline: f64, noise: f64| AttributeSpec {
            name: name.into(),
            kind: AttributeKind::Instantaneous,
            noise,
            active_fraction: 0.0,
            daily_rate: 0.0,
            burst_mean: 1.0,
            baseline,
            persistence: 0.8,
            signature: false,
            ramp_slope: 0.0,
        };
        SynthConfig {
            n_disks: 1000,
            span_days: 365,
            afr_target: 0.02,
            attributes: vec![
                cumulative("smart_5_raw", true, 2.0),
                cumulative("smart_187_raw", true, 1.5),
                cumulative("smart_197_raw", true, 1.0),
                cumulative("smart_198_raw", true, 1.0),
                instantaneous("smart_194_raw", 35.0, 1.0),
                instantaneous("smart_1_raw", 100.0, 5.0),
            ],
            failure_types: vec![
                FailureTypeSpec {
                    failure_type: FailureType::DataCorruption,
                    weight: 0.5,
                    signature: true,
                },
                FailureTypeSpec {
                    failure_type: FailureType::IoRequestError,
                    weight: 0.5,
                    signature: false,
                },
            ],
            ramp_days: 20,
            ramp_exponent: 1.0,
            min_failure_day: 60,
            missing: MissingModel::default(),
            model: "SYNTH-1".into(),
            vendor: "synth".into(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be in [0, 1]")))
            }
        };
        prob(self.afr_target, "afr_target")?;
        prob(self.missing.daily_drop_rate, "daily_drop_rate")?;
        prob(self.missing.gap_probability, "gap_probability")?;
        if self.span_days <= 0 {
            return Err(Error::Config("span_days must be positive".into()));
        }
        if self.ramp_days as Day >= self.span_days {
            return Err(Error::Config("ramp_days must be shorter than the span".into()));
        }
        if self.min_failure_day < 0 || self.min_failure_day >= self.span_days {
            return Err(Error::Config("min_failure_day must lie inside the span".into()));
        }
        if !(self.ramp_exponent > 0.0 && self.ramp_exponent.is_finite()) {
            return Err(Error::Config("ramp_exponent must be positive".into()));
        }
        if self.missing.gap_min_days > self.missing.gap_max_days {
            return Err(Error::Config("gap_min_days exceeds gap_max_days".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("at least one attribute is required".into()));
        }
        for a in &self.attributes {
            prob(a.active_fraction, "active_fraction")?;
            if a.noise < 0.0 || a.daily_rate < 0.0 || a.burst_mean.is_nan() || a.burst_mean < 1.0 {
                return Err(Error::Config(format!(
                    "{}: noise and rate must be non-negative, burst_mean at least 1",
                    a.name
                )));
            }
        }
        if self.failure_types.is_empty() || self.failure_types.iter().any(|t| t.weight < 0.0) {
            return Err(Error::Config("failure types need non-negative weights".into()));
        }
        if self.failure_types.iter().map(|t| t.weight).sum::<f64>() <= 0.0 {
            return Err(Error::Config("failure type weights sum to zero".into()));
        }
        Ok(())
    }

    /// Probability that a disk fails within the span.
    pub fn failure_probability(&self) -> f64 {
        (self.afr_target * self.span_days as f64 / 365.0).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTruth {
    pub failure_day: Day,
    pub failure_type: FailureType,
    /// First ramped day, for signature-bearing types.
    pub ramp_start: Option<Day>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub failures: BTreeMap<String, FailureTruth>,
    /// Days without a sample, per disk, within its expected lifetime.
    pub missing_days: BTreeMap<String, Vec<Day>>,
}

struct DiskOutcome {
    series: DiskSeries,
    failure: Option<FailureTruth>,
    missing: Vec<Day>,
}

fn generate_disk(cfg: &SynthConfig, i: usize) -> DiskOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(hashing::mix_seed(cfg.seed, i as u64));
    let serial = format!("SYN{i:06}");

    let failure = rng.random_bool(cfg.failure_probability()).then(|| {
        let day = rng.random_range(cfg.min_failure_day..cfg.span_days);
        let total: f64 = cfg.failure_types.iter().map(|t| t.weight).sum();
        let mut pick = rng.random::<f64>() * total;
        let spec = cfg
            .failure_types
            .iter()
            .find(|t| {
                pick -= t.weight;
                pick < 0.0
            })
            .unwrap_or(&cfg.failure_types[cfg.failure_types.len() - 1]);
        FailureTruth {
            failure_day: day,
            failure_type: spec.failure_type,
            ramp_start: spec.signature.then_some(day - cfg.ramp_days as Day),
        }
    });
    let last_day = failure.as_ref().map_or(cfg.span_days - 1, |f| f.failure_day);
    let n_days = (last_day + 1) as usize;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cfg.attributes.len());
    for a in &cfg.attributes {
        let noise = Normal::new(0.0, a.noise.max(0.0)).expect("finite sigma");
        let mut col = Vec::with_capacity(n_days);
        match a.kind {
            AttributeKind::Cumulative => {
                let growing = a.daily_rate > 0.0 && rng.random_bool(a.active_fraction);
                let events = growing.then(|| Poisson::new(a.daily_rate).expect("positive rate"));
                let extra = (a.burst_mean > 1.0).then(|| Poisson::new(a.burst_mean - 1.0).expect("positive mean"));
                let mut counter = 0.0;
                for _ in 0..n_days {
                    if let Some(p) = &events {
                        let k = p.sample(&mut rng) as usize;
                        counter += k as f64;
                        if let Some(e) = &extra {
                            counter += (0..k).map(|_| e.sample(&mut rng)).sum::<f64>();
                        }
                    }
                    col.push(counter);
                }
            }
            AttributeKind::Instantaneous => {
                let mut x = a.baseline;
                for _ in 0..n_days {
                    x = a.baseline + a.persistence * (x - a.baseline) + noise.sample(&mut rng);
                    col.push(x);
                }
            }
        }
        if let Some(FailureTruth {
            ramp_start: Some(start),
            ..
        }) = &failure
        {
            if a.signature {
                for d in (*start).max(0)..=last_day {
                    col[d as usize] += a.ramp_slope * ((d - start + 1) as f64).powf(cfg.ramp_exponent);
                }
            }
        }
        if a.kind == AttributeKind::Cumulative && a.noise > 0.0 {
            for v in &mut col {
                *v += noise.sample(&mut rng);
            }
        }
        columns.push(col);
    }

    let mut keep = vec![true; n_days];
    if cfg.missing.daily_drop_rate > 0.0 {
        for k in keep.iter_mut().skip(1) {
            *k = !rng.random_bool(cfg.missing.daily_drop_rate);
        }
    }
    if failure.is_some() && cfg.missing.gap_probability > 0.0 && rng.random_bool(cfg.missing.gap_probability) {
        let len = rng.random_range(cfg.missing.gap_min_days..=cfg.missing.gap_max_days);
        let len = len.min(n_days - 1);
        for k in keep.iter_mut().rev().take(len) {
            *k = false;
        }
    }
    let samples = (0..n_days)
        .filter(|&d| keep[d])
        .map(|d| SmartSample::new(d as Day, columns.iter().map(|c| Some(c[d])).collect()))
        .collect();
    let missing = (0..n_days).filter(|&d| !keep[d]).map(|d| d as Day).collect();
    DiskOutcome {
        series: DiskSeries {
            serial,
            model: cfg.model.clone(),
            vendor: cfg.vendor.clone(),
            samples,
        },
        failure,
        missing,
    }
}

/// Generates a fleet. Identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let expected = cfg.failure_probability() * cfg.n_disks as f64;
    if expected < 1.0 {
        log::warn!("expected failure count {expected:.2} is below one; the fleet may have no failures");
    }
    let outcomes = exec::map_range(cfg.n_disks, |i| generate_disk(cfg, i));
    let mut truth = GroundTruth::default();
    let mut disks = Vec::with_capacity(outcomes.len());
    let mut tickets = Vec::new();
    for o in outcomes {
        let serial = o.series.serial.clone();
        if let Some(f) = o.failure {
            tickets.push(TicketEvent::new(&serial, f.failure_day, f.failure_type));
            truth.failures.insert(serial.clone(), f);
        }
        if !o.missing.is_empty() {
            truth.missing_days.insert(serial, o.missing);
        }
        disks.push(o.series);
    }
    let attributes = cfg.attributes.iter().map(|a| a.name.clone()).collect();
    let ds = Dataset::new(attributes, disks, tickets, default_epoch(), cfg.span_days)?;
    Ok((ds, truth))
}
