//! Canonical in-memory data model: per-disk daily SMART series and tickets.
//!
//! # On-disk layout
//!
//! A serialized [`Dataset`] is a directory:
//!
//! ```text
//! <dir>/dataset.json        {"format": "diskprep-dataset/1", "epoch": "YYYY-MM-DD",
//!                            "span_days": N, "attributes": [...], "models": [...]}
//! <dir>/disks/<model>.csv   serial,vendor,day,<attr_1>,...,<attr_k>
//! <dir>/tickets.csv         serial,day,failure_type
//! ```
//!
//! One disk file per model; `<model>` is the model name with every character
//! outside `[A-Za-z0-9._-]` replaced by `_`, and `models` in `dataset.json`
//! maps each original model name to its file. Rows are sorted by
//! `(serial, day)`. An empty cell is a missing attribute value; a missing
//! day has no row. Floats are written in shortest round-trip form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day index since the dataset epoch.
pub type Day = i64;

pub const DATASET_FORMAT: &str = "diskprep-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartSample {
    pub day: Day,
    /// Raw attribute values aligned with [`Dataset::attributes`].
    pub values: Vec<Option<f64>>,
}

impl SmartSample {
    pub fn new(day: Day, values: Vec<Option<f64>>) -> Self {
        SmartSample { day, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskSeries {
    pub serial: String,
    pub model: String,
    pub vendor: String,
    /// Strictly ascending by day.
    pub samples: Vec<SmartSample>,
}

impl DiskSeries {
    pub fn new(
        serial: impl Into<String>,
        model: impl Into<String>,
        vendor: impl Into<String>,
        samples: Vec<SmartSample>,
    ) -> Result<Self> {
        let series = DiskSeries {
            serial: serial.into(),
            model: model.into(),
            vendor: vendor.into(),
            samples,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidInput(format!("disk {} has no samples", self.serial)));
        }
        if self.samples[0].day < 0 {
            return Err(Error::InvalidInput(format!("disk {} has a negative day", self.serial)));
        }
        if let Some(w) = self.samples.windows(2).find(|w| w[0].day >= w[1].day) {
            return Err(Error::InvalidInput(format!(
                "disk {}: samples not strictly ascending at day {}",
                self.serial, w[1].day
            )));
        }
        Ok(())
    }

    pub fn first_day(&self) -> Day {
        self.samples.first().map_or(0, |s| s.day)
    }

    pub fn last_day(&self) -> Day {
        self.samples.last().map_or(0, |s| s.day)
    }

    /// Number of days in `[first_day, last_day]` without a sample.
    pub fn missing_days(&self) -> usize {
        (self.last_day() - self.first_day() + 1) as usize - self.samples.len()
    }

    pub fn sample_at(&self, day: Day) -> Option<&SmartSample> {
        self.samples
            .binary_search_by_key(&day, |s| s.day)
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Last sample on or before `day`.
    pub fn last_sample_until(&self, day: Day) -> Option<&SmartSample> {
        let idx = self.samples.partition_point(|s| s.day <= day);
        idx.checked_sub(1).map(|i| &self.samples[i])
    }

    /// Keeps samples with `start <= day < end`.
    pub fn restricted(&self, start: Day, end: Day) -> Option<DiskSeries> {
        let samples: Vec<_> = self
            .samples
            .iter()
            .filter(|s| s.day >= start && s.day < end)
            .cloned()
            .collect();
        (!samples.is_empty()).then(|| DiskSeries {
            serial: self.serial.clone(),
            model: self.model.clone(),
            vendor: self.vendor.clone(),
            samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureType {
    DataCorruption,
    IoRequestError,
    UnhandledError,
    DiskNotFound,
    UnhealthyDisk,
    FsCorruption,
    Other,
    Unknown,
}

impl FailureType {
    pub const ALL: [FailureType; 8] = [
        FailureType::DataCorruption,
        FailureType::IoRequestError,
        FailureType::UnhandledError,
        FailureType::DiskNotFound,
        FailureType::UnhealthyDisk,
        FailureType::FsCorruption,
        FailureType::Other,
        FailureType::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureType::DataCorruption => "data_corruption",
            FailureType::IoRequestError => "io_request_error",
            FailureType::UnhandledError => "unhandled_error",
            FailureType::DiskNotFound => "disk_not_found",
            FailureType::UnhealthyDisk => "unhealthy_disk",
            FailureType::FsCorruption => "fs_corruption",
            FailureType::Other => "other",
            FailureType::Unknown => "unknown",
        }
    }

    /// Case-insensitive lookup ignoring separators and a plural `s`.
    /// Returns `None` for unrecognized strings.
    pub fn parse_loose(s: &str) -> Option<FailureType> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let key = key.strip_suffix('s').unwrap_or(&key);
        let ty = match key {
            "datacorruption" => FailureType::DataCorruption,
            "iorequesterror" | "ioerror" => FailureType::IoRequestError,
            "unhandlederror" => FailureType::UnhandledError,
            "disknotfound" | "disknotfounderror" => FailureType::DiskNotFound,
            "unhealthydisk" | "unhealthy" => FailureType::UnhealthyDisk,
            "fscorruption" | "filesystemcorruption" => FailureType::FsCorruption,
            "other" => FailureType::Other,
            "unknown" => FailureType::Unknown,
            _ => return None,
        };
        Some(ty)
    }
}

impl fmt::Display for FailureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FailureType::parse_loose(s).ok_or_else(|| Error::InvalidInput(format!("unknown failure type `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketEvent {
    pub serial: String,
    pub day: Day,
    pub failure_type: FailureType,
}

impl TicketEvent {
    pub fn new(serial: impl Into<String>, day: Day, failure_type: FailureType) -> Self {
        TicketEvent {
            serial: serial.into(),
            day,
            failure_type,
        }
    }
}

/// Collapses tickets to the earliest one per serial (ties: first seen).
pub fn earliest_per_serial(tickets: impl IntoIterator<Item = TicketEvent>) -> Vec<TicketEvent> {
    let mut by_serial: BTreeMap<String, TicketEvent> = BTreeMap::new();
    for t in tickets {
        match by_serial.get(&t.serial) {
            Some(existing) if existing.day <= t.day => {}
            _ => {
                by_serial.insert(t.serial.clone(), t);
            }
        }
    }
    by_serial.into_values().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub attributes: Vec<String>,
    pub disks: BTreeMap<String, DiskSeries>,
    pub tickets: BTreeMap<String, TicketEvent>,
    pub epoch: NaiveDate,
    pub span_days: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    epoch: NaiveDate,
    span_days: i64,
    attributes: Vec<String>,
    models: Vec<ModelFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    model: String,
    file: String,
}

pub fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

impl Dataset {
    /// Builds a dataset, enforcing the cross-collection invariants:
    /// tickets reference known disks (others are dropped), one ticket per
    /// serial, and every series is truncated at its ticket day.
    pub fn new(
        attributes: Vec<String>,
        disks: impl IntoIterator<Item = DiskSeries>,
        tickets: impl IntoIterator<Item = TicketEvent>,
        epoch: NaiveDate,
        span_days: i64,
    ) -> Result<Self> {
        let mut disk_map = BTreeMap::new();
        for d in disks {
            d.validate()?;
            if let Some(s) = d.samples.iter().find(|s| s.values.len() != attributes.len()) {
                return Err(Error::InvalidInput(format!(
                    "disk {} day {}: {} values for {} attributes",
                    d.serial,
                    s.day,
                    s.values.len(),
                    attributes.len()
                )));
            }
            if disk_map.insert(d.serial.clone(), d).is_some() {
                return Err(Error::InvalidInput("duplicate disk serial".into()));
            }
        }
        let mut ticket_map = BTreeMap::new();
        for t in earliest_per_serial(tickets) {
            if t.day < 0 {
                return Err(Error::InvalidInput(format!(
                    "ticket for {} has a negative day",
                    t.serial
                )));
            }
            if disk_map.contains_key(&t.serial) {
                ticket_map.insert(t.serial.clone(), t);
            } else {
                log::warn!("dropping ticket for unknown disk {}", t.serial);
            }
        }
        let mut ds = Dataset {
            attributes,
            disks: disk_map,
            tickets: ticket_map,
            epoch,
            span_days,
        };
        ds.truncate_at_tickets();
        Ok(ds)
    }

    fn truncate_at_tickets(&mut self) {
        let mut emptied = Vec::new();
        for (serial, t) in &self.tickets {
            if let Some(d) = self.disks.get_mut(serial) {
                d.samples.retain(|s| s.day <= t.day);
                if d.samples.is_empty() {
                    emptied.push(serial.clone());
                }
            }
        }
        for serial in emptied {
            log::warn!("disk {serial} has no samples on or before its ticket day; dropped");
            self.disks.remove(&serial);
            self.tickets.remove(&serial);
        }
    }

    pub fn empty(attributes: Vec<String>, epoch: NaiveDate) -> Self {
        Dataset {
            attributes,
            disks: BTreeMap::new(),
            tickets: BTreeMap::new(),
            epoch,
            span_days: 0,
        }
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    pub fn attr_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.attr_index(n)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown attribute `{n}`")))
            })
            .collect()
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.disks.values().map(|d| d.model.as_str()).collect()
    }

    pub fn disks_of_model<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a DiskSeries> + 'a {
        self.disks.values().filter(move |d| d.model == model)
    }

    pub fn has_model(&self, model: &str) -> bool {
        self.disks.values().any(|d| d.model == model)
    }

    pub fn ticket(&self, serial: &str) -> Option<&TicketEvent> {
        self.tickets.get(serial)
    }

    /// Whether any ticket carries a real failure type (not `Unknown`).
    pub fn has_failure_types(&self) -> bool {
        self.tickets.values().any(|t| t.failure_type != FailureType::Unknown)
    }

    /// Restricts to one model.
    pub fn of_model(&self, model: &str) -> Dataset {
        let disks: BTreeMap<_, _> = self
            .disks
            .iter()
            .filter(|(_, d)| d.model == model)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let tickets = self
            .tickets
            .iter()
            .filter(|(k, _)| disks.contains_key(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Dataset {
            attributes: self.attributes.clone(),
            disks,
            tickets,
            epoch: self.epoch,
            span_days: self.span_days,
        }
    }

    /// Samples with `start <= day < end`, tickets with `start <= day < end`.
    /// Disks without samples in the window are dropped, as are their tickets.
    pub fn window(&self, start: Day, end: Day) -> Dataset {
        let disks: BTreeMap<_, _> = self
            .disks
            .iter()
            .filter_map(|(k, d)| d.restricted(start, end).map(|r| (k.clone(), r)))
            .collect();
        let tickets = self
            .tickets
            .iter()
            .filter(|(k, t)| disks.contains_key(*k) && t.day >= start && t.day < end)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Dataset {
            attributes: self.attributes.clone(),
            disks,
            tickets,
            epoch: self.epoch,
            span_days: self.span_days,
        }
    }

    pub fn with_tickets(&self, tickets: impl IntoIterator<Item = TicketEvent>) -> Result<Dataset> {
        Dataset::new(
            self.attributes.clone(),
            self.disks.values().cloned(),
            tickets,
            self.epoch,
            self.span_days,
        )
    }

    pub fn total_samples(&self) -> usize {
        self.disks.values().map(|d| d.samples.len()).sum()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let disks_dir = dir.join("disks");
        fs::create_dir_all(&disks_dir).map_err(|e| Error::io(&disks_dir, e))?;

        let mut by_model: BTreeMap<&str, Vec<&DiskSeries>> = BTreeMap::new();
        for d in self.disks.values() {
            by_model.entry(d.model.as_str()).or_default().push(d);
        }
        let mut models = Vec::new();
        let mut used_files = BTreeSet::new();
        for (model, disks) in by_model {
            let mut file = format!("{}.csv", sanitize_file_name(model));
            let mut suffix = 1;
            while !used_files.insert(file.clone()) {
                file = format!("{}-{suffix}.csv", sanitize_file_name(model));
                suffix += 1;
            }
            let path = disks_dir.join(&file);
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["serial".to_string(), "vendor".into(), "day".into()];
            header.extend(self.attributes.iter().cloned());
            w.write_record(&header)?;
            for d in disks {
                for s in &d.samples {
                    let mut row = Vec::with_capacity(header.len());
                    row.push(d.serial.clone());
                    row.push(d.vendor.clone());
                    row.push(s.day.to_string());
                    row.extend(s.values.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
                    w.write_record(&row)?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            models.push(ModelFile {
                model: model.to_string(),
                file,
            });
        }

        let tickets_path = dir.join("tickets.csv");
        let mut w = csv::Writer::from_path(&tickets_path)?;
        w.write_record(["serial", "day", "failure_type"])?;
        for t in self.tickets.values() {
            w.write_record([t.serial.as_str(), &t.day.to_string(), t.failure_type.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(&tickets_path, e))?;

        let header = DatasetHeader {
            format: DATASET_FORMAT.to_string(),
            epoch: self.epoch,
            span_days: self.span_days,
            attributes: self.attributes.clone(),
            models,
        };
        let path = dir.join("dataset.json");
        fs::write(&path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join("dataset.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let header: DatasetHeader = serde_json::from_str(&text)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Format(format!(
                "unsupported dataset format `{}` (expected `{DATASET_FORMAT}`)",
                header.format
            )));
        }
        let n_attr = header.attributes.len();
        let mut disks = Vec::new();
        for mf in &header.models {
            let path = dir.join("disks").join(&mf.file);
            let mut r = csv::Reader::from_path(&path)?;
            let mut current: Option<DiskSeries> = None;
            for rec in r.records() {
                let rec = rec?;
                if rec.len() != 3 + n_attr {
                    return Err(Error::Format(format!(
                        "{}: expected {} columns, found {}",
                        path.display(),
                        3 + n_attr,
                        rec.len()
                    )));
                }
                let serial = &rec[0];
                let day: Day = rec[2]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad day `{}`", &rec[2])))?;
                let values = (0..n_attr)
                    .map(|i| parse_opt_f64(&rec[3 + i]))
                    .collect::<Result<Vec<_>>>()?;
                let sample = SmartSample::new(day, values);
                match current.as_mut() {
                    Some(d) if d.serial == serial => d.samples.push(sample),
                    _ => {
                        disks.extend(current.take());
                        current = Some(DiskSeries {
                            serial: serial.to_string(),
                            model: mf.model.clone(),
                            vendor: rec[1].to_string(),
                            samples: vec![sample],
                        });
                    }
                }
            }
            disks.extend(current);
        }

        let tickets_path = dir.join("tickets.csv");
        let mut tickets = Vec::new();
        let mut r = csv::Reader::from_path(&tickets_path)?;
        for rec in r.records() {
            let rec = rec?;
            let day: Day = rec[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad ticket day `{}`", &rec[1])))?;
            tickets.push(TicketEvent::new(&rec[0], day, rec[2].parse()?));
        }
        Dataset::new(header.attributes, disks, tickets, header.epoch, header.span_days)
    }
}

fn parse_opt_f64(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad value `{s}`")))
}

fn sanitize_file_name(model: &str) -> String {
    let s: String = model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(day: Day, v: f64) -> SmartSample {
        SmartSample::new(day, vec![Some(v), None])
    }

    fn tiny() -> Dataset {
        let a = DiskSeries::new("A", "M 1", "V", vec![sample(0, 1.0), sample(1, 2.5), sample(5, 0.1)]).unwrap();
        let b = DiskSeries::new("B", "M2", "V", vec![sample(2, 3.0), sample(3, 1e-17)]).unwrap();
        Dataset::new(
            vec!["smart_5_raw".into(), "smart_9_raw".into()],
            [a, b],
            [TicketEvent::new("A", 1, FailureType::DataCorruption)],
            default_epoch(),
            10,
        )
        .unwrap()
    }

    #[test]
    fn series_rejects_unsorted_samples() {
        let err = DiskSeries::new("X", "M", "V", vec![sample(3, 1.0), sample(3, 2.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn truncates_at_ticket_day() {
        let ds = tiny();
        let a = &ds.disks["A"];
        assert_eq!(a.last_day(), 1);
        assert_eq!(a.samples.len(), 2);
    }

    #[test]
    fn tickets_for_unknown_disks_are_dropped() {
        let ds = tiny()
            .with_tickets([TicketEvent::new("Z", 3, FailureType::Other)])
            .unwrap();
        assert!(ds.tickets.is_empty());
    }

    #[test]
    fn failure_type_parsing() {
        assert_eq!(
            FailureType::parse_loose("data_corruption"),
            Some(FailureType::DataCorruption)
        );
        assert_eq!(
            FailureType::parse_loose("Disk-Not-Found errors"),
            Some(FailureType::DiskNotFound)
        );
        assert_eq!(
            FailureType::parse_loose("IO request error"),
            Some(FailureType::IoRequestError)
        );
        assert_eq!(FailureType::parse_loose("weird_new_error"), None);
        for t in FailureType::ALL {
            assert_eq!(t.as_str().parse::<FailureType>().unwrap(), t);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn window_keeps_tickets_in_range() {
        let ds = tiny();
        let w = ds.window(2, 10);
        assert!(!w.disks.contains_key("A"));
        assert!(w.tickets.is_empty());
        assert_eq!(w.disks["B"].samples.len(), 2);
    }
}
