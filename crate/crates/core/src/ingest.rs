//! CSV ingestion of SMART logs (Backblaze layout by default) and tickets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::data::{
    default_epoch, earliest_per_serial, Dataset, Day, DiskSeries, FailureType, SmartSample, TicketEvent,
};
use crate::error::{Error, Result};
use crate::exec;

/// Which columns hold SMART attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeColumns {
    /// Every column whose name starts with `prefix` and ends with `suffix`.
    Pattern {
        prefix: String,
        suffix: String,
    },
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub date: String,
    pub serial: String,
    pub model: String,
    pub failure: Option<String>,
    pub vendor: Option<String>,
    pub attributes: AttributeColumns,
    /// Day 0. Defaults to the earliest date in the input.
    pub epoch: Option<NaiveDate>,
}

impl Default for SchemaConfig {
    /// The Backblaze layout: `date,serial_number,model,capacity_bytes,failure,smart_N_raw,smart_N_normalized`.
    /// Normalized columns are ignored.
    fn default() -> Self {
        SchemaConfig {
            date: "date".into(),
            serial: "serial_number".into(),
            model: "model".into(),
            failure: Some("failure".into()),
            vendor: None,
            attributes: AttributeColumns::Pattern {
                prefix: "smart_".into(),
                suffix: "_raw".into(),
            },
            epoch: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: usize,
    pub rows: usize,
    pub skipped_rows: usize,
    pub duplicate_rows: usize,
    pub failure_rows: usize,
}

struct RawRow {
    serial: String,
    model: String,
    vendor: Option<String>,
    date: NaiveDate,
    failed: bool,
    values: Vec<Option<f64>>,
}

struct FileRows {
    attributes: Vec<String>,
    rows: Vec<RawRow>,
    skipped: usize,
}

/// Parses a CSV file, or every `*.csv` in a directory (in file-name order),
/// into a dataset of disks. Per-row failure flags become `Unknown` tickets.
pub fn parse_smart_csv(path: &Path, schema: &SchemaConfig) -> Result<(Dataset, IngestReport)> {
    let files = input_files(path)?;
    let parsed = exec::try_map(&files, |f| parse_file(f, schema))?;

    let mut report = IngestReport {
        files: files.len(),
        ..Default::default()
    };
    let mut attributes: Option<Vec<String>> = None;
    for p in &parsed {
        report.skipped_rows += p.skipped;
        report.rows += p.rows.len() + p.skipped;
        if p.rows.is_empty() && p.attributes.is_empty() {
            continue;
        }
        match &attributes {
            None => attributes = Some(p.attributes.clone()),
            Some(a) if *a != p.attributes => {
                return Err(Error::Config("input files disagree on attribute columns".into()))
            }
            _ => {}
        }
    }
    let attributes = attributes.unwrap_or_default();
    let rows: Vec<RawRow> = parsed.into_iter().flat_map(|p| p.rows).collect();
    if rows.is_empty() {
        return Ok((
            Dataset::empty(attributes, schema.epoch.unwrap_or_else(default_epoch)),
            report,
        ));
    }

    let epoch = schema
        .epoch
        .unwrap_or_else(|| rows.iter().map(|r| r.date).min().expect("non-empty"));

    // (serial, day) -> row; the last occurrence in input order wins.
    let mut cells: BTreeMap<(String, Day), RawRow> = BTreeMap::new();
    let mut failures: Vec<TicketEvent> = Vec::new();
    for row in rows {
        let day = (row.date - epoch).num_days();
        if day < 0 {
            report.skipped_rows += 1;
            continue;
        }
        if row.failed {
            report.failure_rows += 1;
            failures.push(TicketEvent::new(&row.serial, day, FailureType::Unknown));
        }
        if cells.insert((row.serial.clone(), day), row).is_some() {
            report.duplicate_rows += 1;
        }
    }

    let mut disks = Vec::new();
    let mut current: Option<DiskSeries> = None;
    let mut max_day = 0;
    for ((serial, day), row) in cells {
        max_day = max_day.max(day);
        let sample = SmartSample::new(day, row.values);
        let vendor = row.vendor.unwrap_or_else(|| vendor_from_model(&row.model));
        match current.as_mut() {
            Some(d) if d.serial == serial => {
                d.samples.push(sample);
                // identity follows the latest day
                d.model = row.model;
                d.vendor = vendor;
            }
            _ => {
                disks.extend(current.take());
                current = Some(DiskSeries {
                    serial,
                    model: row.model,
                    vendor,
                    samples: vec![sample],
                });
            }
        }
    }
    disks.extend(current);

    let ds = Dataset::new(attributes, disks, failures, epoch, max_day + 1)?;
    Ok((ds, report))
}

fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

fn parse_file(path: &Path, schema: &SchemaConfig) -> Result<FileRows> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(FileRows {
            attributes: Vec::new(),
            rows: Vec::new(),
            skipped: 0,
        });
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column `{name}`", path.display())))
    };
    let date_col = find(&schema.date)?;
    let serial_col = find(&schema.serial)?;
    let model_col = find(&schema.model)?;
    let failure_col = schema.failure.as_deref().map(find).transpose()?;
    let vendor_col = schema.vendor.as_deref().map(find).transpose()?;
    let (attributes, attr_cols): (Vec<String>, Vec<usize>) = match &schema.attributes {
        AttributeColumns::Pattern { prefix, suffix } => headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix.as_str()) && h.ends_with(suffix.as_str()))
            .map(|(i, h)| (h.to_string(), i))
            .unzip(),
        AttributeColumns::Explicit(names) => {
            let cols = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
            (names.clone(), cols)
        }
    };

    let mut rows = Vec::new();
    let mut skipped = 0;
    for rec in reader.records() {
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        let serial = rec.get(serial_col).map(str::trim).unwrap_or("");
        let date = rec.get(date_col).and_then(parse_date);
        let (false, Some(date)) = (serial.is_empty(), date) else {
            skipped += 1;
            continue;
        };
        let failed = failure_col
            .and_then(|c| rec.get(c))
            .is_some_and(|v| matches!(v.trim(), "1" | "true" | "True" | "TRUE"));
        let values = attr_cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        rows.push(RawRow {
            serial: serial.to_string(),
            model: rec.get(model_col).unwrap_or("").trim().to_string(),
            vendor: vendor_col.and_then(|c| rec.get(c)).map(|v| v.trim().to_string()),
            date,
            failed,
            values,
        });
    }
    Ok(FileRows {
        attributes,
        rows,
        skipped,
    })
}

/// Accepts `YYYY-MM-DD`, optionally followed by a time; time is floored away.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M:%SZ"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.date());
        }
    }
    None
}

fn vendor_from_model(model: &str) -> String {
    match model.split_once(' ') {
        Some((vendor, _)) => vendor.to_string(),
        None if model.starts_with("ST") => "Seagate".into(),
        None if model.starts_with("WD") => "WDC".into(),
        None => "unknown".into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketReport {
    pub records: usize,
    pub malformed: usize,
    pub unrecognized_types: usize,
    pub collapsed: usize,
}

#[derive(Deserialize)]
struct TicketRecord {
    serial: Option<String>,
    day: Option<Day>,
    date: Option<String>,
    failure_type: Option<String>,
}

/// Parses a ticket file: CSV with `serial` plus `day` or `date` plus
/// `failure_type`, or line-delimited JSON objects with the same fields.
/// Dates are converted to days relative to `epoch`.
pub fn parse_tickets(path: &Path, epoch: NaiveDate) -> Result<(Vec<TicketEvent>, TicketReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut report = TicketReport::default();
    let records: Vec<Option<TicketRecord>> = if text.trim_start().starts_with('{') {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).ok())
            .collect()
    } else {
        let mut r = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        r.deserialize().map(|rec| rec.ok()).collect()
    };

    let mut tickets = Vec::new();
    for rec in records {
        report.records += 1;
        match rec.and_then(|r| ticket_from_record(r, epoch, &mut report)) {
            Some(t) => tickets.push(t),
            None => report.malformed += 1,
        }
    }
    if report.records > 0 && report.malformed == report.records {
        return Err(Error::InvalidInput(format!(
            "{}: all {} ticket records are malformed",
            path.display(),
            report.records
        )));
    }
    if report.unrecognized_types > 0 {
        log::warn!(
            "{} ticket(s) with unrecognized failure types mapped to `other`",
            report.unrecognized_types
        );
    }
    let n = tickets.len();
    let tickets = earliest_per_serial(tickets);
    report.collapsed = n - tickets.len();
    Ok((tickets, report))
}

fn ticket_from_record(r: TicketRecord, epoch: NaiveDate, report: &mut TicketReport) -> Option<TicketEvent> {
    let serial = r.serial.filter(|s| !s.trim().is_empty())?;
    let day = match (r.day, r.date.as_deref()) {
        (Some(d), _) => d,
        (None, Some(s)) => (parse_date(s)? - epoch).num_days(),
        (None, None) => return None,
    };
    if day < 0 {
        return None;
    }
    let raw = r.failure_type.unwrap_or_default();
    let failure_type = FailureType::parse_loose(&raw).unwrap_or_else(|| {
        report.unrecognized_types += 1;
        FailureType::Other
    });
    Some(TicketEvent::new(serial.trim(), day, failure_type))
}
