//! Feature construction.
//!
//! Each basic attribute yields 26 columns: the value itself, its day-over-
//! day difference, and six statistics (mean, population standard
//! deviation, median, EWMA, sum, end minus start) over trailing windows of
//! 7 and 14 samples, computed for both the value and the difference.
//! Windows shorter than `w` at the start of a disk's history use whatever
//! history exists. Rows depend only on the current and earlier samples.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, Day, DiskSeries};
use crate::error::{Error, Result};
use crate::{exec, hashing, numstats};

pub const WINDOWS: [usize; 2] = [7, 14];
pub const STATISTICS: [&str; 6] = ["mean", "std", "median", "ewma", "sum", "range"];
pub const COLUMNS_PER_ATTRIBUTE: usize = 2 + 2 * WINDOWS.len() * STATISTICS.len();

const BINARY_MAGIC: &[u8; 8] = b"DPFEAT\0\0";
const BINARY_VERSION: u32 = 1;

pub fn column_names(basic: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(basic.len() * COLUMNS_PER_ATTRIBUTE);
    for attr in basic {
        names.push(attr.clone());
        names.push(format!("{attr}__diff"));
        for source in [attr.clone(), format!("{attr}__diff")] {
            for w in WINDOWS {
                for stat in STATISTICS {
                    names.push(format!("{source}__{stat}_{w}"));
                }
            }
        }
    }
    names
}

pub fn schema_hash(column_names: &[String]) -> u64 {
    hashing::sha256_u64(column_names.join("\n").as_bytes())
}

fn window_stats(window: &[f64], w: usize, out: &mut Vec<f64>) {
    let n = window.len() as f64;
    let sum: f64 = window.iter().sum();
    let mean = sum / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let ewma = numstats::ewma(window, numstats::ewma_alpha(w)).unwrap_or(0.0);
    let range = window[window.len() - 1] - window[0];
    out.extend_from_slice(&[mean, var.sqrt(), median, ewma, sum, range]);
}

/// Feature rows of one disk at the sample positions `positions`.
fn rows_at(series: &DiskSeries, attrs: &[usize], positions: &[usize]) -> Result<Vec<Vec<f64>>> {
    let columns: Vec<(Vec<f64>, Vec<f64>)> = attrs
        .iter()
        .map(|&a| {
            let values = series
                .samples
                .iter()
                .map(|s| {
                    s.values[a].ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "disk {} day {}: missing value; fill before featurizing",
                            series.serial, s.day
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut diffs = vec![0.0; values.len()];
            for i in 1..values.len() {
                diffs[i] = values[i] - values[i - 1];
            }
            Ok((values, diffs))
        })
        .collect::<Result<_>>()?;
    Ok(positions
        .iter()
        .map(|&p| {
            let mut row = Vec::with_capacity(attrs.len() * COLUMNS_PER_ATTRIBUTE);
            for (values, diffs) in &columns {
                row.push(values[p]);
                row.push(diffs[p]);
                for source in [values, diffs] {
                    for w in WINDOWS {
                        let start = (p + 1).saturating_sub(w);
                        window_stats(&source[start..=p], w, &mut row);
                    }
                }
            }
            row
        })
        .collect())
}

/// All feature rows of one filled series, one per sample.
pub fn build_features(series: &DiskSeries, attrs: &[usize]) -> Result<Vec<Vec<f64>>> {
    if attrs.is_empty() {
        return Err(Error::InvalidInput("no basic attributes to featurize".into()));
    }
    let all: Vec<usize> = (0..series.samples.len()).collect();
    rows_at(series, attrs, &all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    /// `(serial, day)` of each row, sorted.
    pub keys: Vec<(String, Day)>,
    /// Row-major, `keys.len() * column_names.len()` values.
    pub values: Vec<f64>,
    pub labels: Option<Vec<u8>>,
}

impl FeatureMatrix {
    pub fn empty(column_names: Vec<String>) -> Self {
        FeatureMatrix {
            column_names,
            keys: Vec::new(),
            values: Vec::new(),
            labels: None,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn schema_hash(&self) -> u64 {
        schema_hash(&self.column_names)
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            column_names: self.column_names.clone(),
            keys: rows.iter().map(|&r| self.keys[r].clone()).collect(),
            values,
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# schema_hash={:016x}", self.schema_hash()).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["serial".to_string(), "day".to_string()];
        if self.labels.is_some() {
            header.push("label".into());
        }
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for (i, (serial, day)) in self.keys.iter().enumerate() {
            let mut rec = vec![serial.clone(), day.to_string()];
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let declared = first
            .strip_prefix("# schema_hash=")
            .and_then(|h| u64::from_str_radix(h.trim(), 16).ok())
            .ok_or_else(|| Error::Format(format!("{}: missing schema hash line", path.display())))?;
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let has_labels = header.get(2).is_some_and(|h| h == "label");
        let skip = if has_labels { 3 } else { 2 };
        if header.len() < skip || header[0] != "serial" || header[1] != "day" {
            return Err(Error::Format(format!("{}: unexpected header", path.display())));
        }
        let column_names = header[skip..].to_vec();
        let found = schema_hash(&column_names);
        if found != declared {
            return Err(Error::SchemaMismatch {
                expected: declared,
                found,
            });
        }
        let mut m = FeatureMatrix::empty(column_names);
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let bad = |what: &str| Error::Format(format!("{}: bad {what}", path.display()));
            let day: Day = rec[1].parse().map_err(|_| bad("day"))?;
            m.keys.push((rec[0].to_string(), day));
            if has_labels {
                labels.push(rec[2].parse().map_err(|_| bad("label"))?);
            }
            for v in rec.iter().skip(skip) {
                m.values.push(v.parse().map_err(|_| bad("value"))?);
            }
        }
        if has_labels {
            m.labels = Some(labels);
        }
        Ok(m)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BINARY_MAGIC);
        buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.schema_hash().to_le_bytes());
        buf.extend_from_slice(&(self.n_rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n_cols() as u32).to_le_bytes());
        buf.push(u8::from(self.labels.is_some()));
        let put_str = |buf: &mut Vec<u8>, s: &str| {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        };
        for name in &self.column_names {
            put_str(&mut buf, name);
        }
        for (serial, day) in &self.keys {
            put_str(&mut buf, serial);
            buf.extend_from_slice(&day.to_le_bytes());
        }
        for c in 0..self.n_cols() {
            for r in 0..self.n_rows() {
                buf.extend_from_slice(&self.row(r)[c].to_le_bytes());
            }
        }
        if let Some(l) = &self.labels {
            buf.extend_from_slice(l);
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        BufWriter::new(file).write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<FeatureMatrix> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(8)? != BINARY_MAGIC {
            return Err(Error::Format(format!("{}: not a feature matrix", path.display())));
        }
        let version = r.u32()?;
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported feature matrix version {version}")));
        }
        let declared = r.u64()?;
        let n_rows = r.u64()? as usize;
        let n_cols = r.u32()? as usize;
        let has_labels = r.take(1)?[0] == 1;
        let column_names = (0..n_cols).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let found = schema_hash(&column_names);
        if found != declared {
            return Err(Error::SchemaMismatch {
                expected: declared,
                found,
            });
        }
        let keys = (0..n_rows)
            .map(|_| Ok((r.string()?, r.u64()? as i64)))
            .collect::<Result<Vec<_>>>()?;
        let mut values = vec![0.0; n_rows * n_cols];
        for c in 0..n_cols {
            for row in 0..n_rows {
                values[row * n_cols + c] = f64::from_bits(r.u64()?);
            }
        }
        let labels = if has_labels {
            Some(r.take(n_rows)?.to_vec())
        } else {
            None
        };
        Ok(FeatureMatrix {
            column_names,
            keys,
            values,
            labels,
        })
    }
}

pub(crate) struct ByteReader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8".into()))
    }
}

/// Features for the requested `(serial → days)` rows. Every requested day
/// must have a sample. Rows come out ordered by `(serial, day)`.
pub fn featurize(dataset: &Dataset, basic: &[String], rows: &BTreeMap<String, Vec<Day>>) -> Result<FeatureMatrix> {
    if basic.is_empty() {
        return Err(Error::InvalidInput("no basic attributes to featurize".into()));
    }
    let idx = dataset.attr_indices(basic)?;
    let jobs: Vec<(&String, Vec<Day>)> = rows
        .iter()
        .map(|(s, days)| {
            let mut d = days.clone();
            d.sort_unstable();
            d.dedup();
            (s, d)
        })
        .filter(|(_, d)| !d.is_empty())
        .collect();
    let parts = exec::try_map(&jobs, |(serial, days)| {
        let disk = dataset
            .disks
            .get(*serial)
            .ok_or_else(|| Error::InvalidInput(format!("unknown disk {serial}")))?;
        let positions = days
            .iter()
            .map(|d| {
                disk.samples
                    .binary_search_by_key(d, |s| s.day)
                    .map_err(|_| Error::InvalidInput(format!("disk {serial} has no sample on day {d}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows_at(disk, &idx, &positions)
    })?;
    let mut m = FeatureMatrix::empty(column_names(basic));
    for ((serial, days), part) in jobs.iter().zip(parts) {
        for (day, row) in days.iter().zip(part) {
            m.keys.push(((*serial).clone(), *day));
            m.values.extend(row);
        }
    }
    Ok(m)
}

/// Features for every sample in the dataset.
pub fn featurize_all(dataset: &Dataset, basic: &[String]) -> Result<FeatureMatrix> {
    let rows = dataset
        .disks
        .iter()
        .map(|(s, d)| (s.clone(), d.samples.iter().map(|x| x.day).collect()))
        .collect();
    featurize(dataset, basic, &rows)
}

/// Attributes with at least one value on every disk, in dataset order.
pub fn common_attributes(dataset: &Dataset) -> Vec<String> {
    (0..dataset.attributes.len())
        .filter(|&a| {
            !dataset.disks.is_empty()
                && dataset
                    .disks
                    .values()
                    .all(|d| d.samples.iter().any(|s| s.values[a].is_some()))
        })
        .map(|a| dataset.attributes[a].clone())
        .collect()
}
