//! Missing-day filling: local cubic spline (default), forward fill and
//! linear interpolation, with a maximum-gap drop rule.
//!
//! Each attribute of each disk is filled independently. For a gap between
//! two observed days the spline method takes the two nearest observed
//! samples on each side (four knots), fits a natural cubic spline through
//! them and evaluates it on the missing days. Open-ended gaps reuse the
//! first (or last) polynomial piece of the spline through the first (or
//! last) four samples. With fewer knots available the fit degrades to the
//! interpolating quadratic (three knots) or a line (two knots).

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Day, DiskSeries, SmartSample};
use crate::error::{Error, Result};
use crate::exec;

pub const DEFAULT_MAX_GAP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMethod {
    None,
    #[serde(alias = "ffill")]
    Forward,
    Linear,
    Spline,
}

impl std::str::FromStr for FillMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FillMethod::None),
            "ffill" | "forward" => Ok(FillMethod::Forward),
            "linear" => Ok(FillMethod::Linear),
            "spline" => Ok(FillMethod::Spline),
            _ => Err(Error::Config(format!("unknown fill method `{s}`"))),
        }
    }
}

impl std::fmt::Display for FillMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FillMethod::None => "none",
            FillMethod::Forward => "ffill",
            FillMethod::Linear => "linear",
            FillMethod::Spline => "spline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDisk {
    pub serial: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillReport {
    pub method: FillMethod,
    /// Days on which at least one value was filled.
    pub filled_days: usize,
    pub dropped_disks: Vec<DroppedDisk>,
    /// Filled days outside the observed range of some attribute.
    pub extrapolated_days: usize,
    /// (disk, attribute) pairs with no observation at all; left missing.
    pub unfillable_attributes: usize,
}

impl FillReport {
    pub fn new(method: FillMethod) -> Self {
        FillReport {
            method,
            filled_days: 0,
            dropped_disks: Vec::new(),
            extrapolated_days: 0,
            unfillable_attributes: 0,
        }
    }

    fn absorb(&mut self, other: FillReport) {
        self.filled_days += other.filled_days;
        self.extrapolated_days += other.extrapolated_days;
        self.unfillable_attributes += other.unfillable_attributes;
        self.dropped_disks.extend(other.dropped_disks);
    }
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalSpline {
    /// Requires at least two knots with strictly increasing `xs`.
    pub fn fit(xs: &[f64], ys: &[f64]) -> Option<NaturalSpline> {
        let n = xs.len();
        if n < 2 || ys.len() != n || xs.windows(2).any(|w| w[0] >= w[1]) {
            return None;
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let k = n - 2;
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Some(NaturalSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        })
    }

    /// Evaluates the spline; outside the knot range the first or last
    /// polynomial piece is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let h = x1 - x0;
        let a = x1 - x;
        let b = x - x0;
        m0 * a * a * a / (6.0 * h)
            + m1 * b * b * b / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b
    }
}

/// Interpolating polynomial through up to three knots (Lagrange form).
fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut term = ys[i];
        for j in 0..xs.len() {
            if i != j {
                term *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += term;
    }
    acc
}

/// Evaluates the local interpolant through `knots` (sorted by x) at `x`.
fn local_fit(knots: &[(f64, f64)], x: f64) -> f64 {
    let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
    let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
    match knots.len() {
        0 => f64::NAN,
        1 => ys[0],
        2 | 3 => lagrange(&xs, &ys, x),
        _ => NaturalSpline::fit(&xs, &ys).map_or(f64::NAN, |s| s.eval(x)),
    }
}

struct AttrFill {
    values: Vec<f64>,
    filled: Vec<bool>,
    extrapolated: Vec<bool>,
}

/// Fills one attribute over `[start, end]`.
///
/// `observed` holds `(day, value)` sorted by day. Fails with a reason when a
/// gap exceeds `max_gap` (the caller drops the series).
fn fill_attribute(
    observed: &[(Day, f64)],
    start: Day,
    end: Day,
    method: FillMethod,
    max_gap: usize,
) -> std::result::Result<AttrFill, String> {
    let len = (end - start + 1) as usize;
    let mut out = AttrFill {
        values: vec![f64::NAN; len],
        filled: vec![false; len],
        extrapolated: vec![false; len],
    };
    for &(d, v) in observed {
        out.values[(d - start) as usize] = v;
    }

    // Gap detection, including open-ended runs.
    let mut prev: Option<Day> = None;
    let mut runs: Vec<(Day, Day)> = Vec::new();
    for &(d, _) in observed {
        let gap_start = prev.map_or(start, |p| p + 1);
        if d > gap_start {
            runs.push((gap_start, d - 1));
        }
        prev = Some(d);
    }
    let last = prev.expect("observed non-empty");
    if last < end {
        runs.push((last + 1, end));
    }
    if let Some(&(a, b)) = runs.iter().find(|(a, b)| (b - a + 1) as usize > max_gap) {
        return Err(format!(
            "gap of {} days ({a}..={b}) exceeds max_gap {max_gap}",
            b - a + 1
        ));
    }
    if runs.is_empty() {
        return Ok(out);
    }
    if observed.len() < 2 {
        return Err("fewer than 2 observed samples with missing days".into());
    }

    let first_obs = observed[0].0;
    let pos = |d: Day| observed.partition_point(|&(x, _)| x < d);
    for (a, b) in runs {
        // observations strictly before the gap
        let left = pos(a);
        for d in a..=b {
            let v = match method {
                FillMethod::None => unreachable!("None never fills"),
                FillMethod::Forward => {
                    if left == 0 {
                        observed[0].1
                    } else {
                        observed[left - 1].1
                    }
                }
                FillMethod::Linear => {
                    let knots = nearest_knots(observed, left, 1);
                    local_fit(&to_f64(&knots), d as f64)
                }
                FillMethod::Spline => {
                    let knots = nearest_knots(observed, left, 2);
                    local_fit(&to_f64(&knots), d as f64)
                }
            };
            let i = (d - start) as usize;
            out.values[i] = v.max(0.0);
            out.filled[i] = true;
            out.extrapolated[i] = d < first_obs || d > last;
        }
    }
    Ok(out)
}

/// Up to `per_side` observations on each side of the split point `left`
/// (the count of observations before the gap). For open-ended gaps all
/// knots come from the one available side, `2 * per_side` of them.
fn nearest_knots(observed: &[(Day, f64)], left: usize, per_side: usize) -> Vec<(Day, f64)> {
    let n = observed.len();
    if left == 0 {
        return observed[..n.min(2 * per_side)].to_vec();
    }
    if left == n {
        return observed[n.saturating_sub(2 * per_side)..].to_vec();
    }
    let lo = left.saturating_sub(per_side);
    let hi = (left + per_side).min(n);
    observed[lo..hi].to_vec()
}

fn to_f64(knots: &[(Day, f64)]) -> Vec<(f64, f64)> {
    knots.iter().map(|&(d, v)| (d as f64, v)).collect()
}

/// Fills a series over its own span `[first_day, last_day]`.
pub fn fill_series(series: &DiskSeries, method: FillMethod, max_gap: usize) -> (Option<DiskSeries>, FillReport) {
    fill_series_over(series, method, max_gap, series.first_day(), series.last_day())
}

/// Fills a series over `[start, end]`, which must contain its samples.
/// Days before the first or after the last sample are extrapolated.
pub fn fill_series_over(
    series: &DiskSeries,
    method: FillMethod,
    max_gap: usize,
    start: Day,
    end: Day,
) -> (Option<DiskSeries>, FillReport) {
    let mut report = FillReport::new(method);
    let start = start.min(series.first_day());
    let end = end.max(series.last_day());
    if method == FillMethod::None {
        return (Some(series.clone()), report);
    }
    let n_attr = series.samples.first().map_or(0, |s| s.values.len());
    let len = (end - start + 1) as usize;
    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; n_attr]; len];
    for s in &series.samples {
        grid[(s.day - start) as usize].clone_from(&s.values);
    }
    let mut day_filled = vec![false; len];
    let mut day_extrapolated = vec![false; len];

    #[allow(clippy::needless_range_loop)]
    for a in 0..n_attr {
        let observed: Vec<(Day, f64)> = series
            .samples
            .iter()
            .filter_map(|s| s.values[a].map(|v| (s.day, v)))
            .collect();
        if observed.is_empty() {
            report.unfillable_attributes += 1;
            continue;
        }
        match fill_attribute(&observed, start, end, method, max_gap) {
            Ok(f) => {
                for i in 0..len {
                    if f.filled[i] {
                        grid[i][a] = Some(f.values[i]);
                        day_filled[i] = true;
                        day_extrapolated[i] |= f.extrapolated[i];
                    }
                }
            }
            Err(reason) => {
                report.dropped_disks.push(DroppedDisk {
                    serial: series.serial.clone(),
                    reason,
                });
                return (None, report);
            }
        }
    }

    report.filled_days = day_filled.iter().filter(|&&f| f).count();
    report.extrapolated_days = day_extrapolated.iter().filter(|&&f| f).count();
    let samples = grid
        .into_iter()
        .enumerate()
        .filter(|(_, values)| values.iter().any(Option::is_some))
        .map(|(i, values)| SmartSample::new(start + i as Day, values))
        .collect();
    let filled = DiskSeries {
        serial: series.serial.clone(),
        model: series.model.clone(),
        vendor: series.vendor.clone(),
        samples,
    };
    (Some(filled), report)
}

/// Options controlling which range each disk is filled over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FillExtent {
    /// Extend failed disks up to their ticket day.
    pub to_ticket_day: bool,
}

impl Default for FillExtent {
    fn default() -> Self {
        FillExtent { to_ticket_day: true }
    }
}

pub fn fill_dataset(dataset: &Dataset, method: FillMethod, max_gap: usize) -> Result<(Dataset, FillReport)> {
    fill_dataset_with(dataset, method, max_gap, FillExtent::default())
}

/// Applies [`fill_series_over`] to every disk. Failed disks are filled up
/// to their ticket day when `extent.to_ticket_day` is set; other disks over
/// their own span. Dropped disks lose their tickets too.
pub fn fill_dataset_with(
    dataset: &Dataset,
    method: FillMethod,
    max_gap: usize,
    extent: FillExtent,
) -> Result<(Dataset, FillReport)> {
    if max_gap == 0 {
        return Err(Error::Config("max_gap must be at least 1".into()));
    }
    let mut report = FillReport::new(method);
    if method == FillMethod::None {
        return Ok((dataset.clone(), report));
    }
    let disks: Vec<&DiskSeries> = dataset.disks.values().collect();
    let results = exec::map(&disks, |d| {
        let end = match dataset.ticket(&d.serial) {
            Some(t) if extent.to_ticket_day => t.day,
            _ => d.last_day(),
        };
        fill_series_over(d, method, max_gap, d.first_day(), end)
    });
    let mut kept = Vec::with_capacity(results.len());
    for (series, r) in results {
        report.absorb(r);
        kept.extend(series);
    }
    let kept_serials: std::collections::BTreeSet<&str> = kept.iter().map(|d| d.serial.as_str()).collect();
    let tickets: Vec<_> = dataset
        .tickets
        .values()
        .filter(|t| kept_serials.contains(t.serial.as_str()))
        .cloned()
        .collect();
    let out = Dataset::new(
        dataset.attributes.clone(),
        kept,
        tickets,
        dataset.epoch,
        dataset.span_days,
    )?;
    Ok((out, report))
}
