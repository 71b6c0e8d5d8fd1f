//! CSV and JSON writers. Every file starts with `#` comment lines naming what
//! it reproduces; CSV readers in this crate skip them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::ConfigError;
use crate::geometry::TracePath;
use crate::tomography::Histogram;

pub const TRACE_COLUMNS: [&str; 10] = [
    "pass_index",
    "mirror_id",
    "surface_id",
    "x",
    "y",
    "z",
    "radial_dist",
    "cumulative_path",
    "spot_radius",
    "arrival",
];

/// `# key: value` lines.
pub fn comment_header(lines: &[(&str, String)]) -> String {
    lines.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, ConfigError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ConfigError::output(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> ConfigError {
    ConfigError::output(path, std::io::Error::other(e.to_string()))
}

fn finish<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<(), ConfigError> {
    w.into_inner()
        .map_err(|e| ConfigError::output(path, std::io::Error::other(e.to_string())))?
        .flush()
        .map_err(|e| ConfigError::output(path, e))
}

fn start_csv(path: &Path, header: &str) -> Result<csv::Writer<BufWriter<File>>, ConfigError> {
    let mut f = create(path)?;
    f.write_all(header.as_bytes())
        .map_err(|e| ConfigError::output(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// One row per reflection. `arrival` is the 1-based arrival index on the
/// row's mirror.
pub fn write_trace_csv(path: &Path, trace: &TracePath, header: &str) -> Result<(), ConfigError> {
    let mut w = start_csv(path, header)?;
    w.write_record(TRACE_COLUMNS).map_err(|e| csv_err(path, e))?;
    let mut arrivals = BTreeMap::new();
    for s in &trace.spots {
        let arrival = arrivals.entry(s.mirror_id).or_insert(0usize);
        *arrival += 1;
        w.write_record([
            s.pass_index.to_string(),
            s.mirror_id.number().to_string(),
            s.surface_id.name().to_string(),
            s.point[0].to_string(),
            s.point[1].to_string(),
            s.point[2].to_string(),
            s.radial_dist.to_string(),
            s.cumulative_path.to_string(),
            s.spot_radius.map(|r| r.to_string()).unwrap_or_default(),
            arrival.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Row of the delay-table CSV. Measured columns are filled where the
/// reflection count matches a measured operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRow {
    pub i: usize,
    pub n_spots: Option<usize>,
    pub delay_ns: Option<f64>,
    /// Geometric delay change from the previous row.
    pub increment_ns: Option<f64>,
    /// `delay_ns + i·step_offset_ns`.
    pub calibrated_delay_ns: Option<f64>,
    pub exit_azimuth_deg: Option<f64>,
    pub total_path_mm: Option<f64>,
    pub coating_reflectance: Option<f64>,
    pub predicted_efficiency: Option<f64>,
    pub measured_delay_ns: Option<f64>,
    pub measured_efficiency: Option<f64>,
    pub measured_reflectance: Option<f64>,
    /// `measured_reflectance^n_spots`.
    pub efficiency_from_measured_reflectance: Option<f64>,
    /// `ok` or the error that stopped the row.
    pub status: String,
}

pub fn write_delay_table(path: &Path, rows: &[DelayRow], header: &str) -> Result<(), ConfigError> {
    let mut w = start_csv(path, header)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// `bin_start_ns,count`.
pub fn write_histogram(path: &Path, h: &Histogram, header: &str) -> Result<(), ConfigError> {
    let mut w = start_csv(path, header)?;
    w.write_record(["bin_start_ns", "count"]).map_err(|e| csv_err(path, e))?;
    for (t, n) in h.rows() {
        w.write_record([t.to_string(), n.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Several histograms on one bin grid: `bin_start_ns` then one count column
/// per label. Only bins inside at least one histogram's range are written.
/// All histograms must share the bin width.
pub fn write_histogram_overlay(
    path: &Path,
    hists: &[(String, Histogram)],
    header: &str,
) -> Result<(), ConfigError> {
    let width = hists.first().map_or(1.0, |(_, h)| h.bin_width_ps);
    if hists.iter().any(|(_, h)| h.bin_width_ps != width) {
        return Err(ConfigError::Invalid {
            field: "histogram.bin_width_ps".into(),
            reason: "overlay needs a common bin width".into(),
        });
    }
    // global bin index -> counts per column
    let width_ns = width * 1e-3;
    let mut grid: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    for (col, (_, h)) in hists.iter().enumerate() {
        let first = (h.origin_ns / width_ns).round() as i64;
        for (k, &n) in h.bins.iter().enumerate() {
            grid.entry(first + k as i64).or_insert_with(|| vec![0; hists.len()])[col] = n;
        }
    }
    let mut w = start_csv(path, header)?;
    let mut head = vec!["bin_start_ns".to_string()];
    head.extend(hists.iter().map(|(l, _)| l.clone()));
    w.write_record(&head).map_err(|e| csv_err(path, e))?;
    for (k, counts) in grid {
        let mut rec = vec![(k as f64 * width_ns).to_string()];
        rec.extend(counts.iter().map(|n| n.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// `value(u)` with one significant digit of uncertainty, e.g. `0.996(9)`;
/// six decimals when the uncertainty is zero.
pub fn format_uncertainty(value: f64, sigma: f64) -> String {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return format!("{value:.6}");
    }
    let mut decimals = (-sigma.log10().floor()).max(0.0) as usize;
    let mut digit = (sigma * 10f64.powi(decimals as i32)).round();
    if digit >= 10.0 && decimals > 0 {
        decimals -= 1;
        digit = (sigma * 10f64.powi(decimals as i32)).round();
    }
    format!("{value:.decimals$}({digit})")
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ConfigError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)
        .map_err(|e| ConfigError::output(path, std::io::Error::other(e)))?;
    f.write_all(b"\n")
        .and_then(|_| f.flush())
        .map_err(|e| ConfigError::output(path, e))
}
