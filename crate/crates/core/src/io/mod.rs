//! Run configuration and file formats used by the command-line front end.
//!
//! A run is described by one TOML file with a section per module. Relative
//! paths inside it resolve against the directory holding the file.

mod export;
mod svg;

pub use export::{
    comment_header, format_uncertainty, write_delay_table, write_histogram, write_histogram_overlay, write_json,
    write_trace_csv, DelayRow, TRACE_COLUMNS,
};
pub use svg::{SvgCircle, SvgScene};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::delay::{CoatingCurve, FiberParams};
use crate::geometry::{CellConfig, Injection, QParam};
use crate::tomography::{
    AcquisitionParams, CountModel, HistogramParams, MleOptions, QptOptions, SettingDesign,
};

/// Reflectance curve shipped with the crate, used when no `coating_csv` is set.
pub const BUILTIN_COATING_CSV: &str = include_str!("../../data/coating.csv");

/// Reference run configuration shipped with the crate.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../data/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config field `{field}`: cannot read {path}: {reason}")]
    MissingFile {
        field: String,
        path: PathBuf,
        reason: String,
    },
    #[error("{operation} is stochastic but no seed is configured (set `{field}` or pass --seed)")]
    MissingSeed {
        operation: &'static str,
        field: &'static str,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn output(path: &Path, source: std::io::Error) -> Self {
        ConfigError::Output {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Which exit-pupil placement a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    /// Ring step `i`; the exit pupil is rotated onto arrival `6i + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting_i: Option<usize>,
    /// Explicit exit-pupil azimuth in degrees, instead of `setting_i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_azimuth: Option<f64>,
    #[serde(default = "default_i_max")]
    pub i_max: usize,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    /// Spectral width used for the time-bandwidth product.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_nm: f64,
    /// Scattering and other loss per reflection on top of the coating.
    #[serde(default)]
    pub excess_loss: f64,
    /// Extra delay per ring step on top of the geometric `6·d/c`, for
    /// reconciling with measured step sizes; reported as a separate column.
    #[serde(default)]
    pub step_offset_ns: f64,
}

fn default_i_max() -> usize {
    63
}
fn default_wavelength() -> f64 {
    565.0
}
fn default_bandwidth() -> f64 {
    60.0
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig {
            setting_i: Some(default_i_max()),
            exit_azimuth: None,
            i_max: default_i_max(),
            wavelength_nm: default_wavelength(),
            bandwidth_nm: default_bandwidth(),
            excess_loss: 0.0,
            step_offset_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Detected pairs per second with analyzers open.
    #[serde(default = "default_pair_rate")]
    pub pair_rate: f64,
    /// Seconds per setting.
    #[serde(default = "default_one")]
    pub integration_time: f64,
    #[serde(default)]
    pub accidental_rate: f64,
    #[serde(default)]
    pub singles_rate: f64,
    #[serde(default = "default_model")]
    pub model: CountModel,
    #[serde(default = "default_design")]
    pub design: SettingDesign,
    /// Maximum-likelihood tolerances (`accidental_rate` is taken from above).
    #[serde(default)]
    pub mle: MleOptions,
    #[serde(default = "default_residual")]
    pub residual_bound: f64,
    /// Re-simulations from the reconstruction used to quote uncertainties.
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

fn default_pair_rate() -> f64 {
    1e4
}
fn default_one() -> f64 {
    1.0
}
fn default_model() -> CountModel {
    CountModel::Poisson
}
fn default_design() -> SettingDesign {
    SettingDesign::Minimal16
}
fn default_resamples() -> usize {
    20
}
fn default_residual() -> f64 {
    QptOptions::default().residual_bound
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            seed: None,
            pair_rate: default_pair_rate(),
            integration_time: default_one(),
            accidental_rate: 0.0,
            singles_rate: 0.0,
            model: default_model(),
            design: default_design(),
            mle: MleOptions::default(),
            residual_bound: default_residual(),
            resamples: default_resamples(),
        }
    }
}

impl TomographyConfig {
    pub fn acquisition(&self) -> AcquisitionParams {
        AcquisitionParams {
            pair_rate: self.pair_rate,
            integration_time: self.integration_time,
            accidental_rate: self.accidental_rate,
            singles_rate: self.singles_rate,
            model: self.model,
        }
    }

    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            accidental_rate: self.accidental_rate,
            ..self.mle
        }
    }

    pub fn qpt_options(&self) -> QptOptions {
        QptOptions {
            mle: self.mle_options(),
            residual_bound: self.residual_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_jitter")]
    pub jitter_ps: f64,
    #[serde(default = "default_events")]
    pub n_events: usize,
    #[serde(default = "default_bin")]
    pub bin_width_ps: f64,
    #[serde(default)]
    pub systemic_offset_ns: f64,
    /// Ring steps overlaid in one histogram file.
    #[serde(default = "default_overlay")]
    pub overlay_settings: Vec<usize>,
}

fn default_jitter() -> f64 {
    450.0
}
fn default_events() -> usize {
    100_000
}
fn default_bin() -> f64 {
    50.0
}
fn default_overlay() -> Vec<usize> {
    vec![3, 32, 63]
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            seed: None,
            jitter_ps: default_jitter(),
            n_events: default_events(),
            bin_width_ps: default_bin(),
            systemic_offset_ns: 0.0,
            overlay_settings: default_overlay(),
        }
    }
}

impl HistogramConfig {
    pub fn params(&self, true_delay_ns: f64, seed: u64) -> HistogramParams {
        HistogramParams {
            true_delay_ns,
            jitter_ps: self.jitter_ps,
            n_events: self.n_events,
            bin_width_ps: self.bin_width_ps,
            systemic_offset_ns: self.systemic_offset_ns,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    #[serde(default = "default_ull")]
    pub ull: FiberParams,
    #[serde(default = "default_visible")]
    pub visible: FiberParams,
    /// Upper end of the delay axis of the comparison curve.
    #[serde(default = "default_max_delay")]
    pub max_delay_ns: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_ull() -> FiberParams {
    FiberParams::ULL
}
fn default_visible() -> FiberParams {
    FiberParams::VISIBLE_SM
}
fn default_max_delay() -> f64 {
    700.0
}
fn default_points() -> usize {
    141
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig {
            ull: default_ull(),
            visible: default_visible(),
            max_delay_ns: default_max_delay(),
            points: default_points(),
        }
    }
}

/// Gaussian input beam; when present, traces carry spot radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    /// 1/e² waist radius.
    pub waist_mm: f64,
    /// Distance from the entry pupil forward to the waist.
    #[serde(default)]
    pub waist_distance_mm: f64,
}

impl BeamConfig {
    pub fn q_at_entry(&self, wavelength_nm: f64) -> QParam {
        QParam::from_waist(self.waist_mm, wavelength_nm, -self.waist_distance_mm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

/// Everything a CLI run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cell: CellConfig,
    pub injection: Injection,
    /// Reflectance CSV (`wavelength_nm,reflectance`); the built-in curve when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coating_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamConfig>,
    #[serde(default)]
    pub delay: DelayConfig,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub tomography: TomographyConfig,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub fiber: FiberConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// `[cell]` and `[injection]` sections alone, as written by the injection search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellFragment {
    pub cell: CellConfig,
    pub injection: Injection,
}

impl RunConfig {
    /// The reference configuration shipped with the crate.
    pub fn reference() -> Self {
        Self::parse(DEFAULT_CONFIG_TOML, "<builtin>").expect("built-in config parses")
    }

    /// Parses TOML text; `origin` labels diagnostics. Relative paths are kept
    /// as written.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| parse_error(text, origin, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a file, resolving relative paths against
    /// its directory and checking that referenced files parse.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::MissingFile {
            field: "--config".into(),
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(csv) = &cfg.coating_csv {
            if csv.is_relative() {
                cfg.coating_csv = Some(base.join(csv));
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        cfg.coating()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.cell
            .validate()
            .map_err(|e| ConfigError::invalid("cell", e.to_string()))?;
        let d = &self.delay;
        if d.setting_i.is_some() && d.exit_azimuth.is_some() {
            return Err(ConfigError::invalid(
                "delay",
                "set either `setting_i` or `exit_azimuth`, not both",
            ));
        }
        if let Some(i) = d.setting_i {
            if i > d.i_max {
                return Err(ConfigError::invalid(
                    "delay.setting_i",
                    format!("{i} exceeds delay.i_max = {}", d.i_max),
                ));
            }
        }
        if !(d.wavelength_nm > 0.0) {
            return Err(ConfigError::invalid("delay.wavelength_nm", "must be positive"));
        }
        if !(d.bandwidth_nm >= 0.0) {
            return Err(ConfigError::invalid("delay.bandwidth_nm", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&d.excess_loss) {
            return Err(ConfigError::invalid("delay.excess_loss", "must lie in [0, 1)"));
        }
        let t = &self.tomography;
        if !(t.pair_rate > 0.0 && t.integration_time > 0.0) {
            return Err(ConfigError::invalid(
                "tomography",
                "pair_rate and integration_time must be positive",
            ));
        }
        if !(t.accidental_rate >= 0.0 && t.singles_rate >= 0.0) {
            return Err(ConfigError::invalid("tomography", "rates must be non-negative"));
        }
        let h = &self.histogram;
        if !(h.jitter_ps >= 0.0 && h.bin_width_ps > 0.0 && h.n_events > 0) {
            return Err(ConfigError::invalid(
                "histogram",
                "need jitter_ps ≥ 0, bin_width_ps > 0 and n_events ≥ 1",
            ));
        }
        if let Some(b) = &self.beam {
            if !(b.waist_mm > 0.0 && b.waist_distance_mm.is_finite()) {
                return Err(ConfigError::invalid("beam.waist_mm", "must be positive"));
            }
        }
        if !(self.fiber.max_delay_ns > 0.0 && self.fiber.points >= 2) {
            return Err(ConfigError::invalid("fiber", "need max_delay_ns > 0 and points ≥ 2"));
        }
        Ok(())
    }

    pub fn coating(&self) -> Result<CoatingCurve, ConfigError> {
        match &self.coating_csv {
            Some(p) => CoatingCurve::from_csv_path(p).map_err(|e| ConfigError::MissingFile {
                field: "coating_csv".into(),
                path: p.clone(),
                reason: e.to_string(),
            }),
            None => CoatingCurve::from_csv(BUILTIN_COATING_CSV.as_bytes())
                .map_err(|e| ConfigError::invalid("coating_csv", e.to_string())),
        }
    }

    /// Seed for tomography runs: the override, else the configured one.
    pub fn tomography_seed(&self, flag: Option<u64>) -> Result<u64, ConfigError> {
        flag.or(self.tomography.seed).ok_or(ConfigError::MissingSeed {
            operation: "count simulation",
            field: "tomography.seed",
        })
    }

    pub fn histogram_seed(&self, flag: Option<u64>) -> Result<u64, ConfigError> {
        flag.or(self.histogram.seed).ok_or(ConfigError::MissingSeed {
            operation: "histogram simulation",
            field: "histogram.seed",
        })
    }
}

impl CellFragment {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fragment serializes")
    }
}

fn parse_error(text: &str, origin: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e
        .span()
        .map(|s| line_col(text, s.start))
        .unwrap_or((0, 0));
    ConfigError::Parse {
        path: origin.to_string(),
        line,
        column,
        message: e.message().to_string(),
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
