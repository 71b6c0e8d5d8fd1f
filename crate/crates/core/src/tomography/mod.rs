//! Coincidence-count simulation and state/process reconstruction.
//!
//! Circular polarization convention: `|R⟩ = (|H⟩ + i|V⟩)/√2`,
//! `|L⟩ = (|H⟩ − i|V⟩)/√2`. Two-photon settings are written signal first.

mod histogram;
mod optimize;
mod qpt;
mod qst;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, DensityMatrix};
use crate::linalg::{c, kron, CMatrix, ONE, ZERO};

pub use histogram::{coincidence_histogram, Histogram, HistogramParams, HistogramResult, PeakEstimate, PeakMethod};
pub use optimize::{MleOptions, MleResult};
pub use qpt::{
    process_tomography, simulate_process_counts, ProcessData, ProcessInput, QptOptions, QptResult,
    SingleCount,
};
pub use qst::{linear_qst, linear_qst_with, mle_qst, mle_qst_with, LinearEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error("unknown polarization label {0:?}")]
    UnknownLabel(String),
    #[error("measurement settings are not informationally complete (rank {rank} < {needed})")]
    SingularDesign { rank: usize, needed: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("maximum likelihood did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Box<MleResult>,
    },
    #[error("process data inconsistent: residual {residual:.4} exceeds bound {bound}")]
    InconsistentData { residual: f64, bound: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// One of the six Pauli eigenstates used as analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Eigenstate {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Eigenstate {
    pub const ALL: [Eigenstate; 6] = [
        Eigenstate::H,
        Eigenstate::V,
        Eigenstate::D,
        Eigenstate::A,
        Eigenstate::R,
        Eigenstate::L,
    ];

    pub fn ket(self) -> [num_complex::Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Eigenstate::H => [ONE, ZERO],
            Eigenstate::V => [ZERO, ONE],
            Eigenstate::D => [c(s, 0.0), c(s, 0.0)],
            Eigenstate::A => [c(s, 0.0), c(-s, 0.0)],
            Eigenstate::R => [c(s, 0.0), c(0.0, s)],
            Eigenstate::L => [c(s, 0.0), c(0.0, -s)],
        }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(self) -> CMatrix {
        let v = DVector::from_column_slice(&self.ket());
        &v * v.adjoint()
    }

    pub fn state(self) -> DensityMatrix {
        DensityMatrix::pure(&self.ket()).expect("eigenstates are normalized")
    }

    pub fn label(self) -> char {
        match self {
            Eigenstate::H => 'H',
            Eigenstate::V => 'V',
            Eigenstate::D => 'D',
            Eigenstate::A => 'A',
            Eigenstate::R => 'R',
            Eigenstate::L => 'L',
        }
    }
}

impl fmt::Display for Eigenstate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl FromStr for Eigenstate {
    type Err = TomographyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H" | "h" => Ok(Eigenstate::H),
            "V" | "v" => Ok(Eigenstate::V),
            "D" | "d" => Ok(Eigenstate::D),
            "A" | "a" => Ok(Eigenstate::A),
            "R" | "r" => Ok(Eigenstate::R),
            "L" | "l" => Ok(Eigenstate::L),
            other => Err(TomographyError::UnknownLabel(other.to_string())),
        }
    }
}

/// Projector for a label such as `"R"`.
pub fn projector(label: &str) -> Result<CMatrix, TomographyError> {
    label.parse::<Eigenstate>().map(Eigenstate::projector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub signal: Eigenstate,
    pub idler: Eigenstate,
}

impl MeasurementSetting {
    pub fn new(signal: Eigenstate, idler: Eigenstate) -> Self {
        MeasurementSetting { signal, idler }
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.signal, self.idler)
    }

    /// `Π_signal ⊗ Π_idler`.
    pub fn projector(&self) -> CMatrix {
        kron(&self.signal.projector(), &self.idler.projector())
    }
}

impl FromStr for MeasurementSetting {
    type Err = TomographyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => Ok(MeasurementSetting::new(
                a.to_string().parse()?,
                b.to_string().parse()?,
            )),
            _ => Err(TomographyError::UnknownLabel(s.to_string())),
        }
    }
}

/// The standard minimal 16-setting two-photon design.
pub fn settings_16() -> Vec<MeasurementSetting> {
    [
        "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH", "DR", "DD", "RD", "HD", "VD", "VL", "HL",
        "RL",
    ]
    .iter()
    .map(|s| s.parse().expect("static labels"))
    .collect()
}

/// All 36 pairs of the six eigenstates.
pub fn settings_36() -> Vec<MeasurementSetting> {
    Eigenstate::ALL
        .iter()
        .flat_map(|&s| Eigenstate::ALL.iter().map(move |&i| MeasurementSetting::new(s, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SettingDesign {
    Minimal16,
    Full36,
}

impl SettingDesign {
    pub fn settings(self) -> Vec<MeasurementSetting> {
        match self {
            SettingDesign::Minimal16 => settings_16(),
            SettingDesign::Full36 => settings_36(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    pub counts: u64,
    /// Seconds.
    pub integration_time: f64,
    pub singles_signal: Option<u64>,
    pub singles_idler: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountModel {
    /// Poisson-distributed counts.
    Poisson,
    /// Expected counts rounded to the nearest integer.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams {
    /// Detected pairs per second with all analyzers open.
    pub pair_rate: f64,
    /// Seconds per setting.
    pub integration_time: f64,
    /// Accidental coincidences per second, independent of the setting.
    pub accidental_rate: f64,
    /// Uncorrelated singles per second added to each arm.
    pub singles_rate: f64,
    pub model: CountModel,
}

impl AcquisitionParams {
    pub fn poisson(pair_rate: f64, integration_time: f64) -> Self {
        AcquisitionParams {
            pair_rate,
            integration_time,
            accidental_rate: 0.0,
            singles_rate: 0.0,
            model: CountModel::Poisson,
        }
    }

    /// Noise-free counts at `10¹²` pairs per setting, fine enough that
    /// rounding does not show up at 1e-10.
    pub fn noiseless() -> Self {
        AcquisitionParams {
            pair_rate: 1e12,
            integration_time: 1.0,
            accidental_rate: 0.0,
            singles_rate: 0.0,
            model: CountModel::Expected,
        }
    }

    fn validate(&self) -> Result<(), TomographyError> {
        let ok = self.pair_rate > 0.0
            && self.integration_time > 0.0
            && self.accidental_rate >= 0.0
            && self.singles_rate >= 0.0
            && self.pair_rate.is_finite()
            && self.integration_time.is_finite();
        if ok {
            Ok(())
        } else {
            Err(TomographyError::InvalidParameter(format!("{self:?}")))
        }
    }

    pub(crate) fn accidentals(&self) -> f64 {
        self.accidental_rate * self.integration_time
    }
}

/// Draws a count with the given mean.
pub(crate) fn draw(mean: f64, model: CountModel, rng: &mut ChaCha8Rng) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    match model {
        CountModel::Expected => mean.round() as u64,
        CountModel::Poisson => Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0),
    }
}

/// Coincidences `Poisson(pair_rate·T·Tr[(Π_s⊗Π_i)ρ] + accidental_rate·T)` per
/// setting, reproducible for a given seed.
pub fn simulate_counts(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    params: &AcquisitionParams,
    seed: u64,
) -> Result<Vec<CountRecord>, TomographyError> {
    params.validate()?;
    if rho.dim() != 4 {
        return Err(ChannelError::DimensionMismatch(rho.dim(), 4).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.pair_rate * params.integration_time;
    let signal_rho = rho.signal_state()?;
    let idler_rho = rho.idler_state()?;
    settings
        .iter()
        .map(|s| {
            let p = rho.expectation(&s.projector())?.clamp(0.0, 1.0);
            let counts = draw(n * p + params.accidentals(), params.model, &mut rng);
            let extra = params.singles_rate * params.integration_time;
            let ps = signal_rho.expectation(&s.signal.projector())?;
            let pi = idler_rho.expectation(&s.idler.projector())?;
            // singles include the heralded coincidences plus uncorrelated light
            let singles_signal = counts + draw(n * (ps - p).max(0.0) + extra, params.model, &mut rng);
            let singles_idler = counts + draw(n * (pi - p).max(0.0) + extra, params.model, &mut rng);
            Ok(CountRecord {
                setting: *s,
                counts,
                integration_time: params.integration_time,
                singles_signal: Some(singles_signal),
                singles_idler: Some(singles_idler),
            })
        })
        .collect()
}

/// Reads the record CSV layout
/// `setting_signal,setting_idler,counts,integration_time,singles_s,singles_i`.
pub fn read_records<R: std::io::Read>(reader: R) -> Result<Vec<CountRecord>, TomographyError> {
    #[derive(Deserialize)]
    struct Row {
        setting_signal: String,
        setting_idler: String,
        counts: u64,
        integration_time: f64,
        singles_s: Option<u64>,
        singles_i: Option<u64>,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    rdr.deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| TomographyError::DegenerateData(e.to_string()))?;
            Ok(CountRecord {
                setting: MeasurementSetting::new(row.setting_signal.parse()?, row.setting_idler.parse()?),
                counts: row.counts,
                integration_time: row.integration_time,
                singles_signal: row.singles_s,
                singles_idler: row.singles_i,
            })
        })
        .collect()
}

pub fn write_records<W: std::io::Write>(writer: W, records: &[CountRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "setting_signal",
        "setting_idler",
        "counts",
        "integration_time",
        "singles_s",
        "singles_i",
    ])?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.setting.signal.to_string(),
            r.setting.idler.to_string(),
            r.counts.to_string(),
            r.integration_time.to_string(),
            opt(r.singles_signal),
            opt(r.singles_idler),
        ])?;
    }
    w.flush()?;
    Ok(())
}
