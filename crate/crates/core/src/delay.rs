//! Delay times, retrieval efficiency and the capacity figures derived from them.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    trace_cell, trace_cell_with, CellConfig, ExitEvent, GeometryError, Injection,
    PatternTemplate, PupilMode, TracePath,
};
use crate::{SPEED_OF_LIGHT_MM_PER_NS, SPEED_OF_LIGHT_M_PER_S};

#[derive(Debug, Error)]
pub enum DelayError {
    #[error("path did not exit through the exit pupil ({0})")]
    NoExit(&'static str),
    #[error("wavelength {wavelength} nm outside coating data [{lo}, {hi}] nm")]
    OutOfBand { wavelength: f64, lo: f64, hi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid coating curve: {0}")]
    InvalidCurve(String),
    #[error("setting i = {i}: expected exit at pass {expected}, trace ended with {got}")]
    WrongExit { i: usize, expected: usize, got: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Measured operating points of the reference cell:
/// (reflections, delay ns, retrieval efficiency, per-reflection reflectance).
pub const REFERENCE_MEASUREMENTS: [(usize, f64, f64, f64); 6] = [
    (18, 36.0, 0.99680, 0.99982),
    (42, 77.0, 0.99370, 0.99985),
    (192, 351.0, 0.98060, 0.99989),
    (204, 370.0, 0.97480, 0.99988),
    (228, 411.0, 0.96770, 0.99986),
    (378, 687.0, 0.95390, 0.99988),
];

/// Entry-to-exit time of flight in seconds.
pub fn delay_time(path: &TracePath) -> Result<f64, DelayError> {
    match path.exit_event {
        ExitEvent::ExitedThroughPupil { .. } => Ok(path.total_path / SPEED_OF_LIGHT_M_PER_S / 1e3),
        ref other => Err(DelayError::NoExit(other.kind())),
    }
}

pub fn delay_time_ns(path: &TracePath) -> Result<f64, DelayError> {
    delay_time(path).map(|s| s * 1e9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySetting {
    pub i: usize,
    pub n_spots: usize,
    pub delay_ns: f64,
    pub exit_azimuth: f64,
    pub total_path_mm: f64,
}

/// One row per ring step `i = 0..=i_max`, with the exit pupil rotated onto
/// arrival `6i + 1`.
pub fn delay_table(
    config: &CellConfig,
    injection: &Injection,
    i_max: usize,
) -> Vec<Result<DelaySetting, DelayError>> {
    delay_table_with(config, injection, i_max, &PatternTemplate::default())
}

pub fn delay_table_with(
    config: &CellConfig,
    injection: &Injection,
    i_max: usize,
    template: &PatternTemplate,
) -> Vec<Result<DelaySetting, DelayError>> {
    let last = template.cycle_len * i_max + template.exit_index;
    let probe = trace_cell_with(config, &config.entry_ray(injection), last, PupilMode::EntryOnly);
    (0..=i_max)
        .map(|i| {
            let probe = probe.as_ref().map_err(|e| DelayError::Geometry(e.clone()))?;
            delay_setting(config, injection, probe, i, template)
        })
        .collect()
}

/// Exit azimuth (degrees) selecting ring step `i`, read from a trace run
/// with the exit pupil closed.
pub fn exit_azimuth_for(probe: &TracePath, i: usize, template: &PatternTemplate) -> Option<f64> {
    let k = template.cycle_len * i + template.exit_index;
    probe
        .spots
        .iter()
        .find(|s| s.pass_index == k)
        .map(|s| s.point[1].atan2(s.point[0]).to_degrees())
}

/// Copy of `config` with the exit pupil rotated onto ring step `i`.
pub fn cell_for_setting(
    config: &CellConfig,
    injection: &Injection,
    i: usize,
    template: &PatternTemplate,
) -> Result<CellConfig, DelayError> {
    let expected = template.cycle_len * i + template.exit_index;
    let probe = trace_cell_with(config, &config.entry_ray(injection), expected, PupilMode::EntryOnly)?;
    let azimuth = exit_azimuth_for(&probe, i, template).ok_or_else(|| DelayError::WrongExit {
        i,
        expected,
        got: probe.exit_event.kind().to_string(),
    })?;
    let mut cfg = config.clone();
    cfg.pupil_azimuth_exit = azimuth;
    Ok(cfg)
}

fn delay_setting(
    config: &CellConfig,
    injection: &Injection,
    probe: &TracePath,
    i: usize,
    template: &PatternTemplate,
) -> Result<DelaySetting, DelayError> {
    let expected = template.cycle_len * i + template.exit_index;
    let azimuth = exit_azimuth_for(probe, i, template).ok_or_else(|| DelayError::WrongExit {
        i,
        expected,
        got: probe.exit_event.kind().to_string(),
    })?;
    let mut cfg = config.clone();
    cfg.pupil_azimuth_exit = azimuth;
    let path = trace_cell(&cfg, &cfg.entry_ray(injection), expected)?;
    match path.exit_event {
        ExitEvent::ExitedThroughPupil { pass_index, .. } if pass_index == expected => {}
        ref other => {
            return Err(DelayError::WrongExit {
                i,
                expected,
                got: format!("{} at pass {}", other.kind(), path.n_passes()),
            })
        }
    }
    Ok(DelaySetting {
        i,
        n_spots: path.n_reflections(),
        delay_ns: delay_time_ns(&path)?,
        exit_azimuth: azimuth,
        total_path_mm: path.total_path,
    })
}

/// Tabulated mirror reflectance versus wavelength, interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoatingCurve {
    samples: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct CoatingRow {
    wavelength_nm: f64,
    reflectance: f64,
}

impl CoatingCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, DelayError> {
        if samples.is_empty() {
            return Err(DelayError::InvalidCurve("no samples".into()));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(DelayError::InvalidCurve(format!(
                    "wavelengths not strictly increasing at {} nm",
                    w[1].0
                )));
            }
        }
        if let Some(&(l, r)) = samples.iter().find(|s| !(s.1 > 0.0 && s.1 <= 1.0)) {
            return Err(DelayError::InvalidCurve(format!(
                "reflectance {r} at {l} nm outside (0, 1]"
            )));
        }
        Ok(CoatingCurve { samples })
    }

    /// Flat reflectance over `[lo, hi]` nm.
    pub fn uniform(reflectance: f64, lo: f64, hi: f64) -> Result<Self, DelayError> {
        Self::new(vec![(lo, reflectance), (hi, reflectance)])
    }

    /// Reads a CSV with columns `wavelength_nm,reflectance`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DelayError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut samples = Vec::new();
        for row in rdr.deserialize::<CoatingRow>() {
            let row = row.map_err(|e| DelayError::InvalidCurve(e.to_string()))?;
            samples.push((row.wavelength_nm, row.reflectance));
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, DelayError> {
        let file = std::fs::File::open(path)
            .map_err(|e| DelayError::InvalidCurve(format!("{}: {e}", path.display())))?;
        Self::from_csv(file)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    pub fn reflectance_at(&self, wavelength: f64) -> Result<f64, DelayError> {
        let (lo, hi) = self.range();
        if !(wavelength >= lo && wavelength <= hi) {
            return Err(DelayError::OutOfBand { wavelength, lo, hi });
        }
        let k = self.samples.partition_point(|s| s.0 <= wavelength);
        if k == self.samples.len() {
            return Ok(self.samples[k - 1].1);
        }
        let (l0, r0) = self.samples[k - 1];
        let (l1, r1) = self.samples[k];
        Ok(r0 + (r1 - r0) * (wavelength - l0) / (l1 - l0))
    }
}

/// `R(λ)^n · (1 − excess_loss)`.
pub fn transmission_efficiency(
    n: usize,
    curve: &CoatingCurve,
    wavelength: f64,
    excess_loss: f64,
) -> Result<f64, DelayError> {
    check_excess(excess_loss)?;
    let r = curve.reflectance_at(wavelength)?;
    Ok(r.powi(n as i32) * (1.0 - excess_loss))
}

fn check_excess(excess_loss: f64) -> Result<(), DelayError> {
    if (0.0..1.0).contains(&excess_loss) {
        Ok(())
    } else {
        Err(DelayError::InvalidInput(format!(
            "excess loss {excess_loss} outside [0, 1)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub n_reflections: usize,
    pub wavelength: f64,
    pub efficiency: f64,
    pub reflectance_per_bounce: f64,
    pub excess_loss: f64,
}

impl EfficiencyReport {
    pub fn new(
        n_reflections: usize,
        curve: &CoatingCurve,
        wavelength: f64,
        excess_loss: f64,
    ) -> Result<Self, DelayError> {
        Ok(EfficiencyReport {
            n_reflections,
            wavelength,
            efficiency: transmission_efficiency(n_reflections, curve, wavelength, excess_loss)?,
            reflectance_per_bounce: curve.reflectance_at(wavelength)?,
            excess_loss,
        })
    }
}

/// Per-reflection reflectance `η^(1/n)` implied by a retrieval efficiency.
pub fn reflectance_from_efficiency(efficiency: f64, n: usize) -> Result<f64, DelayError> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(DelayError::InvalidInput(format!(
            "efficiency {efficiency} outside (0, 1]"
        )));
    }
    if n < 1 {
        return Err(DelayError::InvalidInput("need at least one reflection".into()));
    }
    Ok(efficiency.powf(1.0 / n as f64))
}

/// Optical bandwidth `c·Δλ/λ²` in THz.
pub fn bandwidth_nm_to_thz(center_nm: f64, width_nm: f64) -> Result<f64, DelayError> {
    if !(center_nm > 0.0 && width_nm >= 0.0) {
        return Err(DelayError::InvalidInput(format!(
            "center {center_nm} nm, width {width_nm} nm"
        )));
    }
    let hz = SPEED_OF_LIGHT_M_PER_S * (width_nm * 1e-9) / (center_nm * 1e-9).powi(2);
    Ok(hz * 1e-12)
}

/// `Δν·ΔT` for Δν in THz and ΔT in ns.
pub fn time_bandwidth_product(delta_nu_thz: f64, delta_t_ns: f64) -> f64 {
    delta_nu_thz * 1e12 * delta_t_ns * 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub attenuation_db_per_km: f64,
    pub coupling_loss_db: f64,
    pub group_index: f64,
}

impl FiberParams {
    /// Telecom ultra-low-loss fiber with imperfect coupling.
    pub const ULL: FiberParams = FiberParams {
        attenuation_db_per_km: 0.15,
        coupling_loss_db: 0.2,
        group_index: 1.46,
    };
    /// Visible single-mode fiber near 565 nm.
    pub const VISIBLE_SM: FiberParams = FiberParams {
        attenuation_db_per_km: 28.0,
        coupling_loss_db: 0.2,
        group_index: 1.46,
    };

    /// Fiber length in metres giving `delay_ns`.
    pub fn length_m(&self, delay_ns: f64) -> f64 {
        SPEED_OF_LIGHT_M_PER_S / self.group_index * delay_ns * 1e-9
    }

    pub fn efficiency(&self, delay_ns: f64) -> Result<f64, DelayError> {
        fiber_efficiency(
            delay_ns,
            self.attenuation_db_per_km,
            self.coupling_loss_db,
            self.group_index,
        )
    }
}

pub fn fiber_efficiency(
    delay_ns: f64,
    attenuation_db_per_km: f64,
    coupling_loss_db: f64,
    group_index: f64,
) -> Result<f64, DelayError> {
    let ok = delay_ns >= 0.0 && attenuation_db_per_km >= 0.0 && coupling_loss_db >= 0.0 && group_index > 0.0;
    if !ok {
        return Err(DelayError::InvalidInput(format!(
            "delay {delay_ns} ns, attenuation {attenuation_db_per_km} dB/km, coupling {coupling_loss_db} dB, n_g {group_index}"
        )));
    }
    let length_km = SPEED_OF_LIGHT_MM_PER_NS / group_index * delay_ns * 1e-6;
    Ok(10f64.powf(-(coupling_loss_db + attenuation_db_per_km * length_km) / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SpotRecord, MirrorId, Surface};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exited(total: f64) -> TracePath {
        TracePath {
            spots: Vec::<SpotRecord>::new(),
            exit_event: ExitEvent::ExitedThroughPupil { pass_index: 1, point: [0.0; 3] },
            total_path: total,
        }
    }

    #[test]
    fn one_light_nanosecond() {
        assert_relative_eq!(delay_time_ns(&exited(299.792458)).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unexited_path_has_no_delay() {
        let mut p = exited(1.0);
        p.exit_event = ExitEvent::MaxPassesReached;
        assert!(matches!(delay_time(&p), Err(DelayError::NoExit(_))));
    }

    #[test]
    fn reference_delays_follow_pass_count() {
        let c = CellConfig::reference();
        let rows = delay_table(&c, &Injection::reference(), 63);
        assert_eq!(rows.len(), 64);
        let rows: Vec<_> = rows.into_iter().map(|r| r.unwrap()).collect();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.n_spots, 6 * i);
            let naive = (6 * i + 1) as f64 * c.separation / SPEED_OF_LIGHT_MM_PER_NS;
            assert!((r.delay_ns - naive).abs() / naive < 1e-3, "{i}: {}", r.delay_ns);
        }
        for w in rows.windows(2) {
            assert!(w[1].delay_ns > w[0].delay_ns);
            let step = w[1].delay_ns - w[0].delay_ns;
            assert!((step - 6.0 * 541.0 / SPEED_OF_LIGHT_MM_PER_NS).abs() < 0.05);
        }
        assert!((rows[0].delay_ns - 1.8).abs() < 0.05);
        assert!((rows[63].delay_ns - 687.0).abs() / 687.0 < 0.02);
        assert!((rows[3].delay_ns - 34.3).abs() < 0.1);
    }

    #[test]
    fn table_row_traces_exit_at_expected_pass() {
        let c = CellConfig::reference();
        let row = delay_table(&c, &Injection::reference(), 7).pop().unwrap().unwrap();
        let mut cfg = c.clone();
        cfg.pupil_azimuth_exit = row.exit_azimuth;
        let p = trace_cell(&cfg, &cfg.entry_ray(&Injection::reference()), 1000).unwrap();
        assert_eq!(p.n_reflections(), 42);
        assert_eq!(p.spots_on(MirrorId::Exit).count(), 21);
        assert!(p.spots.iter().filter(|s| s.surface_id == Surface::Inner).count() == 7);
    }

    #[test]
    fn setting_three_shows_nine_exit_spots() {
        let inj = Injection::reference();
        let cfg = cell_for_setting(&CellConfig::reference(), &inj, 3, &PatternTemplate::default()).unwrap();
        let p = trace_cell(&cfg, &cfg.entry_ray(&inj), 1000).unwrap();
        assert!(p.exited());
        assert_eq!(p.n_reflections(), 18);
        assert_eq!(p.spots_on(MirrorId::Exit).count(), 9);
    }

    #[test]
    fn efficiency_examples() {
        let flat = CoatingCurve::uniform(0.9999, 500.0, 600.0).unwrap();
        assert_relative_eq!(transmission_efficiency(0, &flat, 565.0, 0.03).unwrap(), 0.97);
        assert!((transmission_efficiency(378, &flat, 565.0, 0.0).unwrap() - 0.96290).abs() < 5e-6);
        let r = CoatingCurve::uniform(0.999889, 500.0, 600.0).unwrap();
        assert!((transmission_efficiency(378, &r, 565.0, 0.0).unwrap() - 0.9590).abs() < 1e-4);
        assert!(matches!(
            transmission_efficiency(1, &flat, 650.0, 0.0),
            Err(DelayError::OutOfBand { .. })
        ));
    }

    #[test]
    fn interpolation_is_linear() {
        let c = CoatingCurve::new(vec![(500.0, 0.9), (600.0, 1.0)]).unwrap();
        assert_relative_eq!(c.reflectance_at(550.0).unwrap(), 0.95, epsilon = 1e-15);
        assert_relative_eq!(c.reflectance_at(600.0).unwrap(), 1.0);
        assert!(CoatingCurve::new(vec![(500.0, 0.9), (500.0, 0.95)]).is_err());
        assert!(CoatingCurve::new(vec![(500.0, 1.2)]).is_err());
    }

    #[test]
    fn coating_csv_parses() {
        let text = "wavelength_nm,reflectance\n# design curve\n530,0.9998\n565,0.99995\n600,0.9998\n";
        let c = CoatingCurve::from_csv(text.as_bytes()).unwrap();
        assert_eq!(c.samples().len(), 3);
        assert_eq!(c.range(), (530.0, 600.0));
    }

    #[test]
    fn measured_reflectances_invert() {
        for (n, _, eta, r) in REFERENCE_MEASUREMENTS {
            let got = reflectance_from_efficiency(eta, n).unwrap();
            assert!((got - r).abs() <= 2e-5, "{n}: {got}");
        }
        assert_eq!(reflectance_from_efficiency(1.0, 17).unwrap(), 1.0);
        assert!(reflectance_from_efficiency(0.0, 17).is_err());
        assert!(reflectance_from_efficiency(0.5, 0).is_err());
    }

    #[test]
    fn bandwidth_and_tbp() {
        let bw = bandwidth_nm_to_thz(565.0, 60.0).unwrap();
        assert!((bw - 56.4).abs() / 56.4 < 0.005);
        assert_eq!(bandwidth_nm_to_thz(565.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(bandwidth_nm_to_thz(1130.0, 60.0).unwrap(), bw / 4.0, epsilon = 1e-12);
        assert!((time_bandwidth_product(56.4, 687.0) - 3.87e7).abs() / 3.87e7 < 0.01);
        assert_relative_eq!(time_bandwidth_product(1.0, 1.0), 1000.0);
        assert!((time_bandwidth_product(56.4, 36.0) - 2.03e6).abs() / 2.03e6 < 0.005);
    }

    #[test]
    fn fiber_examples() {
        let ull = FiberParams::ULL;
        assert!((ull.length_m(687.0) - 141.0).abs() < 0.5);
        assert!((ull.efficiency(687.0).unwrap() - 0.950).abs() < 0.001);
        assert_relative_eq!(ull.efficiency(0.0).unwrap(), 10f64.powf(-0.02));
        let vis = FiberParams::VISIBLE_SM.efficiency(687.0).unwrap();
        assert!((vis - 0.40).abs() < 0.05, "{vis}");
        assert!(fiber_efficiency(-1.0, 0.1, 0.1, 1.46).is_err());
    }

    proptest! {
        #[test]
        fn inversion_round_trip(r in 0.9f64..=1.0, n in 1usize..=1000) {
            let curve = CoatingCurve::uniform(r, 500.0, 600.0).unwrap();
            let eta = transmission_efficiency(n, &curve, 550.0, 0.0).unwrap();
            let back = reflectance_from_efficiency(eta, n).unwrap();
            prop_assert!((back - r).abs() < 1e-12);
        }

        #[test]
        fn efficiency_monotone(r in 0.9f64..0.99999, dr in 1e-6f64..1e-3, n in 0usize..999) {
            let a = CoatingCurve::uniform(r, 500.0, 600.0).unwrap();
            let b = CoatingCurve::uniform((r + dr).min(1.0), 500.0, 600.0).unwrap();
            let e = |c: &CoatingCurve, n| transmission_efficiency(n, c, 550.0, 0.0).unwrap();
            prop_assert!(e(&a, n + 1) < e(&a, n));
            prop_assert!(e(&b, n + 1) > e(&a, n + 1));
        }

        #[test]
        fn fiber_log_linear(att in 0.01f64..50.0, t1 in 0.0f64..1e4, t2 in 0.0f64..1e4) {
            let f = |t| fiber_efficiency(t, att, 0.3, 1.46).unwrap().log10();
            let slope = -(att * SPEED_OF_LIGHT_MM_PER_NS / 1.46 * 1e-6) / 10.0;
            prop_assert!(((f(t2) - f(t1)) - slope * (t2 - t1)).abs() < 1e-9);
        }
    }
}
