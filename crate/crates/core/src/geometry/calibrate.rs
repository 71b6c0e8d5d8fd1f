//! Search for an injection that produces the nested-cell ring pattern.
//!
//! The pattern is described by a [`PatternTemplate`]: the beam hits the inner
//! mirror once every `cycle_len` passes, at arrivals `k ≡ inner_index
//! (mod cycle_len)`, and the exit-pupil candidates sit at arrivals
//! `k ≡ exit_index`. The paraxial cycle map of that surface sequence is a
//! rotation in phase space; its eigenvector gives a seed launch whose spots
//! form one circle per arrival class. The seed is then refined on the exact
//! spherical trace by a deterministic pattern search over the two launch
//! slopes, for each entry radius on a fixed grid.

use num_complex::Complex64;
use serde::Serialize;

use super::{
    trace_cell_with, CellConfig, ExitEvent, GeometryError, Injection, MirrorId, PupilMode,
    Surface, TracePath,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PatternTemplate {
    pub cycle_len: usize,
    pub inner_index: usize,
    pub exit_index: usize,
}

impl Default for PatternTemplate {
    fn default() -> Self {
        PatternTemplate {
            cycle_len: 6,
            inner_index: 4,
            exit_index: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub template: PatternTemplate,
    /// Number of ring steps the exit pupil must be able to select (i = 0..=i_max).
    pub i_max: usize,
    /// Number of entry radii tried across the feasible interval.
    pub radius_steps: usize,
    /// Clearance kept between rings and aperture edges, mm.
    pub margin: f64,
    pub initial_step: f64,
    pub final_step: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            template: PatternTemplate::default(),
            i_max: 63,
            radius_steps: 9,
            margin: 1.5,
            initial_step: 1e-4,
            final_step: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub nested: bool,
    pub entry_radius: f64,
    pub exit_radius: f64,
    pub injection_radial_slope: f64,
    pub injection_tangential_slope: f64,
    /// Exit-pupil azimuth selecting the longest delay, degrees.
    pub max_delay_exit_azimuth: f64,
    /// Passes completed on the probe trace (exit pupil closed).
    pub passes: usize,
    /// Smallest distance from a pupil centre to a spot that must stay
    /// outside it, mm.
    pub pupil_clearance: f64,
    /// Largest radial spread of any arrival class, mm.
    pub ring_spread: f64,
}

impl CalibrationResult {
    pub fn injection(&self) -> Injection {
        Injection {
            radial_slope: self.injection_radial_slope,
            tangential_slope: self.injection_tangential_slope,
        }
    }

    /// `config` with pupils placed for this injection.
    pub fn apply(&self, config: &CellConfig) -> CellConfig {
        let mut out = config.clone();
        out.pupil_radius_pos = self.entry_radius;
        out.exit_pupil_radius_pos = self.exit_radius;
        out.pupil_azimuth_exit = self.max_delay_exit_azimuth;
        out
    }
}

pub fn calibrate_injection(
    config: &CellConfig,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, GeometryError> {
    config.validate()?;
    for roc in [config.roc_outer, config.roc_inner] {
        if config.separation >= roc {
            return Err(GeometryError::NoValidInjection(format!(
                "separation {} mm is not below radius of curvature {roc} mm",
                config.separation
            )));
        }
    }
    if config.is_nested() {
        calibrate_nested(config, options)
    } else {
        calibrate_plain(config, options)
    }
}

type M2 = [[f64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Paraxial transfer matrices (position, slope) for each pass of one cycle:
/// free propagation then reflection at the arrival surface.
fn cycle_steps(config: &CellConfig, surfaces: &[Surface]) -> Vec<M2> {
    let n = surfaces.len();
    (0..n)
        .map(|k| {
            let here = surfaces[k];
            let before = surfaces[(k + n - 1) % n];
            let mut length = config.separation;
            for s in [here, before] {
                if s == Surface::Inner {
                    length += config.inner_offset_z;
                }
            }
            let propagate = [[1.0, length], [0.0, 1.0]];
            let mirror = [[1.0, 0.0], [-2.0 / config.roc(here), 1.0]];
            mul(&mirror, &propagate)
        })
        .collect()
}

/// Complex eigen-mode of a cycle: returns (slope/position ratio at the start,
/// position ratios at every arrival 0..=n relative to arrival 0).
fn circular_mode(steps: &[M2]) -> Option<(Complex64, Vec<f64>)> {
    let m = steps.iter().fold([[1.0, 0.0], [0.0, 1.0]], |acc, s| mul(s, &acc));
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    if half_trace.abs() >= 1.0 - 1e-12 {
        return None;
    }
    let lambda = Complex64::new(half_trace, (1.0 - half_trace * half_trace).sqrt());
    // (M - λ) v = 0 with v = (b, λ - a)
    let v0 = Complex64::new(m[0][1], 0.0);
    let v1 = lambda - m[0][0];
    if v0.norm() < 1e-300 {
        return None;
    }
    let kappa = v1 / v0;
    let mut state = [Complex64::new(1.0, 0.0), kappa];
    let mut ratios = vec![1.0];
    for s in steps {
        let x = state[0] + state[1] * s[0][1];
        // position after propagation (reflection leaves position unchanged)
        ratios.push(x.norm());
        state = [
            s[0][0] * state[0] + s[0][1] * state[1],
            s[1][0] * state[0] + s[1][1] * state[1],
        ];
    }
    Some((kappa, ratios))
}

fn calibrate_nested(
    config: &CellConfig,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, GeometryError> {
    let t = options.template;
    if t.cycle_len < 2 || t.inner_index >= t.cycle_len || t.exit_index >= t.cycle_len {
        return Err(GeometryError::NoValidInjection(format!(
            "invalid pattern template {t:?}"
        )));
    }
    if (t.inner_index % 2 == 1) || (t.exit_index % 2 == 0) {
        return Err(GeometryError::NoValidInjection(
            "template must put inner hits on the entry mirror and exits on the exit mirror".into(),
        ));
    }
    // surfaces of arrivals 1..=cycle_len
    let surfaces: Vec<Surface> = (1..=t.cycle_len)
        .map(|k| {
            if k % t.cycle_len == t.inner_index {
                Surface::Inner
            } else {
                Surface::Outer
            }
        })
        .collect();
    let steps = cycle_steps(config, &surfaces);
    let (kappa, ratios) = circular_mode(&steps).ok_or_else(|| {
        GeometryError::NoValidInjection("cycle map has no rotating mode".into())
    })?;

    // feasible entry radii: every arrival class on its surface with margin
    let margin = options.margin;
    let half_pupil = config.pupil_diameter / 2.0;
    let mut lower: f64 = 0.0;
    let mut upper = f64::INFINITY;
    for (k, g) in ratios.iter().enumerate().take(t.cycle_len) {
        let class = k % t.cycle_len;
        let edge = if class == 0 || class == t.exit_index {
            config.r_outer - half_pupil - margin
        } else {
            config.r_outer - margin
        };
        upper = upper.min(edge / g);
        if class == t.inner_index {
            upper = upper.min((config.r_inner - margin) / g);
        } else {
            lower = lower.max((config.r_inner + margin) / g);
        }
    }
    if !(lower < upper) {
        return Err(GeometryError::NoValidInjection(format!(
            "no entry radius keeps the ring classes on their surfaces (need {lower:.3} < {upper:.3} mm)"
        )));
    }

    let passes = t.cycle_len * options.i_max + 1;
    let steps_n = options.radius_steps.max(1);
    let mut best: Option<(f64, f64, f64, Injection, TracePath)> = None;
    for j in 0..steps_n {
        let rho = if steps_n == 1 {
            0.5 * (lower + upper)
        } else {
            lower + (upper - lower) * (j as f64 + 0.5) / steps_n as f64
        };
        let mut probe_cfg = config.clone();
        probe_cfg.pupil_radius_pos = rho;
        if probe_cfg.validate().is_err() {
            continue;
        }
        let seed = Injection {
            radial_slope: rho * kappa.re,
            tangential_slope: rho * kappa.im,
        };
        let (inj, spread) = refine(&probe_cfg, seed, passes, &t, options)?;
        if spread > SPREAD_LIMIT_MM {
            continue;
        }
        let path = trace_cell_with(&probe_cfg, &probe_cfg.entry_ray(&inj), passes, PupilMode::EntryOnly)?;
        let clearance = pupil_clearance(&probe_cfg, &path, &t, options.i_max);
        if clearance <= half_pupil {
            continue;
        }
        if best.as_ref().is_none_or(|b| clearance > b.1) {
            best = Some((rho, clearance, spread, inj, path));
        }
    }
    let (rho, _, spread, inj, path) = best.ok_or_else(|| {
        GeometryError::NoValidInjection(
            "no candidate reproduces the inner-hit periodicity over the full trace".into(),
        )
    })?;

    let mut best_cfg = config.clone();
    best_cfg.pupil_radius_pos = rho;
    let exit_spots: Vec<_> = path
        .spots
        .iter()
        .filter(|s| s.pass_index % t.cycle_len == t.exit_index)
        .collect();
    let exit_radius =
        exit_spots.iter().map(|s| s.radial_dist).sum::<f64>() / exit_spots.len() as f64;
    // the last exit candidate is the pass after the probe ends
    let last = exit_spots
        .last()
        .map(|s| s.point[1].atan2(s.point[0]).to_degrees())
        .unwrap_or(0.0);
    let max_delay_azimuth = max_delay_exit_azimuth(config, rho, &inj, passes).unwrap_or(last);
    Ok(CalibrationResult {
        nested: true,
        entry_radius: rho,
        exit_radius,
        injection_radial_slope: inj.radial_slope,
        injection_tangential_slope: inj.tangential_slope,
        max_delay_exit_azimuth: max_delay_azimuth,
        passes: path.n_passes(),
        pupil_clearance: pupil_clearance(&best_cfg, &path, &t, options.i_max),
        ring_spread: spread,
    })
}

/// Rings must be sharp well below the clustering tolerance.
const SPREAD_LIMIT_MM: f64 = 0.05;

/// Smallest transverse distance between a pupil centre and any spot the beam
/// must not leak through: entry-mirror spots versus the entry pupil, and, for
/// every exit setting `i`, earlier exit-mirror spots versus the pupil placed
/// on arrival `cycle_len·i + exit_index`.
fn pupil_clearance(
    config: &CellConfig,
    path: &TracePath,
    t: &PatternTemplate,
    i_max: usize,
) -> f64 {
    let entry = config.pupil_center(MirrorId::Entry);
    let dist = |p: &[f64; 3], c: [f64; 2]| (p[0] - c[0]).hypot(p[1] - c[1]);
    let mut clearance = path
        .spots_on(MirrorId::Entry)
        .map(|s| dist(&s.point, entry))
        .fold(f64::INFINITY, f64::min);
    let exits: Vec<_> = path.spots_on(MirrorId::Exit).collect();
    for i in 0..=i_max {
        let k = t.cycle_len * i + t.exit_index;
        let Some(target) = exits.iter().find(|s| s.pass_index == k) else {
            continue;
        };
        let c = [target.point[0], target.point[1]];
        for s in exits.iter().take_while(|s| s.pass_index < k) {
            clearance = clearance.min(dist(&s.point, c));
        }
    }
    clearance
}

/// Azimuth of arrival `passes` with the exit pupil closed.
fn max_delay_exit_azimuth(
    config: &CellConfig,
    rho: f64,
    inj: &Injection,
    passes: usize,
) -> Option<f64> {
    let mut c = config.clone();
    c.pupil_radius_pos = rho;
    let p = trace_cell_with(&c, &c.entry_ray(inj), passes, PupilMode::EntryOnly).ok()?;
    let s = p.spots.iter().find(|s| s.pass_index == passes)?;
    Some(s.point[1].atan2(s.point[0]).to_degrees())
}

/// Pattern-search refinement of the launch slopes minimizing ring spread.
/// Returns infinite score when the template is violated for every trial.
fn refine(
    config: &CellConfig,
    seed: Injection,
    passes: usize,
    template: &PatternTemplate,
    options: &CalibrationOptions,
) -> Result<(Injection, f64), GeometryError> {
    let eval = |inj: &Injection| -> Result<f64, GeometryError> {
        let path = trace_cell_with(config, &config.entry_ray(inj), passes, PupilMode::EntryOnly)?;
        Ok(score_template(&path, passes, template))
    };
    let mut current = seed;
    let mut value = eval(&current)?;
    let mut step = options.initial_step;
    while step >= options.final_step {
        let mut improved = false;
        for (dr, dt) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let trial = Injection {
                radial_slope: current.radial_slope + dr * step,
                tangential_slope: current.tangential_slope + dt * step,
            };
            let v = eval(&trial)?;
            if v < value {
                current = trial;
                value = v;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((current, value))
}

/// Largest radial spread of any arrival class, or infinity if the trace
/// stops early or hits the inner mirror off-template.
fn score_template(path: &TracePath, passes: usize, t: &PatternTemplate) -> f64 {
    if path.spots.len() < passes || path.exit_event != ExitEvent::MaxPassesReached {
        return f64::INFINITY;
    }
    let mut lo = vec![f64::INFINITY; t.cycle_len];
    let mut hi = vec![f64::NEG_INFINITY; t.cycle_len];
    for s in &path.spots {
        let class = s.pass_index % t.cycle_len;
        let expect_inner = class == t.inner_index;
        if (s.surface_id == Surface::Inner) != expect_inner {
            return f64::INFINITY;
        }
        lo[class] = lo[class].min(s.radial_dist);
        hi[class] = hi[class].max(s.radial_dist);
    }
    (0..t.cycle_len)
        .filter(|&k| hi[k] >= lo[k])
        .map(|k| hi[k] - lo[k])
        .fold(0.0, f64::max)
}

/// Classic Herriott cell: a single circular ring on each mirror.
fn calibrate_plain(
    config: &CellConfig,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, GeometryError> {
    let steps = cycle_steps(config, &[Surface::Outer]);
    let (kappa, _) = circular_mode(&steps).ok_or_else(|| {
        GeometryError::NoValidInjection("single-pass map has no rotating mode".into())
    })?;
    let reach = config.r_outer.max(config.r_inner);
    let rho = reach - config.pupil_diameter / 2.0 - options.margin;
    if rho <= 0.0 {
        return Err(GeometryError::NoValidInjection(
            "aperture too small for the pupil".into(),
        ));
    }
    let mut probe_cfg = config.clone();
    probe_cfg.pupil_radius_pos = rho;
    probe_cfg.exit_pupil_radius_pos = rho;
    let inj = Injection {
        radial_slope: rho * kappa.re,
        tangential_slope: rho * kappa.im,
    };
    let max = options.template.cycle_len * options.i_max + 1;
    let path = trace_cell_with(&probe_cfg, &probe_cfg.entry_ray(&inj), max, PupilMode::EntryOnly)?;
    let spread = path
        .spots
        .iter()
        .map(|s| s.radial_dist)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    let last_exit = path
        .spots_on(MirrorId::Exit)
        .last()
        .map(|s| s.point[1].atan2(s.point[0]).to_degrees())
        .unwrap_or(config.pupil_azimuth_exit);
    Ok(CalibrationResult {
        nested: false,
        entry_radius: rho,
        exit_radius: rho,
        injection_radial_slope: inj.radial_slope,
        injection_tangential_slope: inj.tangential_slope,
        max_delay_exit_azimuth: last_exit,
        passes: path.n_passes(),
        pupil_clearance: pupil_clearance(&probe_cfg, &path, &options.template, 0),
        ring_spread: if spread.1 >= spread.0 { spread.1 - spread.0 } else { 0.0 },
    })
}
