//! C ABI for the nestcell simulator.
//!
//! Objects cross the boundary as opaque handles created by `nc_*_new`-style
//! constructors and released with the matching `nc_*_free`. Fallible calls
//! return an [`NcStatus`] and write results through out-pointers; the
//! message of the most recent failure on the calling thread is available from
//! [`nc_last_error`]. Panics never unwind into C: they surface as
//! `NC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nestcell::channel::{
    apply_channel_signal, bell_phi_plus, channel_for_bounces, state_fidelity, BounceParams, ChannelParams,
    DensityMatrix,
};
use nestcell::delay::{cell_for_setting, delay_time_ns, fiber_efficiency, transmission_efficiency, CoatingCurve};
use nestcell::geometry::{trace_cell, CellConfig, Injection, MirrorId, PatternTemplate, Surface, TracePath};
use nestcell::io::RunConfig;
use nestcell::linalg::{c, CMatrix};
use nestcell::tomography::{mle_qst, settings_16, simulate_counts, AcquisitionParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    GeometryError = 4,
    DelayError = 5,
    ChannelError = 6,
    TomographyError = 7,
    Panic = 99,
}

/// Cell geometry together with its injection.
pub struct NcCellConfig {
    cell: CellConfig,
    injection: Injection,
}

pub struct NcTracePath(TracePath);

pub struct NcDensityMatrix(DensityMatrix);

/// One reflection, copied out of a trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NcSpot {
    pub pass_index: u64,
    /// 1 = entry mirror, 2 = exit mirror.
    pub mirror_id: u8,
    /// 0 = outer annulus, 1 = inner disk.
    pub surface_id: u8,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub radial_dist: f64,
    pub cumulative_path: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn fail(status: NcStatus, msg: impl std::fmt::Display) -> NcStatus {
    set_error(msg.to_string());
    status
}

fn guard(f: impl FnOnce() -> NcStatus) -> NcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(NcStatus::Panic, msg)
        }
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reference cell with its calibrated injection.
#[no_mangle]
pub extern "C" fn nc_cell_reference() -> *mut NcCellConfig {
    boxed(NcCellConfig {
        cell: CellConfig::reference(),
        injection: Injection::reference(),
    })
}

/// Parses a run configuration (TOML text) and keeps its cell and injection.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_cell_from_toml(toml: *const c_char, out: *mut *mut NcCellConfig) -> NcStatus {
    guard(|| {
        if toml.is_null() || out.is_null() {
            return fail(NcStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(toml).to_str() else {
            return fail(NcStatus::InvalidArgument, "config is not UTF-8");
        };
        match RunConfig::parse(text, "<ffi>") {
            Ok(cfg) => {
                *out = boxed(NcCellConfig {
                    cell: cfg.cell,
                    injection: cfg.injection,
                });
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::ConfigError, e),
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nc_cell_free(cfg: *mut NcCellConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Rotates the exit pupil so the beam leaves after `6i` reflections.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nc_cell_set_setting(cfg: *mut NcCellConfig, i: u64) -> NcStatus {
    guard(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(NcStatus::NullPointer, "null cell");
        };
        match cell_for_setting(&cfg.cell, &cfg.injection, i as usize, &PatternTemplate::default()) {
            Ok(cell) => {
                cfg.cell = cell;
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::DelayError, e),
        }
    })
}

/// Traces up to `max_passes` straight segments.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_trace(
    cfg: *const NcCellConfig,
    max_passes: u64,
    out: *mut *mut NcTracePath,
) -> NcStatus {
    guard(|| {
        let (Some(cfg), false) = (cfg.as_ref(), out.is_null()) else {
            return fail(NcStatus::NullPointer, "null argument");
        };
        match trace_cell(&cfg.cell, &cfg.cell.entry_ray(&cfg.injection), max_passes as usize) {
            Ok(p) => {
                *out = boxed(NcTracePath(p));
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::GeometryError, e),
        }
    })
}

/// # Safety
/// `path` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nc_trace_free(path: *mut NcTracePath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of reflections; 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nc_trace_n_reflections(path: *const NcTracePath) -> u64 {
    path.as_ref().map_or(0, |p| p.0.n_reflections() as u64)
}

/// 1 if the beam left through the exit pupil, else 0.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nc_trace_exited(path: *const NcTracePath) -> i32 {
    path.as_ref().map_or(0, |p| p.0.exited() as i32)
}

/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_trace_delay_ns(path: *const NcTracePath, out: *mut f64) -> NcStatus {
    guard(|| {
        let (Some(p), false) = (path.as_ref(), out.is_null()) else {
            return fail(NcStatus::NullPointer, "null argument");
        };
        match delay_time_ns(&p.0) {
            Ok(d) => {
                *out = d;
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::DelayError, e),
        }
    })
}

/// Copies reflection `index` (0-based).
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_trace_spot(path: *const NcTracePath, index: u64, out: *mut NcSpot) -> NcStatus {
    guard(|| {
        let (Some(p), false) = (path.as_ref(), out.is_null()) else {
            return fail(NcStatus::NullPointer, "null argument");
        };
        let Some(s) = p.0.spots.get(index as usize) else {
            return fail(NcStatus::InvalidArgument, format!("spot {index} out of range"));
        };
        *out = NcSpot {
            pass_index: s.pass_index as u64,
            mirror_id: match s.mirror_id {
                MirrorId::Entry => 1,
                MirrorId::Exit => 2,
            },
            surface_id: (s.surface_id == Surface::Inner) as u8,
            x: s.point[0],
            y: s.point[1],
            z: s.point[2],
            radial_dist: s.radial_dist,
            cumulative_path: s.cumulative_path,
        };
        NcStatus::Ok
    })
}

/// `R^n·(1 − excess)` for a wavelength-flat reflectance `R`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_transmission_efficiency(
    n_reflections: u64,
    reflectance: f64,
    excess_loss: f64,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        if out.is_null() {
            return fail(NcStatus::NullPointer, "null out");
        }
        let result = CoatingCurve::uniform(reflectance, 0.0, 1e6)
            .and_then(|curve| transmission_efficiency(n_reflections as usize, &curve, 565.0, excess_loss));
        match result {
            Ok(v) => {
                *out = v;
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::DelayError, e),
        }
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_fiber_efficiency(
    delay_ns: f64,
    attenuation_db_per_km: f64,
    coupling_loss_db: f64,
    group_index: f64,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        if out.is_null() {
            return fail(NcStatus::NullPointer, "null out");
        }
        match fiber_efficiency(delay_ns, attenuation_db_per_km, coupling_loss_db, group_index) {
            Ok(v) => {
                *out = v;
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::DelayError, e),
        }
    })
}

/// `|Φ+⟩⟨Φ+|` on signal ⊗ idler.
#[no_mangle]
pub extern "C" fn nc_density_bell_phi_plus() -> *mut NcDensityMatrix {
    boxed(NcDensityMatrix(bell_phi_plus()))
}

/// Builds a density matrix from `dim·dim` row-major entries given as
/// separate real and imaginary arrays.
///
/// # Safety
/// `re` and `im` must each point to `dim·dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_density_new(
    re: *const f64,
    im: *const f64,
    dim: u64,
    out: *mut *mut NcDensityMatrix,
) -> NcStatus {
    guard(|| {
        if re.is_null() || im.is_null() || out.is_null() {
            return fail(NcStatus::NullPointer, "null argument");
        }
        if dim == 0 || dim > 64 {
            return fail(NcStatus::InvalidArgument, format!("dimension {dim}"));
        }
        let d = dim as usize;
        let re = std::slice::from_raw_parts(re, d * d);
        let im = std::slice::from_raw_parts(im, d * d);
        let m = CMatrix::from_fn(d, d, |i, j| c(re[i * d + j], im[i * d + j]));
        match DensityMatrix::new(m) {
            Ok(rho) => {
                *out = boxed(NcDensityMatrix(rho));
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::ChannelError, e),
        }
    })
}

/// # Safety
/// `rho` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nc_density_free(rho: *mut NcDensityMatrix) {
    if !rho.is_null() {
        drop(Box::from_raw(rho));
    }
}

/// Matrix dimension; 0 for a null handle.
///
/// # Safety
/// `rho` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nc_density_dim(rho: *const NcDensityMatrix) -> u64 {
    rho.as_ref().map_or(0, |r| r.0.dim() as u64)
}

/// # Safety
/// `rho` must be a live handle; `re` and `im` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_density_get(
    rho: *const NcDensityMatrix,
    row: u64,
    col: u64,
    re: *mut f64,
    im: *mut f64,
) -> NcStatus {
    guard(|| {
        let Some(r) = rho.as_ref() else {
            return fail(NcStatus::NullPointer, "null matrix");
        };
        if re.is_null() || im.is_null() {
            return fail(NcStatus::NullPointer, "null out");
        }
        let d = r.0.dim() as u64;
        if row >= d || col >= d {
            return fail(NcStatus::InvalidArgument, format!("index ({row}, {col}) outside {d}×{d}"));
        }
        let z = r.0.matrix()[(row as usize, col as usize)];
        *re = z.re;
        *im = z.im;
        NcStatus::Ok
    })
}

/// Uhlmann fidelity `(Tr√(√ρ σ √ρ))²`.
///
/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_state_fidelity(
    a: *const NcDensityMatrix,
    b: *const NcDensityMatrix,
    out: *mut f64,
) -> NcStatus {
    guard(|| {
        let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), out.is_null()) else {
            return fail(NcStatus::NullPointer, "null argument");
        };
        match state_fidelity(&a.0, &b.0) {
            Ok(f) => {
                *out = f;
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::ChannelError, e),
        }
    })
}

/// Sends the signal photon of a two-photon state through `n_bounces`
/// identical reflections followed by a depolarizing admixture `p`.
///
/// # Safety
/// `rho` must be a live 4×4 handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_channel_apply_signal(
    rho: *const NcDensityMatrix,
    n_bounces: u64,
    retardance: f64,
    diattenuation: f64,
    axis_azimuth: f64,
    depolarizing_p: f64,
    out: *mut *mut NcDensityMatrix,
) -> NcStatus {
    guard(|| {
        let (Some(rho), false) = (rho.as_ref(), out.is_null()) else {
            return fail(NcStatus::NullPointer, "null argument");
        };
        let params = ChannelParams {
            bounce: BounceParams {
                retardance,
                diattenuation,
                axis_azimuth,
            },
            depolarizing_p,
            ..Default::default()
        };
        let result = channel_for_bounces(n_bounces as usize, &params).and_then(|k| apply_channel_signal(&rho.0, &k));
        match result {
            Ok(o) => {
                *out = boxed(NcDensityMatrix(o.state));
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::ChannelError, e),
        }
    })
}

/// Simulates Poisson coincidences on the 16-setting design for a 4×4 state
/// and returns the maximum-likelihood reconstruction.
///
/// # Safety
/// `rho` must be a live 4×4 handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_qst_simulate_mle(
    rho: *const NcDensityMatrix,
    pairs_per_setting: f64,
    seed: u64,
    out: *mut *mut NcDensityMatrix,
) -> NcStatus {
    guard(|| {
        let (Some(rho), false) = (rho.as_ref(), out.is_null()) else {
            return fail(NcStatus::NullPointer, "null argument");
        };
        let params = AcquisitionParams::poisson(pairs_per_setting, 1.0);
        let result = simulate_counts(&rho.0, &settings_16(), &params, seed).and_then(|r| mle_qst(&r, None));
        match result {
            Ok(r) => {
                *out = boxed(NcDensityMatrix(r.state));
                NcStatus::Ok
            }
            Err(e) => fail(NcStatus::TomographyError, e),
        }
    })
}
