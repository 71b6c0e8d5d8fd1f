//! Two-photon polarization-correlation fringes and their visibility.
//!
//! A fringe is sampled by fixing the idler analyzer and rotating the signal
//! linear analyzer through angle θ; counts follow `A + B·cos 2(θ − θ₀)` and
//! the visibility is `B/A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ChannelError, DensityMatrix};
use crate::linalg::{c, kron, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase_deg: f64,
    pub visibility: f64,
    pub residual_rms: f64,
}

/// Least-squares fit of `A + B·cos 2(θ − θ₀)` to `(angle_deg, counts)`.
pub fn fit_fringe(samples: &[(f64, f64)]) -> Result<FringeFit, ChannelError> {
    if samples.len() < 4 {
        return Err(ChannelError::FitFailure(format!(
            "{} samples, need at least 4",
            samples.len()
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.0), h.max(s.0)));
    if hi - lo < 90.0 - 1e-9 {
        return Err(ChannelError::FitFailure(format!(
            "angles span {:.3}°, need half a fringe period (90°)",
            hi - lo
        )));
    }
    let n = samples.len();
    let a = DMatrix::from_fn(n, 3, |i, j| {
        let t = 2.0 * samples[i].0.to_radians();
        [1.0, t.cos(), t.sin()][j]
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(ChannelError::FitFailure("angles do not resolve the fringe".into()));
    }
    let x = svd
        .solve(&y, 1e-12 * smax)
        .map_err(|e| ChannelError::FitFailure(e.to_string()))?;
    let (offset, p, q) = (x[0], x[1], x[2]);
    if !(offset > 0.0) {
        return Err(ChannelError::FitFailure(format!("non-positive offset {offset}")));
    }
    let amplitude = p.hypot(q);
    let resid = &a * &x - &y;
    Ok(FringeFit {
        offset,
        amplitude,
        phase_deg: 0.5 * q.atan2(p).to_degrees(),
        visibility: (amplitude / offset).clamp(0.0, 1.0),
        residual_rms: (resid.norm_squared() / n as f64).sqrt(),
    })
}

pub fn visibility(samples: &[(f64, f64)]) -> Result<f64, ChannelError> {
    fit_fringe(samples).map(|f| f.visibility)
}

/// Idler analyzer setting: H (0°) or D (45°).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FringeBasis {
    HV,
    DA,
}

impl FringeBasis {
    pub fn idler_angle_deg(self) -> f64 {
        match self {
            FringeBasis::HV => 0.0,
            FringeBasis::DA => 45.0,
        }
    }
}

fn linear_projector(angle_deg: f64) -> CMatrix {
    let (s, co) = angle_deg.to_radians().sin_cos();
    CMatrix::from_row_slice(2, 2, &[c(co * co, 0.0), c(co * s, 0.0), c(co * s, 0.0), c(s * s, 0.0)])
}

/// Expected coincidences `scale·Tr[(P_θ ⊗ P_idler) ρ]` at each signal angle.
pub fn fringe_samples(
    rho: &DensityMatrix,
    basis: FringeBasis,
    angles_deg: &[f64],
    scale: f64,
) -> Result<Vec<(f64, f64)>, ChannelError> {
    let idler = linear_projector(basis.idler_angle_deg());
    angles_deg
        .iter()
        .map(|&a| {
            let p = kron(&linear_projector(a), &idler);
            Ok((a, scale * rho.expectation(&p)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub hv: f64,
    pub da: f64,
    pub average: f64,
}

pub fn visibility_report(
    hv: &[(f64, f64)],
    da: &[(f64, f64)],
) -> Result<VisibilityReport, ChannelError> {
    let hv = visibility(hv)?;
    let da = visibility(da)?;
    Ok(VisibilityReport {
        hv,
        da,
        average: 0.5 * (hv + da),
    })
}
