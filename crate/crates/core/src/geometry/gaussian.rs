//! Gaussian-beam spot sizes along a traced path via ABCD transfer of the
//! complex beam parameter `q` (mm).

use num_complex::Complex64;
use std::f64::consts::PI;

use super::{CellConfig, GeometryError, TracePath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParam {
    pub q: Complex64,
    pub wavelength_nm: f64,
}

impl QParam {
    /// Beam with 1/e² waist radius `w0` (mm) located `z_from_waist` mm
    /// behind the current plane.
    pub fn from_waist(w0: f64, wavelength_nm: f64, z_from_waist: f64) -> Self {
        let zr = PI * w0 * w0 / (wavelength_nm * 1e-6);
        QParam {
            q: Complex64::new(z_from_waist, zr),
            wavelength_nm,
        }
    }

    pub fn rayleigh_range(&self) -> f64 {
        self.q.im
    }

    fn check(&self, step: usize) -> Result<(), GeometryError> {
        if self.q.im > 0.0 && self.q.is_finite() {
            Ok(())
        } else {
            Err(GeometryError::NonphysicalBeam {
                step,
                imag_q: self.q.im,
            })
        }
    }
}

/// 1/e² radius in mm from `Im(1/q) = -λ / (π w²)`.
pub fn spot_radius(q: &QParam) -> f64 {
    let inv = q.q.inv();
    (-(q.wavelength_nm * 1e-6) / (PI * inv.im)).sqrt()
}

/// Free-space propagation over `length` mm: `q -> q + L`.
pub fn propagate_segment(q: &QParam, length: f64) -> QParam {
    QParam {
        q: q.q + length,
        ..*q
    }
}

/// Reflection off a spherical mirror of curvature `roc` (focal length roc/2).
pub fn reflect_q(q: &QParam, roc: f64) -> QParam {
    let inv = q.q.inv() - 2.0 / roc;
    QParam { q: inv.inv(), ..*q }
}

/// Spot radius at every reflection of `path`, starting from `q0` at the
/// entry pupil.
pub fn propagate_q(
    q0: &QParam,
    path: &TracePath,
    config: &CellConfig,
) -> Result<Vec<f64>, GeometryError> {
    q0.check(0)?;
    let mut q = *q0;
    let mut prev = 0.0;
    let mut radii = Vec::with_capacity(path.spots.len());
    for (k, spot) in path.spots.iter().enumerate() {
        q = propagate_segment(&q, spot.cumulative_path - prev);
        q.check(k + 1)?;
        radii.push(spot_radius(&q));
        q = reflect_q(&q, config.roc(spot.surface_id));
        q.check(k + 1)?;
        prev = spot.cumulative_path;
    }
    Ok(radii)
}

impl TracePath {
    /// Fills `spot_radius` on every spot from a Gaussian beam launched at the entry.
    pub fn with_spot_radii(mut self, q0: &QParam, config: &CellConfig) -> Result<Self, GeometryError> {
        let radii = propagate_q(q0, &self, config)?;
        for (s, w) in self.spots.iter_mut().zip(radii) {
            s.spot_radius = Some(w);
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{trace_cell, Injection};
    use super::*;

    #[test]
    fn zero_propagation_keeps_radius() {
        let q = QParam::from_waist(0.5, 565.0, 0.0);
        let after = propagate_segment(&q, 0.0);
        assert!((spot_radius(&after) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_rayleigh_range_grows_by_sqrt2() {
        let q = QParam::from_waist(0.3, 565.0, 0.0);
        let after = propagate_segment(&q, q.rayleigh_range());
        assert!((spot_radius(&after) - 0.3 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reference_spots_stay_bounded() {
        let c = CellConfig::reference();
        let path = trace_cell(&c, &c.entry_ray(&Injection::reference()), 400).unwrap();
        let q0 = QParam::from_waist(0.6, 565.0, 0.0);
        let radii = propagate_q(&q0, &path, &c).unwrap();
        assert_eq!(radii.len(), 378);
        // both surfaces satisfy 0 < 1 - d/R < 1, so the envelope cannot grow
        for &r in [c.roc_outer, c.roc_inner].iter() {
            let g = 1.0 - c.separation / r;
            assert!(g > 0.0 && g < 1.0);
        }
        let max = radii.iter().cloned().fold(0.0, f64::max);
        assert!(max < 3.0, "{max}");
        let late = &radii[300..];
        assert!(late.iter().cloned().fold(0.0, f64::max) < 3.0);
    }

    #[test]
    fn nonphysical_start_rejected() {
        let c = CellConfig::reference();
        let path = trace_cell(&c, &c.entry_ray(&Injection::reference()), 10).unwrap();
        let bad = QParam {
            q: Complex64::new(1.0, -1.0),
            wavelength_nm: 565.0,
        };
        assert!(matches!(
            propagate_q(&bad, &path, &c),
            Err(GeometryError::NonphysicalBeam { step: 0, .. })
        ));
    }
}
