//! Geometry of the nested two-mirror cell.
//!
//! Coordinates: the optical axis is `z`. The entry mirror (id 1) has its
//! vertex at `z = 0` and is concave toward `+z`; the exit mirror (id 2) has
//! its vertex at `z = separation` and is concave toward `-z`. Each mirror is
//! an outer annulus of curvature `roc_outer` with a coaxial embedded disk of
//! radius `r_inner` and curvature `roc_inner`. Lengths are in millimetres,
//! angles in degrees unless a field name says otherwise.

mod calibrate;
mod gaussian;
mod rings;
mod trace;

pub use calibrate::{
    calibrate_injection, CalibrationOptions, CalibrationResult, PatternTemplate,
};
pub use gaussian::{propagate_q, propagate_segment, reflect_q, spot_radius, QParam};
pub use rings::{ring_analysis, MirrorRings, Ring, RingSummary, RING_TOLERANCE_MM};
pub use trace::{
    trace_cell, trace_cell_with, ExitEvent, PupilMode, SpotRecord, TracePath,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid cell configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("unstable cell: separation {separation} mm vs radius of curvature {roc} mm")]
    UnstableCell { separation: f64, roc: f64 },
    #[error("ray does not intersect the mirror sphere")]
    NoIntersection,
    #[error("invalid ray: {0}")]
    InvalidRay(String),
    #[error("non-physical Gaussian beam at step {step}: Im(q) = {imag_q}")]
    NonphysicalBeam { step: usize, imag_q: f64 },
    #[error("ring analysis needs at least {needed} spots, got {got}")]
    InsufficientSpots { needed: usize, got: usize },
    #[error("degenerate ring pattern: {0}")]
    DegeneratePattern(String),
    #[error("no valid injection: {0}")]
    NoValidInjection(String),
}

/// Which nested mirror a reflection happens on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MirrorId {
    /// Mirror carrying the entry pupil, vertex at `z = 0`.
    Entry,
    /// Mirror carrying the exit pupil, vertex at `z = separation`.
    Exit,
}

impl MirrorId {
    pub fn number(self) -> u8 {
        match self {
            MirrorId::Entry => 1,
            MirrorId::Exit => 2,
        }
    }

    /// Mirror struck at the end of pass `k` (pass 1 goes entry -> exit).
    pub fn for_pass(pass_index: usize) -> Self {
        if pass_index % 2 == 1 {
            MirrorId::Exit
        } else {
            MirrorId::Entry
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Surface {
    Outer,
    Inner,
}

impl Surface {
    pub fn name(self) -> &'static str {
        match self {
            Surface::Outer => "outer",
            Surface::Inner => "inner",
        }
    }
}

/// Result of testing a transverse point against the mirror apertures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitClass {
    Surface(Surface),
    Escape,
}

/// Geometric and optical description of the nested cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    /// Aperture radius of the outer mirror.
    pub r_outer: f64,
    /// Aperture radius of the embedded inner mirror.
    pub r_inner: f64,
    /// Radius of curvature of the outer mirror.
    pub roc_outer: f64,
    /// Radius of curvature of the inner mirror.
    pub roc_inner: f64,
    /// Vertex-to-vertex separation of the two nested mirrors.
    pub separation: f64,
    /// Substrate thickness. Metadata only.
    pub thickness: f64,
    pub pupil_diameter: f64,
    /// Radial position of the entry pupil centre.
    pub pupil_radius_pos: f64,
    /// Radial position of the exit pupil centre.
    pub exit_pupil_radius_pos: f64,
    /// Azimuth of the entry pupil on mirror 1, degrees.
    pub pupil_azimuth_entry: f64,
    /// Azimuth of the exit pupil on mirror 2, degrees.
    pub pupil_azimuth_exit: f64,
    /// Axial recess of the inner-mirror vertex behind the outer-mirror vertex.
    #[serde(default)]
    pub inner_offset_z: f64,
}

/// Launch direction of the beam through the entry pupil, expressed as
/// slopes (dx/dz) in the local polar frame of the entry point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub radial_slope: f64,
    pub tangential_slope: f64,
}

impl CellConfig {
    /// Reference geometry: Table-style parameters with the aperture radii and
    /// the curvature radii both read as outer = larger mirror, inner =
    /// embedded mirror (outer 50.8 mm / 4000 mm, inner 25.4 mm / 3355 mm),
    /// pupils placed for the calibrated reference injection.
    pub fn reference() -> Self {
        CellConfig {
            r_outer: 50.8,
            r_inner: 25.4,
            roc_outer: 4000.0,
            roc_inner: 3355.0,
            separation: 541.0,
            thickness: 12.7,
            pupil_diameter: 3.0,
            pupil_radius_pos: REFERENCE_ENTRY_RADIUS,
            exit_pupil_radius_pos: REFERENCE_EXIT_RADIUS,
            pupil_azimuth_entry: 0.0,
            pupil_azimuth_exit: REFERENCE_MAX_DELAY_EXIT_AZIMUTH,
            inner_offset_z: 0.0,
        }
    }

    /// Classic Herriott cell: both surfaces share one curvature.
    pub fn plain_herriott(roc: f64, separation: f64, aperture: f64) -> Self {
        CellConfig {
            r_outer: aperture,
            r_inner: aperture / 2.0,
            roc_outer: roc,
            roc_inner: roc,
            separation,
            thickness: 12.7,
            pupil_diameter: 3.0,
            pupil_radius_pos: aperture * 0.8,
            exit_pupil_radius_pos: aperture * 0.8,
            pupil_azimuth_entry: 0.0,
            pupil_azimuth_exit: 180.0,
            inner_offset_z: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            ("r_outer", self.r_outer),
            ("r_inner", self.r_inner),
            ("roc_outer", self.roc_outer),
            ("roc_inner", self.roc_inner),
            ("separation", self.separation),
            ("pupil_diameter", self.pupil_diameter),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::InvalidConfig {
                    field,
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        let finite = [
            ("thickness", self.thickness),
            ("pupil_radius_pos", self.pupil_radius_pos),
            ("exit_pupil_radius_pos", self.exit_pupil_radius_pos),
            ("pupil_azimuth_entry", self.pupil_azimuth_entry),
            ("pupil_azimuth_exit", self.pupil_azimuth_exit),
            ("inner_offset_z", self.inner_offset_z),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(GeometryError::InvalidConfig {
                    field,
                    reason: "must be finite".into(),
                });
            }
        }
        let reach = self.r_outer.max(self.r_inner);
        for (field, pos) in [
            ("pupil_radius_pos", self.pupil_radius_pos),
            ("exit_pupil_radius_pos", self.exit_pupil_radius_pos),
        ] {
            if pos < 0.0 || pos + self.pupil_diameter / 2.0 > reach {
                return Err(GeometryError::InvalidConfig {
                    field,
                    reason: format!(
                        "pupil at {pos} mm with diameter {} mm does not fit the {reach} mm aperture",
                        self.pupil_diameter
                    ),
                });
            }
        }
        Ok(())
    }

    /// Rejects geometrically unstable cells (separation beyond a curvature
    /// radius). The confocal limit `d == R` is allowed.
    pub fn check_stability(&self) -> Result<(), GeometryError> {
        for roc in [self.roc_outer, self.roc_inner] {
            if self.separation > roc {
                return Err(GeometryError::UnstableCell {
                    separation: self.separation,
                    roc,
                });
            }
        }
        Ok(())
    }

    pub fn is_nested(&self) -> bool {
        self.roc_inner != self.roc_outer && self.r_inner < self.r_outer
    }

    pub fn roc(&self, surface: Surface) -> f64 {
        match surface {
            Surface::Outer => self.roc_outer,
            Surface::Inner => self.roc_inner,
        }
    }

    pub fn aperture(&self, surface: Surface) -> f64 {
        match surface {
            Surface::Outer => self.r_outer,
            Surface::Inner => self.r_inner,
        }
    }

    /// Axial coordinate of a mirror's reference (outer-vertex) plane.
    pub fn mirror_plane_z(&self, mirror: MirrorId) -> f64 {
        match mirror {
            MirrorId::Entry => 0.0,
            MirrorId::Exit => self.separation,
        }
    }

    /// Sphere of a given surface on a given mirror.
    pub fn sphere(&self, mirror: MirrorId, surface: Surface) -> Sphere {
        let roc = self.roc(surface);
        let recess = match surface {
            Surface::Outer => 0.0,
            Surface::Inner => self.inner_offset_z,
        };
        let center_z = match mirror {
            MirrorId::Entry => -recess + roc,
            MirrorId::Exit => self.separation + recess - roc,
        };
        Sphere {
            center: Vec3::new(0.0, 0.0, center_z),
            radius: roc,
        }
    }

    /// Transverse centre of the pupil drilled into `mirror`.
    pub fn pupil_center(&self, mirror: MirrorId) -> [f64; 2] {
        let (r, az) = match mirror {
            MirrorId::Entry => (self.pupil_radius_pos, self.pupil_azimuth_entry),
            MirrorId::Exit => (self.exit_pupil_radius_pos, self.pupil_azimuth_exit),
        };
        let a = az.to_radians();
        [r * a.cos(), r * a.sin()]
    }

    pub fn in_pupil(&self, mirror: MirrorId, x: f64, y: f64) -> bool {
        let [cx, cy] = self.pupil_center(mirror);
        (x - cx).hypot(y - cy) <= self.pupil_diameter / 2.0
    }

    /// Entry ray launched from the entry-pupil centre on the `z = 0` plane.
    pub fn entry_ray(&self, injection: &Injection) -> Ray {
        let a = self.pupil_azimuth_entry.to_radians();
        let (s, c) = a.sin_cos();
        let origin = Vec3::new(self.pupil_radius_pos * c, self.pupil_radius_pos * s, 0.0);
        let sx = injection.radial_slope * c - injection.tangential_slope * s;
        let sy = injection.radial_slope * s + injection.tangential_slope * c;
        Ray::new(origin, Vec3::new(sx, sy, 1.0)).expect("finite injection slopes")
    }

    /// Copy of the configuration with every azimuth rotated by `degrees`.
    pub fn rotated(&self, degrees: f64) -> Self {
        let mut out = self.clone();
        out.pupil_azimuth_entry += degrees;
        out.pupil_azimuth_exit += degrees;
        out
    }
}

// Calibrated reference injection for `CellConfig::reference()`; regenerate
// with `nestcell calibrate-injection`.
pub const REFERENCE_ENTRY_RADIUS: f64 = 42.130922712174765;
pub const REFERENCE_EXIT_RADIUS: f64 = 47.67029906115377;
pub const REFERENCE_MAX_DELAY_EXIT_AZIMUTH: f64 = 14.980095413989993;
pub const REFERENCE_INJECTION: Injection = Injection {
    radial_slope: 0.00835053747203734,
    tangential_slope: -0.018175962892739813,
};

impl Injection {
    pub fn reference() -> Self {
        REFERENCE_INJECTION
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) || !origin.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidRay(format!(
                "origin {origin:?}, direction {direction:?}"
            )));
        }
        Ok(Ray {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

/// Roots more than this far behind the ray origin are rejected.
const BEHIND_TOLERANCE: f64 = 1e-9;

impl Sphere {
    /// Distance along `ray` to the concave-side hit, i.e. the crossing where
    /// the ray travels outward through the sphere.
    pub fn concave_hit(&self, ray: &Ray) -> Option<f64> {
        let oc = ray.origin - self.center;
        let b = oc.dot(&ray.direction);
        let c = oc.norm_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let t = -b + disc.sqrt();
        (t >= -BEHIND_TOLERANCE).then_some(t.max(0.0))
    }

    /// Outward unit normal at a point on the sphere.
    pub fn normal(&self, point: &Vec3) -> Vec3 {
        (point - self.center) / self.radius
    }
}

/// Specular reflection off the concave side of `sphere`.
pub fn reflect_ray(ray: &Ray, sphere: &Sphere) -> Result<Ray, GeometryError> {
    let t = sphere.concave_hit(ray).ok_or(GeometryError::NoIntersection)?;
    let point = ray.at(t);
    let n = sphere.normal(&point);
    let v = ray.direction;
    let reflected = v - n * (2.0 * v.dot(&n));
    Ok(Ray {
        origin: point,
        direction: reflected / reflected.norm(),
    })
}

/// Classifies a transverse point on a mirror plane by radial distance.
pub fn classify_hit(config: &CellConfig, point: [f64; 2]) -> HitClass {
    let r = point[0].hypot(point[1]);
    if r <= config.r_inner {
        HitClass::Surface(Surface::Inner)
    } else if r <= config.r_outer {
        HitClass::Surface(Surface::Outer)
    } else {
        HitClass::Escape
    }
}

/// Paraxial per-pass advance angles `arccos(1 - d/R)` of the outer and
/// inner surfaces, in degrees.
pub fn advance_angles(config: &CellConfig) -> Result<(f64, f64), GeometryError> {
    let angle = |roc: f64| {
        let d = config.separation;
        if d <= 0.0 || d >= roc {
            Err(GeometryError::UnstableCell {
                separation: d,
                roc,
            })
        } else {
            Ok((1.0 - d / roc).acos().to_degrees())
        }
    };
    Ok((angle(config.roc_outer)?, angle(config.roc_inner)?))
}
