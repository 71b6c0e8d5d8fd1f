use serde::Serialize;

use super::{classify_hit, CellConfig, GeometryError, HitClass, MirrorId, Ray, Surface};

/// One reflection inside the cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotRecord {
    /// Pass that ended at this reflection (pass 1 runs entry -> exit mirror).
    pub pass_index: usize,
    pub mirror_id: MirrorId,
    pub surface_id: Surface,
    pub point: [f64; 3],
    pub radial_dist: f64,
    /// Path length from the entry pupil up to this reflection.
    pub cumulative_path: f64,
    pub spot_radius: Option<f64>,
}

/// How a trace ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ExitEvent {
    ExitedThroughPupil { pass_index: usize, point: [f64; 3] },
    /// The beam fell back into the entry pupil before reaching the exit pupil.
    PrematureExit { pass_index: usize, point: [f64; 3] },
    EscapedAperture { pass_index: usize },
    MaxPassesReached,
}

impl ExitEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            ExitEvent::ExitedThroughPupil { .. } => "exited_through_pupil",
            ExitEvent::PrematureExit { .. } => "premature_exit",
            ExitEvent::EscapedAperture { .. } => "escaped_aperture",
            ExitEvent::MaxPassesReached => "max_passes_reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePath {
    pub spots: Vec<SpotRecord>,
    pub exit_event: ExitEvent,
    /// Path length from entry to the last event (exit pupil, escape plane or
    /// final reflection).
    pub total_path: f64,
}

impl TracePath {
    pub fn n_reflections(&self) -> usize {
        self.spots.len()
    }

    /// Number of straight segments travelled.
    pub fn n_passes(&self) -> usize {
        match self.exit_event {
            ExitEvent::ExitedThroughPupil { pass_index, .. }
            | ExitEvent::PrematureExit { pass_index, .. } => pass_index,
            _ => self.spots.len(),
        }
    }

    pub fn exited(&self) -> bool {
        matches!(self.exit_event, ExitEvent::ExitedThroughPupil { .. })
    }

    pub fn spots_on(&self, mirror: MirrorId) -> impl Iterator<Item = &SpotRecord> {
        self.spots.iter().filter(move |s| s.mirror_id == mirror)
    }

    /// Copy with the spot list truncated to the first `n` reflections.
    pub fn truncated(&self, n: usize) -> TracePath {
        let spots: Vec<SpotRecord> = self.spots.iter().take(n).cloned().collect();
        let total_path = spots.last().map_or(0.0, |s| s.cumulative_path);
        TracePath {
            spots,
            exit_event: ExitEvent::MaxPassesReached,
            total_path,
        }
    }

    /// Segment lengths in pass order, including the final one into the exit pupil.
    pub fn segment_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spots.len() + 1);
        let mut prev = 0.0;
        for s in &self.spots {
            out.push(s.cumulative_path - prev);
            prev = s.cumulative_path;
        }
        if self.total_path > prev {
            out.push(self.total_path - prev);
        }
        out
    }
}

/// Which pupils are active while tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PupilMode {
    /// Exit through the exit pupil; re-entry into the entry pupil is reported.
    Both,
    /// Exit pupil treated as mirror surface (used to probe spot positions).
    EntryOnly,
    /// No pupils: pure mirror dynamics.
    None,
}

/// Traces `entry` through the cell until it leaves through the exit pupil,
/// escapes an aperture, or `max_passes` straight segments have been travelled.
pub fn trace_cell(
    config: &CellConfig,
    entry: &Ray,
    max_passes: usize,
) -> Result<TracePath, GeometryError> {
    trace_cell_with(config, entry, max_passes, PupilMode::Both)
}

pub fn trace_cell_with(
    config: &CellConfig,
    entry: &Ray,
    max_passes: usize,
    pupils: PupilMode,
) -> Result<TracePath, GeometryError> {
    config.validate()?;
    config.check_stability()?;
    if entry.direction.z <= 0.0 {
        return Err(GeometryError::InvalidRay(
            "entry ray must travel toward the exit mirror (+z)".into(),
        ));
    }

    let mut ray = *entry;
    let mut spots = Vec::new();
    let mut cumulative = 0.0;

    for pass in 1..=max_passes {
        let mirror = MirrorId::for_pass(pass);
        let plane_z = config.mirror_plane_z(mirror);
        let t_plane = (plane_z - ray.origin.z) / ray.direction.z;
        let on_plane = ray.at(t_plane);

        let surface = match classify_hit(config, [on_plane.x, on_plane.y]) {
            HitClass::Surface(s) => s,
            HitClass::Escape => {
                return Ok(TracePath {
                    spots,
                    exit_event: ExitEvent::EscapedAperture { pass_index: pass },
                    total_path: cumulative + t_plane.max(0.0),
                });
            }
        };

        let sphere = config.sphere(mirror, surface);
        let t = sphere
            .concave_hit(&ray)
            .ok_or(GeometryError::NoIntersection)?;
        let point = ray.at(t);
        cumulative += t;
        let p = [point.x, point.y, point.z];

        if surface == Surface::Outer {
            let pupil_hit = match (pupils, mirror) {
                (PupilMode::Both, MirrorId::Exit) => config.in_pupil(mirror, point.x, point.y),
                (PupilMode::Both | PupilMode::EntryOnly, MirrorId::Entry) => {
                    config.in_pupil(mirror, point.x, point.y)
                }
                _ => false,
            };
            if pupil_hit {
                let exit_event = match mirror {
                    MirrorId::Exit => ExitEvent::ExitedThroughPupil {
                        pass_index: pass,
                        point: p,
                    },
                    MirrorId::Entry => ExitEvent::PrematureExit {
                        pass_index: pass,
                        point: p,
                    },
                };
                return Ok(TracePath {
                    spots,
                    exit_event,
                    total_path: cumulative,
                });
            }
        }

        let n = sphere.normal(&point);
        let v = ray.direction;
        let reflected = v - n * (2.0 * v.dot(&n));
        ray = Ray {
            origin: point,
            direction: reflected / reflected.norm(),
        };
        spots.push(SpotRecord {
            pass_index: pass,
            mirror_id: mirror,
            surface_id: surface,
            point: p,
            radial_dist: point.x.hypot(point.y),
            cumulative_path: cumulative,
            spot_radius: None,
        });
    }

    Ok(TracePath {
        spots,
        exit_event: ExitEvent::MaxPassesReached,
        total_path: cumulative,
    })
}

/// Largest mirror sag over the aperture, used to bound segment lengths.
#[cfg(test)]
pub(crate) fn max_sag(config: &CellConfig) -> f64 {
    let sag = |roc: f64, a: f64| roc - (roc * roc - a * a).max(0.0).sqrt();
    sag(config.roc_outer, config.r_outer).max(sag(config.roc_inner, config.r_inner))
        + config.inner_offset_z.abs()
}
