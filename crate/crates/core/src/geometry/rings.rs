use serde::Serialize;

use super::{GeometryError, MirrorId, Surface, TracePath};

/// Spots whose radial distances chain together within this gap form one ring.
pub const RING_TOLERANCE_MM: f64 = 0.5;

const MIN_SPOTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ring {
    pub mean_radius: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub population: usize,
    pub surface: Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MirrorRings {
    pub mirror: MirrorId,
    /// Rings sorted by increasing radius.
    pub rings: Vec<Ring>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingSummary {
    pub mirrors: Vec<MirrorRings>,
}

impl RingSummary {
    pub fn rings_on(&self, mirror: MirrorId) -> &[Ring] {
        self.mirrors
            .iter()
            .find(|m| m.mirror == mirror)
            .map_or(&[], |m| m.rings.as_slice())
    }

    /// Number of rings lying on a given surface, summed over both mirrors.
    pub fn count_on_surface(&self, surface: Surface) -> usize {
        self.mirrors
            .iter()
            .flat_map(|m| m.rings.iter())
            .filter(|r| r.surface == surface)
            .count()
    }

    /// Radius of the outermost ring on a mirror.
    pub fn outermost(&self, mirror: MirrorId) -> Option<&Ring> {
        self.rings_on(mirror).last()
    }
}

/// Groups the spots on each mirror into concentric rings by single-linkage
/// clustering of their radial distances with gap [`RING_TOLERANCE_MM`].
///
/// A gap between neighbouring radii that is larger than the tolerance but
/// smaller than twice the tolerance is treated as ambiguous.
pub fn ring_analysis(path: &TracePath) -> Result<RingSummary, GeometryError> {
    ring_analysis_with(path, RING_TOLERANCE_MM)
}

pub fn ring_analysis_with(path: &TracePath, tolerance: f64) -> Result<RingSummary, GeometryError> {
    if path.spots.len() < MIN_SPOTS {
        return Err(GeometryError::InsufficientSpots {
            needed: MIN_SPOTS,
            got: path.spots.len(),
        });
    }
    let mut mirrors = Vec::new();
    for mirror in [MirrorId::Entry, MirrorId::Exit] {
        let mut spots: Vec<(f64, Surface)> = path
            .spots_on(mirror)
            .map(|s| (s.radial_dist, s.surface_id))
            .collect();
        if spots.is_empty() {
            continue;
        }
        spots.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut rings = Vec::new();
        let mut start = 0;
        for i in 1..=spots.len() {
            let split = if i == spots.len() {
                true
            } else {
                let gap = spots[i].0 - spots[i - 1].0;
                if gap > tolerance && gap <= 2.0 * tolerance {
                    return Err(GeometryError::DegeneratePattern(format!(
                        "mirror {}: radial gap {gap:.3} mm between {:.3} and {:.3} mm",
                        mirror.number(),
                        spots[i - 1].0,
                        spots[i].0
                    )));
                }
                gap > tolerance
            };
            if split {
                rings.push(make_ring(&spots[start..i], mirror)?);
                start = i;
            }
        }
        mirrors.push(MirrorRings { mirror, rings });
    }
    Ok(RingSummary { mirrors })
}

fn make_ring(members: &[(f64, Surface)], mirror: MirrorId) -> Result<Ring, GeometryError> {
    let surface = members[0].1;
    if members.iter().any(|m| m.1 != surface) {
        return Err(GeometryError::DegeneratePattern(format!(
            "mirror {}: ring near {:.3} mm straddles the inner/outer boundary",
            mirror.number(),
            members[0].0
        )));
    }
    let n = members.len();
    Ok(Ring {
        mean_radius: members.iter().map(|m| m.0).sum::<f64>() / n as f64,
        min_radius: members[0].0,
        max_radius: members[n - 1].0,
        population: n,
        surface,
    })
}
