//! Spot-pattern rendering as seen looking into one mirror face.

use std::fmt::Write as _;

use crate::geometry::{CellConfig, MirrorId, SpotRecord, TracePath};

/// Drawn radius for spots without a beam radius, in mm.
const DEFAULT_SPOT_MM: f64 = 0.5;
const MIN_RADIUS_PX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgCircle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    /// `#rrggbb`.
    pub color: String,
    pub pass_index: usize,
}

/// Spots on one mirror mapped mm → px around the viewbox centre, coloured
/// from blue (first reflection) to green (last).
#[derive(Debug, Clone, PartialEq)]
pub struct SvgScene {
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub elements: Vec<SvgCircle>,
    /// Aperture outlines, px radii.
    pub outlines: Vec<f64>,
}

/// Linear blue → green blend, `t` in [0, 1].
pub fn gradient(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let g = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("#00{g:02x}{b:02x}")
}

impl SvgScene {
    pub fn for_mirror(trace: &TracePath, config: &CellConfig, mirror: MirrorId, size_px: f64) -> Self {
        let spots: Vec<&SpotRecord> = trace.spots_on(mirror).collect();
        let title = format!("mirror {} ({} spots)", mirror.number(), spots.len());
        Self::from_spots(&spots, config, size_px, title)
    }

    pub fn from_spots(spots: &[&SpotRecord], config: &CellConfig, size_px: f64, title: String) -> Self {
        let half = size_px / 2.0;
        let scale = 0.95 * half / config.r_outer;
        let n = spots.len();
        let elements = spots
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                let cx = half + s.point[0] * scale;
                // SVG y grows downward
                let cy = half - s.point[1] * scale;
                let r = (s.spot_radius.unwrap_or(DEFAULT_SPOT_MM) * scale).max(MIN_RADIUS_PX);
                // keep the disk inside the viewbox
                let r = r.min(cx).min(cy).min(size_px - cx).min(size_px - cy).max(0.0);
                SvgCircle {
                    cx,
                    cy,
                    r,
                    color: gradient(t),
                    pass_index: s.pass_index,
                }
            })
            .collect();
        SvgScene {
            width: size_px,
            height: size_px,
            title,
            elements,
            outlines: vec![config.r_outer * scale, config.r_inner * scale],
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(s, "<title>{}</title>", self.title);
        let _ = writeln!(s, r##"<rect width="{}" height="{}" fill="#ffffff"/>"##, self.width, self.height);
        for r in &self.outlines {
            let _ = writeln!(
                s,
                r##"<circle class="aperture" cx="{c}" cy="{c}" r="{r:.3}" fill="none" stroke="#999999"/>"##,
                c = self.width / 2.0
            );
        }
        for e in &self.elements {
            let _ = writeln!(
                s,
                r#"<circle class="spot" data-pass="{}" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="{}"/>"#,
                e.pass_index, e.cx, e.cy, e.r, e.color
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{trace_cell, Injection};

    #[test]
    fn gradient_ends() {
        assert_eq!(gradient(0.0), "#0000ff");
        assert_eq!(gradient(1.0), "#00ff00");
    }

    #[test]
    fn one_element_per_spot_inside_viewbox() {
        let cfg = CellConfig::reference();
        let path = trace_cell(&cfg, &cfg.entry_ray(&Injection::reference()), 400).unwrap();
        for mirror in [MirrorId::Entry, MirrorId::Exit] {
            let scene = SvgScene::for_mirror(&path, &cfg, mirror, 600.0);
            assert_eq!(scene.elements.len(), path.spots_on(mirror).count());
            for e in &scene.elements {
                assert!(e.cx - e.r >= 0.0 && e.cx + e.r <= scene.width);
                assert!(e.cy - e.r >= 0.0 && e.cy + e.r <= scene.height);
            }
            let svg = scene.render();
            assert_eq!(svg.matches(r#"class="spot""#).count(), scene.elements.len());
            assert_eq!(scene.elements.first().unwrap().color, "#0000ff");
            assert_eq!(scene.elements.last().unwrap().color, "#00ff00");
        }
    }
}
