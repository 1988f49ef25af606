use crate::se2::Point2;
use crate::sim::{Episode, Scene};
use nalgebra::Matrix2;
use std::fmt::Write;

const SCALE: f64 = 50.0;
const PAD: f64 = 20.0;

/// What the plot overlays on the scene.
#[derive(Clone, Debug, Default)]
pub struct PlotData {
    pub agent_path: Vec<Point2>,
    /// Waypoint MAP positions with world-frame position covariance.
    pub waypoints: Vec<(Point2, Matrix2<f64>)>,
    pub landmarks: Vec<(Point2, String)>,
}

/// Semi-axes (major, minor) and major-axis angle of the 1σ ellipse.
pub fn ellipse_axes(cov: &Matrix2<f64>) -> (f64, f64, f64) {
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let mid = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    ((mid + r).max(0.0).sqrt(), (mid - r).max(0.0).sqrt(), angle)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    xmin: f64,
    ymax: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        (x - self.xmin) * SCALE + PAD
    }
    fn y(&self, y: f64) -> f64 {
        (self.ymax - y) * SCALE + PAD
    }
    fn points(&self, pts: &[Point2]) -> String {
        pts.iter()
            .map(|p| format!("{:.2},{:.2}", self.x(p.x), self.y(p.y)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Deterministic SVG of scene, reference path (green), agent path (blue),
/// goal (red), landmark estimates and waypoint estimates with 1σ ellipses.
pub fn emit_trajectory_svg(scene: &Scene, episode: &Episode, data: &PlotData) -> String {
    let b = &scene.bounds;
    let f = Frame {
        xmin: b.xmin,
        ymax: b.ymax,
    };
    let w = b.width() * SCALE + 2.0 * PAD;
    let h = b.height() * SCALE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="walls" stroke="black" stroke-width="3">"#);
    for wall in &scene.walls {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            f.x(wall.a.x),
            f.y(wall.a.y),
            f.x(wall.b.x),
            f.y(wall.b.y)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="landmarks" fill="gray" font-size="11" font-family="sans-serif">"#);
    for l in &scene.landmarks {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="8" height="8"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            f.x(l.x) - 4.0,
            f.y(l.y) - 4.0,
            f.x(l.x) + 6.0,
            f.y(l.y) - 6.0,
            escape(&l.label)
        );
    }
    let _ = writeln!(s, "</g>");
    if episode.reference_path.len() > 1 {
        let _ = writeln!(
            s,
            r#"<polyline id="reference" points="{}" fill="none" stroke="green" stroke-width="2"/>"#,
            f.points(&episode.reference_path)
        );
    }
    if data.agent_path.len() > 1 {
        let _ = writeln!(
            s,
            r#"<polyline id="agent" points="{}" fill="none" stroke="blue" stroke-width="2"/>"#,
            f.points(&data.agent_path)
        );
    }
    let _ = writeln!(s, r#"<g id="landmark-estimates" fill="deepskyblue">"#);
    for (p, label) in &data.landmarks {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3"><title>{}</title></circle>"#,
            f.x(p.x),
            f.y(p.y),
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="waypoints" fill="gold" fill-opacity="0.25" stroke="goldenrod">"#);
    for (p, cov) in &data.waypoints {
        let (rx, ry, angle) = ellipse_axes(cov);
        // SVG y points down, so rotations flip sign
        let _ = writeln!(
            s,
            r#"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.2} {:.2} {:.2})"/>"#,
            f.x(p.x),
            f.y(p.y),
            rx * SCALE,
            ry * SCALE,
            -angle.to_degrees(),
            f.x(p.x),
            f.y(p.y)
        );
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="goldenrod"/>"#, f.x(p.x), f.y(p.y));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<circle id="goal" cx="{:.2}" cy="{:.2}" r="6" fill="red"/>"#,
        f.x(episode.goal.x),
        f.y(episode.goal.y)
    );
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se2::Pose2;
    use crate::sim::{Bounds, SceneLandmark, Wall};

    fn fixture() -> (Scene, Episode) {
        let scene = Scene {
            landmarks: vec![SceneLandmark {
                id: 0,
                label: "piano".into(),
                x: 2.0,
                y: 0.0,
            }],
            walls: vec![Wall {
                a: Point2::new(-1.0, -1.0),
                b: Point2::new(3.0, -1.0),
            }],
            bounds: Bounds {
                xmin: -1.0,
                ymin: -1.0,
                xmax: 3.0,
                ymax: 1.0,
            },
        };
        let episode = Episode {
            id: "ep".into(),
            scene: "scene.json".into(),
            start: Pose2::identity(),
            instruction: "stop at the piano.".into(),
            ir: None,
            reference_path: vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)],
            goal: Point2::new(2.0, 0.0),
            seed: 0,
        };
        (scene, episode)
    }

    #[test]
    fn diagonal_ellipse_axes() {
        let (rx, ry, angle) = ellipse_axes(&Matrix2::new(4.0, 0.0, 0.0, 0.25));
        assert!((rx - 2.0).abs() < 1e-12 && (ry - 0.5).abs() < 1e-12 && angle.abs() < 1e-12);
        let (rx, ry, angle) = ellipse_axes(&Matrix2::new(0.25, 0.0, 0.0, 4.0));
        assert!((rx - 2.0).abs() < 1e-12 && (ry - 0.5).abs() < 1e-12);
        assert!((angle.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn scene_only_plot_is_well_formed() {
        let (scene, episode) = fixture();
        let svg = emit_trajectory_svg(&scene, &episode, &PlotData::default());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("stroke=\"green\"") && svg.contains("id=\"goal\""));
        assert!(!svg.contains("id=\"agent\""));
        assert_eq!(svg, emit_trajectory_svg(&scene, &episode, &PlotData::default()));
    }

    #[test]
    fn overlays_are_drawn() {
        let (scene, episode) = fixture();
        let data = PlotData {
            agent_path: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.1)],
            waypoints: vec![(Point2::new(2.0, 0.0), Matrix2::new(0.04, 0.0, 0.0, 0.01))],
            landmarks: vec![(Point2::new(2.0, 0.1), "a<b".into())],
        };
        let svg = emit_trajectory_svg(&scene, &episode, &data);
        assert!(svg.contains("stroke=\"blue\""));
        assert!(svg.contains("rx=\"10.00\" ry=\"5.00\""));
        assert!(svg.contains("a&lt;b"));
    }
}
