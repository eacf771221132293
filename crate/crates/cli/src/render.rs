//! Bird's-eye SVG rendering of scenes and attack outcomes.
//!
//! Output is a pure function of the inputs. Agent ids are the only `<text>`
//! nodes, one per agent, so downstream tooling can parse labels without
//! fighting legends or tooltips.

use advscene::{detect, scan, CollaborationChoice, FusionMode, ModelConfig, OrientedBox, Scene};
use std::fmt::Write;

pub struct RenderOptions {
    /// Members drawn with a collaborator outline; must include the ego to
    /// draw detections.
    pub collab: Vec<u64>,
    /// Agents marked with a perturbation circle.
    pub targets: Vec<u64>,
    /// When set, detection boxes from this model are overlaid.
    pub model: Option<FusionMode>,
    /// Draw the pooled LiDAR returns of the collaborators (or the ego alone
    /// when no collaborators are given).
    pub lidar: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { collab: Vec::new(), targets: Vec::new(), model: None, lidar: true }
    }
}

const PX_PER_M: f64 = 8.0;
const MARGIN_M: f64 = 3.0;

struct Frame {
    xmin: f64,
    ymax: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn of(scene: &Scene) -> Frame {
        let (xmin, ymin, xmax, ymax) = scene.map_bounds;
        Frame {
            xmin: xmin - MARGIN_M,
            ymax: ymax + MARGIN_M,
            width: (xmax - xmin + 2.0 * MARGIN_M) * PX_PER_M,
            height: (ymax - ymin + 2.0 * MARGIN_M) * PX_PER_M,
        }
    }

    fn x(&self, wx: f64) -> f64 {
        (wx - self.xmin) * PX_PER_M
    }

    fn y(&self, wy: f64) -> f64 {
        (self.ymax - wy) * PX_PER_M
    }

    fn polygon_points(&self, b: &OrientedBox) -> String {
        b.corners()
            .iter()
            .map(|c| format!("{:.2},{:.2}", self.x(c.x), self.y(c.y)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn render_svg(scene: &Scene, opts: &RenderOptions) -> String {
    let f = Frame::of(scene);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {:.2} {:.2}\" width=\"{:.0}\" height=\"{:.0}\">",
        f.width, f.height, f.width, f.height
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#fafafa\"/>");

    // Map frame.
    let (xmin, ymin, xmax, ymax) = scene.map_bounds;
    let _ = writeln!(
        s,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#ffffff\" stroke=\"#263238\" stroke-width=\"2\"/>",
        f.x(xmin),
        f.y(ymax),
        (xmax - xmin) * PX_PER_M,
        (ymax - ymin) * PX_PER_M
    );

    for obs in &scene.obstacles {
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"#b0bec5\" stroke=\"#607d8b\" stroke-width=\"1\"/>",
            f.polygon_points(obs)
        );
    }

    if opts.lidar {
        let viewpoints: Vec<u64> =
            if opts.collab.is_empty() { vec![scene.ego_id] } else { opts.collab.clone() };
        for v in viewpoints {
            if let Ok(cloud) = scan(scene, v) {
                for p in &cloud.points {
                    let _ = writeln!(
                        s,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"#4db6ac\"/>",
                        f.x(p.position.x),
                        f.y(p.position.y)
                    );
                }
            }
        }
    }

    for agent in &scene.agents {
        let fp = agent.footprint();
        let is_ego = agent.id == scene.ego_id;
        let is_collab = !is_ego && opts.collab.contains(&agent.id);
        let (fill, stroke, stroke_w) = if is_ego {
            ("#ff9800", "#e65100", 2.5)
        } else if is_collab {
            ("#bbdefb", "#0d47a1", 2.5)
        } else if agent.intelligent {
            ("#e1f5fe", "#0288d1", 1.2)
        } else {
            ("#eceff1", "#546e7a", 1.2)
        };
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"{}\" stroke=\"{}\" stroke-width=\"{}\"/>",
            f.polygon_points(&fp),
            fill,
            stroke,
            stroke_w
        );
        // Heading tick from the center to the front edge midpoint.
        let front = agent.pose.to_world(advscene::Point2 { x: agent.length / 2.0, y: 0.0 });
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            f.x(agent.pose.x),
            f.y(agent.pose.y),
            f.x(front.x),
            f.y(front.y),
            stroke
        );
        if opts.targets.contains(&agent.id) {
            let r = 0.5 * (agent.length * agent.length + agent.width * agent.width).sqrt() + 0.8;
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#d32f2f\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>",
                f.x(agent.pose.x),
                f.y(agent.pose.y),
                r * PX_PER_M
            );
        }
    }

    if let Some(mode) = opts.model {
        let members = if opts.collab.is_empty() { vec![scene.ego_id] } else { opts.collab.clone() };
        let collab = CollaborationChoice::new(members);
        if let Ok(dets) = detect(scene, &collab, &ModelConfig::new(mode)) {
            for d in &dets {
                let _ = writeln!(
                    s,
                    "<polygon points=\"{}\" fill=\"none\" stroke=\"#2e7d32\" stroke-width=\"1.8\" stroke-dasharray=\"4 3\" opacity=\"{:.2}\"/>",
                    f.polygon_points(&d.bbox),
                    0.35 + 0.65 * d.confidence
                );
            }
        }
    }

    // Ids last so labels sit on top; these are the only text nodes.
    for agent in &scene.agents {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" font-family=\"monospace\" text-anchor=\"middle\" fill=\"#212121\">{}</text>",
            f.x(agent.pose.x),
            f.y(agent.pose.y) - 4.0,
            agent.id
        );
    }

    s.push_str("</svg>\n");
    s
}
