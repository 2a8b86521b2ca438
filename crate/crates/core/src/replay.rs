//! Text and SVG views of a recorded run.

use std::fmt::Write as _;

use crate::model::{BASE_X, BASE_Y};
use crate::planner::Transcript;
use crate::scenario::LoadedScenario;
use crate::timing::Trajectory;

/// One line per planning loop.
pub fn summary(transcript: &Transcript) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "method {} | {} loops | {} published | {:?} at {:.2} s",
        transcript.method,
        transcript.loops.len(),
        transcript.published.len(),
        transcript.termination,
        transcript.end_time
    );
    for l in &transcript.loops {
        let winner = match (l.winner_kind, l.winner_waypoints) {
            (Some(k), Some(n)) => format!("{k:?} ({n} waypoints)"),
            _ => "-".to_string(),
        };
        let score = l.score.map_or("-".to_string(), |s| format!("{s:.3}"));
        let _ = writeln!(
            out,
            "loop {:>3}  t={:>6.2}  {:<8}  {:<26} score {:>8}  cand {:>2}/{:>2} checked {:>2} hit {:>2}  compute {:.3} s{}",
            l.index,
            l.time,
            format!("{:?}", l.outcome).to_lowercase(),
            winner,
            score,
            l.timed,
            l.generated,
            l.checked,
            l.collided,
            l.compute_time,
            if l.overrun { "  OVERRUN" } else { "" }
        );
    }
    out
}

/// Geometry of the overhead plot, kept separate from rendering so it can
/// be inspected.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgModel {
    pub bounds: [f64; 4],
    /// Obstacle boxes as `[x0, y0, x1, y1]`.
    pub rects: Vec<[f64; 4]>,
    pub points: Vec<[f64; 2]>,
    /// Executed base path of each published trajectory, in publish order.
    pub paths: Vec<Vec<[f64; 2]>>,
    pub start: [f64; 2],
    pub goal_targets: Vec<[f64; 2]>,
}

/// Base paths actually driven: each publication plays until the next one
/// starts. Stationary publications draw nothing.
pub fn svg_model(sc: &LoadedScenario, transcript: &Transcript, t_s: f64) -> SvgModel {
    let pubs = &transcript.published;
    let mut paths = Vec::new();
    for (i, p) in pubs.iter().enumerate() {
        let traj = Trajectory::from_record(p.trajectory.clone(), t_s);
        let until = pubs.get(i + 1).map_or(traj.duration(), |n| (n.start_time - p.start_time).min(traj.duration()));
        let mut pts: Vec<[f64; 2]> = traj
            .samples()
            .iter()
            .filter(|s| s.t < until)
            .map(|s| [s.positions[BASE_X], s.positions[BASE_Y]])
            .collect();
        let end = traj.state_at(until).positions;
        pts.push([end[BASE_X], end[BASE_Y]]);
        let moved = pts.windows(2).any(|w| (w[0][0] - w[1][0]).hypot(w[0][1] - w[1][1]) > 1e-9);
        if moved {
            paths.push(pts);
        }
    }
    let rects: Vec<[f64; 4]> = sc.env.boxes().iter().map(|b| [b.min[0], b.min[1], b.max[0], b.max[1]]).collect();
    let points: Vec<[f64; 2]> = sc.env.points().iter().map(|p| [p.x, p.y]).collect();
    let start = [sc.start.positions[BASE_X], sc.start.positions[BASE_Y]];
    let goal_targets: Vec<[f64; 2]> = crate::constraints::extract_ee_constraints(&sc.goals)
        .iter()
        .map(|c| {
            let t = c.target_position();
            [t.x, t.y]
        })
        .collect();

    let mut b = [start[0], start[1], start[0], start[1]];
    let mut grow = |x: f64, y: f64| {
        b = [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)];
    };
    for r in &rects {
        grow(r[0], r[1]);
        grow(r[2], r[3]);
    }
    for p in points.iter().chain(goal_targets.iter()).chain(paths.iter().flatten()) {
        grow(p[0], p[1]);
    }
    let pad = 0.3;
    SvgModel { bounds: [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad], rects, points, paths, start, goal_targets }
}

const PATH_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders with 100 px per meter and y pointing up.
pub fn render_svg(m: &SvgModel) -> String {
    let s = 100.0;
    let [x0, y0, x1, y1] = m.bounds;
    let (w, h) = ((x1 - x0) * s, (y1 - y0) * s);
    let px = |x: f64| (x - x0) * s;
    let py = |y: f64| (y1 - y) * s;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#);
    let _ = writeln!(out, r##"<rect class="background" x="0" y="0" width="{w:.1}" height="{h:.1}" fill="#ffffff"/>"##);
    for r in &m.rects {
        let _ = writeln!(
            out,
            r##"<rect class="obstacle" x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#bbbbbb" stroke="#555555"/>"##,
            px(r[0]),
            py(r[3]),
            (r[2] - r[0]) * s,
            (r[3] - r[1]) * s
        );
    }
    for p in &m.points {
        let _ = writeln!(out, r##"<circle class="point" cx="{:.1}" cy="{:.1}" r="1.5" fill="#444444"/>"##, px(p[0]), py(p[1]));
    }
    for (i, path) in m.paths.iter().enumerate() {
        let pts: Vec<String> = path.iter().map(|p| format!("{:.1},{:.1}", px(p[0]), py(p[1]))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="path" data-index="{i}" points="{}" fill="none" stroke="{}" stroke-width="3"/>"#,
            pts.join(" "),
            PATH_COLORS[i % PATH_COLORS.len()]
        );
    }
    let _ = writeln!(out, r##"<circle class="start" cx="{:.1}" cy="{:.1}" r="6" fill="#000000"/>"##, px(m.start[0]), py(m.start[1]));
    for g in &m.goal_targets {
        let _ = writeln!(out, r##"<circle class="goal" cx="{:.1}" cy="{:.1}" r="6" fill="none" stroke="#d62728" stroke-width="2"/>"##, px(g[0]), py(g[1]));
    }
    out.push_str("</svg>\n");
    out
}
