//! Minimal SVG line charts: average temperature against the setpoint on
//! top, heater command staircases below.

use std::fmt::Write;

use agentic_control::twin::Trajectory;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Line {
    label: String,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

struct Frame {
    top: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let w = WIDTH - MARGIN_L - MARGIN_R;
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0).max(1e-12) * w
    }

    fn py(&self, y: f64) -> f64 {
        self.top + PANEL_H - (y - self.y.0) / (self.y.1 - self.y.0).max(1e-12) * PANEL_H
    }
}

fn bounds(lines: &[Line]) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = x;
    for (px, py) in lines.iter().flat_map(|l| l.points.iter()) {
        x = (x.0.min(*px), x.1.max(*px));
        y = (y.0.min(*py), y.1.max(*py));
    }
    if !x.0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    let pad = ((y.1 - y.0) * 0.05).max(0.05);
    (x, (y.0 - pad, y.1 + pad))
}

fn panel(svg: &mut String, top: f64, title: &str, unit: &str, lines: &[Line]) {
    let (x, y) = bounds(lines);
    let f = Frame { top, x, y };
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let _ = writeln!(
        svg,
        r##"<rect x="{x0}" y="{top}" width="{}" height="{PANEL_H}" fill="none" stroke="#444"/>"##,
        x1 - x0
    );
    let _ = writeln!(svg, r#"<text x="{x0}" y="{}" font-size="14">{title}</text>"#, top - 8.0);
    for k in 0..=4 {
        let v = y.0 + (y.1 - y.0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            f.py(v) + 4.0
        );
        let t = x.0 + (x.1 - x.0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{t:.0}</text>"#,
            f.px(t),
            top + PANEL_H + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})">{unit}</text>"#,
        top + PANEL_H / 2.0,
        top + PANEL_H / 2.0
    );
    for (i, l) in lines.iter().enumerate() {
        let pts: Vec<String> = l.points.iter().map(|&(a, b)| format!("{:.2},{:.2}", f.px(a), f.py(b))).collect();
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            l.color,
            pts.join(" ")
        );
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}" font-size="11">{}</text>"#,
            x1 + 10.0,
            x1 + 30.0,
            l.color,
            x1 + 36.0,
            ly + 4.0,
            escape(&l.label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn staircase(traj: &Trajectory, pick: impl Fn(&agentic_control::twin::Sample) -> f64) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(traj.len() * 2);
    for w in traj.samples.windows(2) {
        pts.push((w[0].time, pick(&w[0])));
        pts.push((w[1].time, pick(&w[0])));
    }
    pts
}

/// One or more episodes on shared axes.
pub fn episode_svg(runs: &[(String, &Trajectory)], setpoint: f64) -> String {
    let mut temps = Vec::new();
    let mut powers = Vec::new();
    let (mut t0, mut t1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, (label, traj)) in runs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let (Some(a), Some(b)) = (traj.samples.first(), traj.last()) {
            t0 = t0.min(a.time);
            t1 = t1.max(b.time);
        }
        temps.push(Line {
            label: format!("{label} T_avg"),
            color,
            dashed: false,
            points: traj.samples.iter().map(|s| (s.time, s.average())).collect(),
        });
        powers.push(Line {
            label: format!("{label} q1"),
            color,
            dashed: false,
            points: staircase(traj, |s| s.q1),
        });
        powers.push(Line {
            label: format!("{label} q2"),
            color,
            dashed: true,
            points: staircase(traj, |s| s.q2),
        });
    }
    if t0.is_finite() {
        temps.push(Line {
            label: "setpoint".into(),
            color: "#000000",
            dashed: true,
            points: vec![(t0, setpoint), (t1, setpoint)],
        });
    }
    let height = MARGIN_T + 2.0 * PANEL_H + GAP + 40.0;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif">"#
    );
    svg.push('\n');
    panel(&mut svg, MARGIN_T, "Average temperature", "K", &temps);
    panel(&mut svg, MARGIN_T + PANEL_H + GAP, "Heater commands", "W", &powers);
    svg.push_str("</svg>\n");
    svg
}
