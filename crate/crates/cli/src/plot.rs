//! Hand-rolled SVG charts for run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use roadside_core::error::Result;
use roadside_core::metrics::{EvalReport, Stats};
use roadside_core::pipeline::io::{read_json, RunPaths};
use roadside_core::sim::{read_ground_truth_csv, Scenario};
use roadside_core::tracker::read_tracks_csv;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut s = Self { body: String::new(), width, height };
        s.rect(0.0, 0.0, width, height, "#ffffff");
        s
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, opacity: f64) {
        if pts.len() < 2 {
            return;
        }
        let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
            d.join(" ")
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, stroke: &str, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" stroke="{stroke}" fill="{fill}" stroke-dasharray="4 3"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let s = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{s}</text>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Writes every chart and returns the paths.
pub fn write_all(paths: &RunPaths, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario: Scenario = read_json(&paths.scenario())?;
    let report: EvalReport = read_json(&paths.report())?;
    let charts = [
        ("trajectories.svg", trajectories(paths, &scenario)?),
        ("localization_error.svg", error_bars(&report)),
        ("trip_error.svg", trip_bars(&report)),
    ];
    let mut written = Vec::new();
    for (name, svg) in charts {
        let p = out.join(name);
        std::fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}

/// Ground-truth paths in grey, tracks colored by id, cameras as dots.
fn trajectories(paths: &RunPaths, scenario: &Scenario) -> Result<String> {
    let gt = read_ground_truth_csv(File::open(paths.ground_truth())?)?;
    let tracks = read_tracks_csv(File::open(paths.tracks())?)?;
    let half = scenario.roundabout.arm_length + 10.0;
    let (size, margin) = (640.0, 20.0);
    let scale = (size - 2.0 * margin) / (2.0 * half);
    let c = scenario.roundabout.center;
    let map = |x: f64, y: f64| (margin + (x - c.x + half) * scale, margin + (c.y + half - y) * scale);

    let mut svg = Svg::new(size, size + 24.0);
    for r in scenario.roundabout.lane_radii {
        let (cx, cy) = map(c.x, c.y);
        svg.circle(cx, cy, r * scale, "#bbbbbb", "none");
    }
    let mut gt_paths: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for f in &gt {
        for v in &f.vehicles {
            gt_paths.entry(v.vehicle_id).or_default().push(map(v.position.x, v.position.y));
        }
    }
    for pts in gt_paths.values() {
        svg.polyline(pts, "#999999", 3.0, 0.5);
    }
    let mut track_paths: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for t in &tracks {
        track_paths.entry(t.track_id).or_default().push(map(t.x, t.y));
    }
    for (id, pts) in &track_paths {
        svg.polyline(pts, PALETTE[*id as usize % PALETTE.len()], 1.2, 1.0);
    }
    for cam in &scenario.cameras {
        let g = cam.ground_position();
        let (x, y) = map(g.x, g.y);
        svg.circle(x, y, 4.0, "#000000", "#000000");
        svg.text(x + 6.0, y - 6.0, "start", &format!("cam {}", cam.camera_id));
    }
    svg.text(
        size / 2.0,
        size + 16.0,
        "middle",
        &format!("{} vehicles, {} tracks", gt_paths.len(), track_paths.len()),
    );
    Ok(svg.finish())
}

fn bar_chart(title: &str, bars: &[(String, Stats)]) -> String {
    let (w, h) = (120.0 + 70.0 * bars.len() as f64, 360.0);
    let (left, bottom, top) = (60.0, h - 60.0, 40.0);
    let mut svg = Svg::new(w, h);
    svg.text(w / 2.0, 20.0, "middle", title);
    let max = bars.iter().map(|(_, s)| s.mean + s.std).fold(0.0, f64::max).max(1e-6) * 1.1;
    let y = |v: f64| bottom - (bottom - top) * v / max;
    svg.line(left, top, left, bottom, "#000000");
    svg.line(left, bottom, w - 20.0, bottom, "#000000");
    for k in 0..=4 {
        let v = max * k as f64 / 4.0;
        svg.line(left - 4.0, y(v), left, y(v), "#000000");
        svg.text(left - 6.0, y(v) + 4.0, "end", &format!("{v:.2}"));
    }
    for (i, (label, s)) in bars.iter().enumerate() {
        let x = left + 20.0 + 70.0 * i as f64;
        svg.rect(x, y(s.mean), 40.0, bottom - y(s.mean), PALETTE[i % PALETTE.len()]);
        let mid = x + 20.0;
        svg.line(mid, y((s.mean - s.std).max(0.0)), mid, y(s.mean + s.std), "#000000");
        svg.text(mid, bottom + 16.0, "middle", label);
        svg.text(mid, bottom + 32.0, "middle", &format!("{:.3}", s.mean));
    }
    svg.finish()
}

/// Mean ± std localization error per camera, fused and by ROI.
fn error_bars(report: &EvalReport) -> String {
    let mut bars: Vec<(String, Stats)> = Vec::new();
    if let Some(f) = &report.fusion {
        bars.extend(f.single.iter().map(|(l, s)| (l.replace("camera ", "cam "), *s)));
        bars.push(("fused".into(), f.fused));
    }
    for (name, s) in [("in-ROI", report.loc_in_roi), ("out-ROI", report.loc_out_roi)] {
        if let Some(s) = s {
            bars.push((name.into(), s));
        }
    }
    bar_chart("localization error (m)", &bars)
}

fn trip_bars(report: &EvalReport) -> String {
    let bars: Vec<(String, Stats)> =
        report.trips.iter().map(|t| (format!("v{}", t.vehicle_id), t.error.all)).collect();
    bar_chart("trip error (m)", &bars)
}
