//! Report files: JSONL step log, text occupancy grid, full JSON report and
//! a static SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::episode::EpisodeReport;
use crate::error::{Error, Result};
use crate::grid::OccupancyGrid;

pub const STEP_LOG: &str = "steps.jsonl";
pub const GRID: &str = "grid.txt";
pub const REPORT: &str = "report.json";
pub const SVG: &str = "scene.svg";

/// Writes the step log, grid and report into `dir` (created if needed),
/// plus an SVG when asked. Returns the written paths.
pub fn export_artifacts(report: &EpisodeReport, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put(STEP_LOG, report.step_log_jsonl())?;
    put(GRID, report.grid.clone())?;
    put(REPORT, serde_json::to_string(report)?)?;
    if svg {
        put(SVG, render_svg(report)?)?;
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<EpisodeReport> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn rect_path(lo: [f64; 2], hi: [f64; 2]) -> String {
    format!(
        "M {} {} H {} V {} H {} Z",
        lo[0], lo[1], hi[0], hi[1], lo[0]
    )
}

/// Boundary edges between occupied and free cells.
fn contour(grid: &OccupancyGrid<f64>) -> String {
    let (w, h) = (grid.shape[0], grid.shape[1]);
    let r = grid.resolution;
    let (ox, oy) = (grid.origin[0], grid.origin[1]);
    let occ = |i: isize, j: isize| {
        i >= 0
            && j >= 0
            && (i as usize) < w
            && (j as usize) < h
            && grid.get(&[i as usize, j as usize])
    };
    let mut d = String::new();
    for i in 0..w as isize {
        for j in 0..h as isize {
            if !occ(i, j) {
                continue;
            }
            let x0 = ox + i as f64 * r;
            let y0 = oy + j as f64 * r;
            if !occ(i - 1, j) {
                write!(d, "M {} {} V {} ", x0, y0, y0 + r).unwrap();
            }
            if !occ(i + 1, j) {
                write!(d, "M {} {} V {} ", x0 + r, y0, y0 + r).unwrap();
            }
            if !occ(i, j - 1) {
                write!(d, "M {} {} H {} ", x0, y0, x0 + r).unwrap();
            }
            if !occ(i, j + 1) {
                write!(d, "M {} {} H {} ", x0, y0 + r, x0 + r).unwrap();
            }
        }
    }
    d.trim_end().to_string()
}

/// World boxes (one path each), the estimated surface boundary, the goal,
/// the tracked component's trajectory as one polyline and the final state.
pub fn render_svg(report: &EpisodeReport) -> Result<String> {
    let scene = report
        .scene
        .as_ref()
        .ok_or_else(|| Error::Config("report carries no scene".into()))?;
    let (lo, hi) = (scene.world.lo, scene.world.hi);
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let stroke = w.max(h) / 300.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="600" height="{}">"#,
        lo[0],
        -hi[1],
        w,
        h,
        (600.0 * h / w).round()
    )
    .unwrap();
    writeln!(s, r#"<g transform="scale(1,-1)" stroke-width="{stroke}">"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="black"/>"#,
        lo[0], lo[1], w, h
    )
    .unwrap();
    for b in &scene.world.obstacles {
        let fill = if b.observable { "#7a7a7a" } else { "#d9a066" };
        writeln!(
            s,
            r#"<path class="obstacle" d="{}" fill="{fill}" stroke="none"/>"#,
            rect_path(b.lo, b.hi)
        )
        .unwrap();
    }
    if !report.grid.is_empty() {
        let grid = OccupancyGrid::<f64>::from_text(&report.grid)?;
        let d = contour(&grid);
        if !d.is_empty() {
            writeln!(
                s,
                r##"<path class="surface" d="{d}" fill="none" stroke="#c0392b"/>"##
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r##"<circle class="goal" cx="{}" cy="{}" r="{}" fill="none" stroke="#27ae60"/>"##,
        scene.goal[0], scene.goal[1], report.config.r_g
    )
    .unwrap();
    let traj = report.trajectory();
    let k = scene.goal_component;
    let pts: Vec<String> = traj
        .iter()
        .filter(|x| k < x.len())
        .map(|x| format!("{},{}", x[k][0], x[k][1]))
        .collect();
    writeln!(
        s,
        r##"<polyline class="trajectory" points="{}" fill="none" stroke="#2c3e50"/>"##,
        pts.join(" ")
    )
    .unwrap();
    if let Some(last) = traj.last() {
        for p in last {
            writeln!(
                s,
                r##"<circle class="state" cx="{}" cy="{}" r="{}" fill="#2980b9"/>"##,
                p[0],
                p[1],
                stroke * 2.0
            )
            .unwrap();
        }
    }
    writeln!(s, "</g>\n</svg>").unwrap();
    Ok(s)
}
