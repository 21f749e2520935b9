//! Run artifacts as text: a trace table, a per-tick node status log, a
//! run summary, and a static SVG picture of the workspace. Everything
//! is rendered with fixed precision so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use crate::scenario::ScenarioConfig;
use crate::sim::{status_str, RunArtifacts, TraceRecord};

/// 9 significant digits, scientific. One format for every float that
/// lands in a file keeps diffs meaningful.
pub fn fmt_num(x: f64) -> String {
    format!("{:.8e}", x)
}

/// Header plus one comma-separated row per simulation step. List-valued
/// columns join their entries with ';'.
pub fn trace_csv(artifacts: &RunArtifacts, n_joints: usize) -> String {
    let mut out = String::new();
    out.push_str("time,base_x,base_y,base_theta");
    for i in 0..n_joints {
        let _ = write!(out, ",q{}", i);
    }
    out.push_str(",ee_x,ee_y,ee_z,cube_x,cube_y,cube_z");
    out.push_str(",active_tasks,platform_target,aperture,residuals");
    out.push_str(",base_vx,base_vy,attached,status\n");

    for r in &artifacts.trace {
        let _ = write!(
            out,
            "{},{},{},{}",
            fmt_num(r.time),
            fmt_num(r.base[0]),
            fmt_num(r.base[1]),
            fmt_num(r.base[2])
        );
        for q in &r.q {
            let _ = write!(out, ",{}", fmt_num(*q));
        }
        let _ = write!(
            out,
            ",{},{},{},{},{},{}",
            fmt_num(r.ee.x),
            fmt_num(r.ee.y),
            fmt_num(r.ee.z),
            fmt_num(r.cube.x),
            fmt_num(r.cube.y),
            fmt_num(r.cube.z)
        );
        let residuals: Vec<String> = r
            .residuals
            .iter()
            .map(|(level, slack)| format!("{}:{}", level, fmt_num(*slack)))
            .collect();
        let _ = write!(
            out,
            ",{},{},{},{}",
            r.active_tasks.join(";"),
            r.platform_target.as_deref().unwrap_or(""),
            fmt_num(r.aperture),
            residuals.join(";")
        );
        let _ = write!(
            out,
            ",{},{},{},{}\n",
            fmt_num(r.base_twist[0]),
            fmt_num(r.base_twist[1]),
            r.attached,
            status_str(r.solve_status)
        );
    }
    out
}

/// One line per (tick, node) pair in tree pre-order; nodes the tick
/// never reached log as N.
pub fn ticks_log(artifacts: &RunArtifacts, node_ids: &[String]) -> String {
    let mut out = String::new();
    for t in &artifacts.ticks {
        for id in node_ids {
            let letter = t
                .statuses
                .get(id)
                .map(|s| s.letter())
                .unwrap_or('N');
            let _ = writeln!(out, "{},{},{}", t.tick, id, letter);
        }
    }
    out
}

/// Key facts of a finished run as a small TOML document.
pub fn summary_toml(artifacts: &RunArtifacts, config: &ScenarioConfig) -> String {
    let place = Vector2::new(config.place.center[0], config.place.center[1]);
    let cube_xy = match artifacts.trace.last() {
        Some(r) => Vector2::new(r.cube.x, r.cube.y),
        None => Vector2::new(config.cube.start[0], config.cube.start[1]),
    };
    let final_dist = (cube_xy - place).norm();

    let mut out = String::new();
    let _ = writeln!(out, "outcome = \"{}\"", artifacts.outcome.as_str());
    let _ = writeln!(
        out,
        "completion_time = {}",
        fmt_num(artifacts.completion_time)
    );
    let _ = writeln!(out, "final_cube_distance = {}", fmt_num(final_dist));
    let _ = writeln!(out, "bt_ticks = {}", artifacts.ticks.len());
    let _ = writeln!(out, "hqp_solves = {}", artifacts.solve_count);
    let _ = writeln!(out, "reversals = {}", artifacts.reversal_count());
    out.push('\n');
    out.push_str("[max_residual]\n");
    for (level, slack) in &artifacts.max_slack {
        let _ = writeln!(out, "level_{} = {}", level, fmt_num(*slack));
    }
    out
}

/// The subset of a trace row the plotter needs.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub time: f64,
    pub base: Vector2<f64>,
    pub ee: Vector2<f64>,
    pub cube: Vector2<f64>,
}

impl From<&TraceRecord> for TracePoint {
    fn from(r: &TraceRecord) -> Self {
        TracePoint {
            time: r.time,
            base: Vector2::new(r.base[0], r.base[1]),
            ee: Vector2::new(r.ee.x, r.ee.y),
            cube: Vector2::new(r.cube.x, r.cube.y),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {0}: {1}")]
    Malformed(usize, String),
    #[error("trace has a header but no records")]
    Empty,
}

/// Parse a trace table written by [`trace_csv`]. Columns are located by
/// header name so extra columns and different joint counts are fine.
pub fn read_trace(text: &str) -> Result<Vec<TracePoint>, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(TraceError::Malformed(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize, TraceError> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| TraceError::Malformed(1, format!("missing column '{}'", name)))
    };
    let idx = [
        find("time")?,
        find("base_x")?,
        find("base_y")?,
        find("ee_x")?,
        find("ee_y")?,
        find("cube_x")?,
        find("cube_y")?,
    ];

    let mut points = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let value = |col: usize| -> Result<f64, TraceError> {
            let raw = fields.get(col).ok_or_else(|| {
                TraceError::Malformed(i + 1, format!("expected at least {} columns", col + 1))
            })?;
            raw.parse::<f64>()
                .map_err(|_| TraceError::Malformed(i + 1, format!("bad number '{}'", raw)))
        };
        points.push(TracePoint {
            time: value(idx[0])?,
            base: Vector2::new(value(idx[1])?, value(idx[2])?),
            ee: Vector2::new(value(idx[3])?, value(idx[4])?),
            cube: Vector2::new(value(idx[5])?, value(idx[6])?),
        });
    }
    if points.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(points)
}

struct Frame {
    min: Vector2<f64>,
    scale: f64,
    height: f64,
}

impl Frame {
    /// World xy to pixel xy, y axis flipped so north is up.
    fn px(&self, p: Vector2<f64>) -> (f64, f64) {
        (
            (p.x - self.min.x) * self.scale,
            self.height - (p.y - self.min.y) * self.scale,
        )
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: impl Iterator<Item = Vector2<f64>>, style: &str) {
    out.push_str("  <polyline fill=\"none\" ");
    out.push_str(style);
    out.push_str(" points=\"");
    for (i, p) in pts.enumerate() {
        let (x, y) = frame.px(p);
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.2},{:.2}", x, y);
    }
    out.push_str("\"/>\n");
}

/// Top-down workspace picture: table footprint, place circle, cube
/// start, waypoints, and the base and end-effector paths.
pub fn plot_svg(points: &[TracePoint], config: &ScenarioConfig) -> Result<String, TraceError> {
    if points.is_empty() {
        return Err(TraceError::Empty);
    }

    let table_min = Vector2::new(
        config.table.center[0] - config.table.size[0] / 2.0,
        config.table.center[1] - config.table.size[1] / 2.0,
    );
    let table_max = Vector2::new(
        config.table.center[0] + config.table.size[0] / 2.0,
        config.table.center[1] + config.table.size[1] / 2.0,
    );

    let mut min = table_min;
    let mut max = table_max;
    let mut grow = |p: Vector2<f64>| {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    };
    for p in points {
        grow(p.base);
        grow(p.ee);
        grow(p.cube);
    }
    for w in config.waypoints.values() {
        grow(Vector2::new(w[0], w[1]));
    }
    let margin = 0.15;
    min -= Vector2::new(margin, margin);
    max += Vector2::new(margin, margin);

    let width = 800.0;
    let span = max - min;
    let scale = width / span.x;
    let height = (span.y * scale).ceil().max(120.0);
    let frame = Frame { min, scale, height };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">",
        width, height, width, height
    );
    out.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"#fdfdf8\"/>\n");

    // Table footprint.
    let (tx, ty) = frame.px(Vector2::new(table_min.x, table_max.y));
    let _ = writeln!(
        out,
        "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#e8d8b8\" stroke=\"#a08050\" stroke-width=\"2\"/>",
        tx,
        ty,
        (table_max.x - table_min.x) * scale,
        (table_max.y - table_min.y) * scale
    );

    // Place target circle.
    let place = Vector2::new(config.place.center[0], config.place.center[1]);
    let (px, py) = frame.px(place);
    let _ = writeln!(
        out,
        "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#2a8f2a\" stroke-width=\"2\" stroke-dasharray=\"5,3\"/>",
        px,
        py,
        config.place.radius * scale
    );

    // Cube start footprint.
    let cube = Vector2::new(config.cube.start[0], config.cube.start[1]);
    let half = crate::sim::CUBE_EDGE / 2.0 * scale;
    let (cx, cy) = frame.px(cube);
    let _ = writeln!(
        out,
        "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#c44\" stroke=\"#822\"/>",
        cx - half,
        cy - half,
        2.0 * half,
        2.0 * half
    );

    // Waypoints.
    for (name, w) in &config.waypoints {
        let (wx, wy) = frame.px(Vector2::new(w[0], w[1]));
        let _ = writeln!(
            out,
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#555\"/>",
            wx, wy
        );
        let _ = writeln!(
            out,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"14\" fill=\"#333\">{}</text>",
            wx + 7.0,
            wy - 7.0,
            name
        );
    }

    polyline(
        &mut out,
        &frame,
        points.iter().map(|p| p.base),
        "stroke=\"#1f6fb4\" stroke-width=\"2\"",
    );
    polyline(
        &mut out,
        &frame,
        points.iter().map(|p| p.ee),
        "stroke=\"#e07820\" stroke-width=\"1.5\"",
    );

    // Start of the base path.
    let (sx, sy) = frame.px(points[0].base);
    let _ = writeln!(
        out,
        "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"#1f6fb4\"/>",
        sx, sy
    );

    let legend = [
        ("#1f6fb4", "base path"),
        ("#e07820", "end effector path"),
        ("#2a8f2a", "place target"),
        ("#c44", "cube start"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = 20.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            "  <rect x=\"12\" y=\"{:.2}\" width=\"14\" height=\"4\" fill=\"{}\"/>",
            y - 4.0,
            color
        );
        let _ = writeln!(
            out,
            "  <text x=\"32\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\" fill=\"#333\">{}</text>",
            y, label
        );
    }

    out.push_str("</svg>\n");
    Ok(out)
}

/// Write all artifacts of a finished run into `dir`, returning the
/// paths written.
pub fn write_run_artifacts(
    dir: &Path,
    artifacts: &RunArtifacts,
    config: &ScenarioConfig,
    node_ids: &[String],
    n_joints: usize,
) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: &str| -> std::io::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    emit("trace.csv", &trace_csv(artifacts, n_joints))?;
    emit("ticks.log", &ticks_log(artifacts, node_ids))?;
    emit("summary.toml", &summary_toml(artifacts, config))?;
    if let Some(lines) = &artifacts.solver_debug {
        let mut body = lines.join("\n");
        body.push('\n');
        emit("solver_debug.jsonl", &body)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hqp::SolveStatus;
    use crate::sim::SimOutcome;
    use nalgebra::Vector3;

    fn record(t: f64) -> TraceRecord {
        TraceRecord {
            step: 0,
            time: t,
            base: [0.1, 0.2, 0.0],
            base_twist: [0.15, 0.0],
            q: vec![0.0, 0.5],
            ee: Vector3::new(0.3, 0.4, 0.9),
            cube: Vector3::new(1.95, 0.55, 0.735),
            attached: false,
            aperture: 1.0,
            platform_target: Some("C".into()),
            active_tasks: vec!["Posture".into()],
            residuals: vec![(1, 0.0), (3, 2.5e-4)],
            solve_status: SolveStatus::Optimal,
        }
    }

    fn artifacts() -> RunArtifacts {
        RunArtifacts {
            outcome: SimOutcome::RootSuccess,
            completion_time: 1.0,
            trace: vec![record(0.005), record(0.01)],
            ticks: Vec::new(),
            solve_count: 2,
            max_slack: [(1u32, 0.0), (3u32, 2.5e-4)].into_iter().collect(),
            hygiene_violations: Vec::new(),
            warnings: Vec::new(),
            leftover_tasks: Vec::new(),
            leftover_tracked: Vec::new(),
            solver_debug: None,
        }
    }

    fn config() -> ScenarioConfig {
        let toml = r#"
            robot = "robot.toml"
            tree = "tree.bt"
            [schedule]
            bt_hz = 10.0
            sot_hz = 200.0
            platform_hz = 100.0
            gripper_hz = 100.0
            timeout = 10.0
            [solver]
            epsilon = 1e-6
            [platform]
            speed = 0.15
            goal_radius = 0.02
            start = [0.0, 0.0]
            [gripper]
            travel_time = 0.5
            start_aperture = 1.0
            [table]
            center = [1.5, 0.75]
            size = [1.2, 0.8]
            top = 0.72
            [cube]
            start = [1.95, 0.55]
            [place]
            center = [1.05, 0.55]
            radius = 0.025
            [grasp]
            epsilon = 0.01
            [arm]
            q_home = [0.0, 0.5]
            [waypoints]
            B = [0.9, 0.0]
            C = [2.1, 0.0]
        "#;
        ScenarioConfig::from_toml_str(toml).unwrap()
    }

    #[test]
    fn trace_round_trips_through_reader() {
        let csv = trace_csv(&artifacts(), 2);
        let points = read_trace(&csv).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].base.x, 0.1);
        assert_eq!(points[1].cube.y, 0.55);
    }

    #[test]
    fn trace_reader_reports_line_numbers() {
        let csv = trace_csv(&artifacts(), 2);
        let mut broken: Vec<&str> = csv.lines().collect();
        let bad = broken[2].replace("5.50000000e-1", "not-a-number");
        broken[2] = &bad;
        let err = read_trace(&broken.join("\n")).unwrap_err();
        match err {
            TraceError::Malformed(line, _) => assert_eq!(line, 3),
            other => panic!("unexpected error {:?}", other),
        }
    }

    #[test]
    fn empty_trace_is_an_error() {
        let header_only = trace_csv(
            &RunArtifacts {
                trace: Vec::new(),
                ..artifacts()
            },
            2,
        );
        assert!(matches!(
            read_trace(&header_only),
            Err(TraceError::Empty)
        ));
    }

    #[test]
    fn summary_lists_outcome_and_levels() {
        let s = summary_toml(&artifacts(), &config());
        assert!(s.contains("outcome = \"root-success\""));
        assert!(s.contains("level_1 = 0.00000000e0"));
        assert!(s.contains("level_3 = 2.50000000e-4"));
        // Valid TOML.
        let parsed: toml::Value = toml::from_str(&s).unwrap();
        assert_eq!(parsed["bt_ticks"].as_integer(), Some(0));
    }

    #[test]
    fn svg_contains_expected_elements() {
        let csv = trace_csv(&artifacts(), 2);
        let points = read_trace(&csv).unwrap();
        let svg = plot_svg(&points, &config()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.matches("<rect").count() >= 2);
        assert!(svg.contains("<circle"));
        assert!(svg.contains(">B<") && svg.contains(">C<"));
        assert!(plot_svg(&[], &config()).is_err());
    }

    #[test]
    fn floats_use_nine_significant_digits() {
        assert_eq!(fmt_num(0.15), "1.50000000e-1");
        assert_eq!(fmt_num(0.0), "0.00000000e0");
        assert_eq!(fmt_num(-2.0 / 3.0), "-6.66666667e-1");
    }
}
