//! Artifact emission: trace/driving CSVs, SVG plots, and run manifests.
//!
//! Every number is written with Rust's shortest round-trip decimal
//! formatting, so identical data produces identical bytes and artifacts
//! diff exactly. The manifest is the one deliberately non-reproducible
//! file: it records wall-clock time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{trace_points, PathRecord};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "time,curve,re,im";
pub const DRIVING_HEADER: &str = "time,curve,x,a";

/// Trace CSV: hull boundary points of each curve over time, curve-major.
/// `lift` is the height at which trace points are read off the rectifying
/// chain (a small multiple of the per-step fold height).
pub fn trace_csv(path: &PathRecord, lift: f64) -> Result<String> {
    let mut out = String::with_capacity(32 * path.positions.len() * path.n());
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for i in 0..path.n() {
        let pts = trace_points(path, i, lift)?;
        for (k, p) in pts.iter().enumerate() {
            writeln!(out, "{},{},{},{}", path.times[k], i, p.re, p.im).expect("string write");
        }
    }
    Ok(out)
}

/// Driving CSV: the boundary positions and capacity speeds, curve-major.
pub fn driving_csv(path: &PathRecord) -> String {
    let mut out = String::with_capacity(24 * path.positions.len() * path.n());
    out.push_str(DRIVING_HEADER);
    out.push('\n');
    for i in 0..path.n() {
        for k in 0..path.positions.len() {
            writeln!(out, "{},{},{},{}", path.times[k], i, path.positions[k][i], path.speeds[k][i])
                .expect("string write");
        }
    }
    out
}

/// One parsed trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub curve: usize,
    pub re: f64,
    pub im: f64,
}

/// Parse a trace CSV produced by [`trace_csv`] (or any file with the same
/// header and column types).
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        Some(h) => {
            return Err(Error::config(format!(
                "trace CSV must start with `{TRACE_HEADER}`, found `{h}`"
            )))
        }
        None => return Err(Error::config("trace CSV is empty")),
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::config(format!("trace CSV row {}: expected 4 fields", k + 2)));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("trace CSV row {}: bad {what} `{s}`", k + 2)))
        };
        let curve = fields[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::config(format!("trace CSV row {}: bad curve index", k + 2)))?;
        rows.push(TraceRow {
            time: parse_f(fields[0], "time")?,
            curve,
            re: parse_f(fields[2], "re")?,
            im: parse_f(fields[3], "im")?,
        });
    }
    Ok(rows)
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 560.0;
const SVG_MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#d68910", "#117a65", "#6c3483", "#a04000",
];

/// Render trace rows as a deterministic SVG: one polyline per curve over
/// an axis box, annotated with the curve count, the time span, and the
/// half-plane capacity the hull would have at unit speeds (`n * T`; the
/// trace alone does not carry the speeds).
pub fn plot_svg(rows: &[TraceRow]) -> String {
    let mut curves: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    let mut t_max = 0.0_f64;
    for r in rows {
        curves.entry(r.curve).or_default().push((r.re, r.im));
        t_max = t_max.max(r.time);
    }
    // Data bounds; the real axis belongs in the picture.
    let (mut x_min, mut x_max, mut y_max) = (-1.0_f64, 1.0_f64, 1.0_f64);
    for pts in curves.values() {
        for &(x, y) in pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_max = y_max.max(y);
        }
    }
    let pad_x = 0.05 * (x_max - x_min);
    x_min -= pad_x;
    x_max += pad_x;
    y_max *= 1.1;
    let sx = (SVG_WIDTH - 2.0 * SVG_MARGIN) / (x_max - x_min);
    let sy = (SVG_HEIGHT - 2.0 * SVG_MARGIN) / y_max;
    let px = |x: f64| SVG_MARGIN + (x - x_min) * sx;
    let py = |y: f64| SVG_HEIGHT - SVG_MARGIN - y * sy;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"#ffffff\"/>");
    // Axis box and the real axis.
    let _ = writeln!(
        svg,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>",
        SVG_MARGIN,
        SVG_MARGIN,
        SVG_WIDTH - 2.0 * SVG_MARGIN,
        SVG_HEIGHT - 2.0 * SVG_MARGIN
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999999\" stroke-width=\"1\"/>",
        px(x_min),
        py(0.0),
        px(x_max),
        py(0.0)
    );
    for (idx, (curve, pts)) in curves.iter().enumerate() {
        let colour = PALETTE[idx % PALETTE.len()];
        let mut points = String::new();
        for &(x, y) in pts {
            let _ = write!(points, "{:.3},{:.3} ", px(x), py(y));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"><title>curve {curve}</title></polyline>",
            points.trim_end()
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\">curves: {}   t: [0, {}]   hcap at unit speeds: {}</text>",
        SVG_MARGIN,
        SVG_MARGIN - 14.0,
        curves.len(),
        t_max,
        curves.len() as f64 * t_max
    );
    svg.push_str("</svg>\n");
    svg
}

/// Everything needed to reproduce a run, plus its wall time.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Echo of the parsed configuration (sorted keys).
    pub config: BTreeMap<String, String>,
    /// File names written next to this manifest.
    pub artifacts: Vec<String>,
    /// Early-stop reason if the run did not reach its horizon.
    pub stopping: Option<String>,
    /// Mirror-symmetry defect when the post-hoc check was requested.
    pub symmetry_defect: Option<f64>,
    /// Wall-clock duration; the one field exempt from reproducibility.
    pub wall_seconds: f64,
}

pub fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Write `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::config(format!("manifest serialisation: {e}")))?;
    std::fs::write(dir.join("manifest.json"), body + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_path, SimulationConfig};
    use crate::partition::{PartitionSpec, ZForm};

    fn short_path() -> PathRecord {
        let spec = PartitionSpec::new(vec![8.0 / 3.0], ZForm::Constant).unwrap();
        let cfg = SimulationConfig::new(spec, vec![0.0], 0.01, 1e-3).unwrap();
        simulate_path(&cfg, 5).unwrap()
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let path = short_path();
        let lift = 2.0 * (1e-3_f64).sqrt();
        let csv = trace_csv(&path, lift).unwrap();
        let rows = parse_trace_csv(&csv).unwrap();
        assert_eq!(rows.len(), path.positions.len());
        assert_eq!(rows[0].time, 0.0);
        assert_eq!(rows[0].curve, 0);
        // Shortest round-trip formatting reparses to identical bits.
        let reparsed = parse_trace_csv(&trace_csv(&path, lift).unwrap()).unwrap();
        assert_eq!(rows, reparsed);
    }

    #[test]
    fn driving_csv_has_header_and_counts() {
        let path = short_path();
        let csv = driving_csv(&path);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), DRIVING_HEADER);
        assert_eq!(lines.count(), path.positions.len());
    }

    #[test]
    fn malformed_traces_are_rejected() {
        assert!(parse_trace_csv("").is_err());
        assert!(parse_trace_csv("wrong,header,entirely,x\n").is_err());
        assert!(parse_trace_csv("time,curve,re,im\n0,0,1\n").is_err());
        assert!(parse_trace_csv("time,curve,re,im\n0,zero,1,2\n").is_err());
        assert!(parse_trace_csv("time,curve,re,im\n0,0,one,2\n").is_err());
    }

    #[test]
    fn svg_is_deterministic_and_handles_empty_input() {
        let empty = plot_svg(&[]);
        assert!(empty.starts_with("<svg"));
        assert!(empty.contains("curves: 0"));
        let rows = vec![
            TraceRow { time: 0.0, curve: 0, re: 0.0, im: 0.0 },
            TraceRow { time: 0.5, curve: 0, re: 0.1, im: 0.7 },
            TraceRow { time: 0.0, curve: 1, re: 2.0, im: 0.0 },
            TraceRow { time: 0.5, curve: 1, re: 1.9, im: 0.6 },
        ];
        let a = plot_svg(&rows);
        let b = plot_svg(&rows);
        assert_eq!(a, b);
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("curves: 2"));
        assert!(a.contains("hcap at unit speeds: 1"));
    }
}
