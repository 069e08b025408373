// SPDX-License-Identifier: Apache-2.0

//! SVG renderings of a report bundle. Every number drawn here is also in
//! the bundle's CSV/JSON files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{CalibrationBin, CalibrationReport};
use crate::report::ReportBundle;
use crate::taxonomy::{Cell, JointGrid, TaxonomyConfig, TaxonomyReport};

pub const RELIABILITY_FILE: &str = "reliability.svg";
pub const HEATMAP_FILE: &str = "joint_heatmap.svg";
pub const TAXONOMY_BAR_FILE: &str = "taxonomy_bar.svg";

const PROBE_COLOR: &str = "#1f77b4";
const QUERY_COLOR: &str = "#d62728";
const MAX_RADIUS: f64 = 14.0;

/// Writes `reliability.svg`, `joint_heatmap.svg` and `taxonomy_bar.svg`.
pub fn emit_figures(bundle: &ReportBundle, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let figures = [
        (
            RELIABILITY_FILE,
            reliability_svg(&bundle.calibration_probe, &bundle.calibration_query),
        ),
        (HEATMAP_FILE, heatmap_svg(&bundle.grid)),
        (
            TAXONOMY_BAR_FILE,
            taxonomy_bar_svg(&bundle.taxonomy, &bundle.meta.config.taxonomy),
        ),
    ];
    for (name, svg) in figures {
        let path = out_dir.join(name);
        fs::write(&path, svg).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn open_svg(width: u32, height: u32) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" \
         width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

/// Confidence on x, empirical accuracy on y, both over `[0.5, 1]`; one
/// circle per bin and source, radius proportional to the square root of the
/// bin count. Empty bins are drawn with radius 0 on the diagonal.
pub fn reliability_svg(probe: &CalibrationReport, query: &CalibrationReport) -> String {
    let (left, top, size) = (60.0, 30.0, 320.0);
    let x = |c: f64| left + (c - 0.5) / 0.5 * size;
    let y = |a: f64| top + size - (a - 0.5) / 0.5 * size;
    // Accuracy below 0.5 is possible; such points are clamped to the frame.
    let y_clamped = |a: f64| y(a.clamp(0.5, 1.0));

    let mut s = open_svg(460, 400);
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#444\"/>"
    );
    let _ = writeln!(
        s,
        "<line class=\"diagonal\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        x(0.5),
        y(0.5),
        x(1.0),
        y(1.0)
    );
    for k in 0..=5 {
        let v = 0.5 + 0.1 * k as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.1}</text>",
            x(v),
            top + size + 16.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>",
            left - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">mean confidence</text>",
        left + size / 2.0,
        top + size + 34.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">empirical accuracy</text>",
        top + size / 2.0,
        top + size / 2.0
    );

    let max_count = probe
        .bins
        .iter()
        .chain(&query.bins)
        .map(|b| b.count)
        .max()
        .unwrap_or(0)
        .max(1);
    for (report, color) in [(probe, PROBE_COLOR), (query, QUERY_COLOR)] {
        let _ = writeln!(
            s,
            "<g class=\"series\" data-source=\"{}\" fill=\"{color}\" fill-opacity=\"0.6\" stroke=\"{color}\">",
            report.source
        );
        for bin in &report.bins {
            let (cx, cy) = point_position(bin, &x, &y_clamped);
            let r = MAX_RADIUS * (bin.count as f64 / max_count as f64).sqrt();
            let _ = writeln!(
                s,
                "  <circle class=\"point\" cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" data-count=\"{}\" data-lower=\"{}\" data-upper=\"{}\"/>",
                bin.count, bin.lower, bin.upper
            );
        }
        s.push_str("</g>\n");
    }
    for (i, (report, color)) in [(probe, PROBE_COLOR), (query, QUERY_COLOR)]
        .iter()
        .enumerate()
    {
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{ly}\" r=\"5\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\">{} (ECE {:.3})</text>",
            left + 12.0,
            left + 22.0,
            ly + 4.0,
            report.source,
            report.ece
        );
    }
    s.push_str("</svg>\n");
    s
}

fn point_position(
    bin: &CalibrationBin,
    x: &impl Fn(f64) -> f64,
    y: &impl Fn(f64) -> f64,
) -> (f64, f64) {
    match (bin.mean_confidence, bin.empirical_accuracy) {
        (Some(c), Some(a)) => (x(c), y(a)),
        _ => {
            let mid = 0.5 * (bin.lower + bin.upper);
            (x(mid), y(mid))
        }
    }
}

/// Joint histogram of (probe, query) gold probabilities with marginal
/// histograms. Probe on x, query on y. Every cell is drawn; empty cells get
/// zero fill opacity.
pub fn heatmap_svg(grid: &JointGrid) -> String {
    let n = grid.grid_size;
    let (left, top, size, margin) = (60.0, 90.0, 300.0, 60.0);
    let cell = size / n as f64;
    let max = grid.max_count().max(1) as f64;

    let mut s = open_svg(480, 460);
    let _ = writeln!(s, "<g class=\"heatmap\">");
    for (i, row) in grid.counts.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let rx = left + j as f64 * cell;
            let ry = top + size - (i + 1) as f64 * cell;
            let _ = writeln!(
                s,
                "  <rect class=\"cell\" x=\"{rx:.2}\" y=\"{ry:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" \
                 fill=\"#222\" fill-opacity=\"{:.4}\" data-query-bin=\"{i}\" data-probe-bin=\"{j}\" data-count=\"{count}\"/>",
                count as f64 / max
            );
        }
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#444\"/>"
    );

    let probe_marginal: Vec<usize> = (0..n)
        .map(|j| grid.counts.iter().map(|row| row[j]).sum())
        .collect();
    let query_marginal: Vec<usize> = grid.counts.iter().map(|row| row.iter().sum()).collect();
    let hist_max = probe_marginal
        .iter()
        .chain(&query_marginal)
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let _ = writeln!(
        s,
        "<g class=\"histogram\" data-source=\"probe\" fill=\"{PROBE_COLOR}\">"
    );
    for (j, &count) in probe_marginal.iter().enumerate() {
        let h = count as f64 / hist_max * margin;
        let _ = writeln!(
            s,
            "  <rect class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{h:.2}\" data-count=\"{count}\"/>",
            left + j as f64 * cell,
            top - 8.0 - h
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<g class=\"histogram\" data-source=\"query\" fill=\"{QUERY_COLOR}\">"
    );
    for (i, &count) in query_marginal.iter().enumerate() {
        let w = count as f64 / hist_max * margin;
        let _ = writeln!(
            s,
            "  <rect class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{w:.2}\" height=\"{cell:.2}\" data-count=\"{count}\"/>",
            left + size + 8.0,
            top + size - (i + 1) as f64 * cell
        );
    }
    s.push_str("</g>\n");
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.2}</text>",
            left + v * size,
            top + size + 16.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            left - 6.0,
            top + size - v * size + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">probe p(gold)</text>",
        left + size / 2.0,
        top + size + 34.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">query p(gold)</text>",
        top + size / 2.0,
        top + size / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// One bar per taxonomy cell in canonical order, height = fraction.
pub fn taxonomy_bar_svg(report: &TaxonomyReport, config: &TaxonomyConfig) -> String {
    let (left, top, height, bar, gap) = (50.0, 30.0, 240.0, 36.0, 12.0);
    let width = left + Cell::ALL.len() as f64 * (bar + gap) + 20.0;
    let mut s = open_svg(width.ceil() as u32, 460);
    let _ = writeln!(
        s,
        "<text x=\"{left}\" y=\"18\">fraction of examples per cell (tau = {})</text>",
        report.tau
    );
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444\"/>",
        top + height,
        width - 20.0,
        top + height
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            left - 6.0,
            top + height - v * height + 4.0
        );
    }
    s.push_str("<g class=\"bars\">\n");
    for (k, cell) in Cell::ALL.iter().enumerate() {
        let fraction = report.fraction(*cell);
        let h = fraction * height;
        let bx = left + gap / 2.0 + k as f64 * (bar + gap);
        let color = match cell {
            Cell::Deception => "#ff7f0e",
            Cell::AgreementCorrect | Cell::AgreementIncorrect => "#7f7f7f",
            Cell::ModelConfabulation | Cell::ProbeConfabulationError => "#9467bd",
            Cell::HeterogeneityProbeAdvantage | Cell::HeterogeneityQueryAdvantage => "#2ca02c",
            _ => "#8c564b",
        };
        let _ = writeln!(
            s,
            "  <rect class=\"bar\" x=\"{bx:.2}\" y=\"{:.2}\" width=\"{bar}\" height=\"{h:.2}\" fill=\"{color}\" \
             data-cell=\"{}\" data-count=\"{}\" data-fraction=\"{fraction}\"/>",
            top + height - h,
            cell.name(),
            report.counts[cell]
        );
        let lx = bx + bar / 2.0;
        let ly = top + height + 10.0;
        let _ = writeln!(
            s,
            "  <text x=\"{lx:.1}\" y=\"{ly:.1}\" text-anchor=\"end\" transform=\"rotate(-60 {lx:.1} {ly:.1})\">{}</text>",
            escape(config.label(*cell))
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}
