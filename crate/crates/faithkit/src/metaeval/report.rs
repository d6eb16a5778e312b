//! Report output: a TSV table, a JSON mirror, and an optional scatter plot
//! of metric values against human judgments.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::metaeval::{CorrelationReport, MetaEvalError, PairedSeries};

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> MetaEvalError + '_ {
    move |source| MetaEvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Writes one tab-separated row per report:
/// `metric grouping n rho ci_low ci_high` (fixed 6-decimal floats, empty
/// confidence columns when no interval was computed).
pub fn write_report_tsv(
    reports: &[CorrelationReport],
    path: impl AsRef<Path>,
) -> Result<(), MetaEvalError> {
    let path = path.as_ref();
    let mut out = String::from("metric\tgrouping\tn\trho\tci_low\tci_high\n");
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{}\t{}",
            r.metric,
            r.grouping.as_str(),
            r.n,
            r.rho,
            format_opt(r.ci_low),
            format_opt(r.ci_high),
        )
        .expect("string formatting cannot fail");
    }
    std::fs::write(path, out).map_err(io_error(path))
}

/// JSON mirror of the TSV report: an array of report objects.
pub fn write_report_json(
    reports: &[CorrelationReport],
    path: impl AsRef<Path>,
) -> Result<(), MetaEvalError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(reports).expect("report serialization cannot fail");
    std::fs::write(path, json).map_err(io_error(path))
}

const PLOT_WIDTH: u32 = 480;
const PLOT_HEIGHT: u32 = 360;
const MARGIN: u32 = 32;

/// Renders one point per paired sample (metric on x, human judgment on y)
/// to a PNG next to the report.
pub fn write_scatter_png(
    series: &PairedSeries,
    path: impl AsRef<Path>,
) -> Result<(), MetaEvalError> {
    let path = path.as_ref();
    let mut img = RgbImage::from_pixel(PLOT_WIDTH, PLOT_HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([40, 40, 40]);
    for x in MARGIN..(PLOT_WIDTH - MARGIN) {
        img.put_pixel(x, PLOT_HEIGHT - MARGIN, axis);
    }
    for y in MARGIN..(PLOT_HEIGHT - MARGIN) {
        img.put_pixel(MARGIN, y, axis);
    }
    let (x_min, x_max) = padded_range(&series.metric_values);
    let (y_min, y_max) = padded_range(&series.human_values);
    let point = Rgb([30, 80, 200]);
    for (xv, yv) in series.metric_values.iter().zip(&series.human_values) {
        let fx = (xv - x_min) / (x_max - x_min);
        let fy = (yv - y_min) / (y_max - y_min);
        let px = MARGIN as f64 + fx * (PLOT_WIDTH - 2 * MARGIN) as f64;
        let py = (PLOT_HEIGHT - MARGIN) as f64 - fy * (PLOT_HEIGHT - 2 * MARGIN) as f64;
        draw_dot(&mut img, px.round() as i64, py.round() as i64, point);
    }
    img.save(path).map_err(|e| MetaEvalError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span == 0.0 {
        (min - 1.0, max + 1.0)
    } else {
        (min - 0.05 * span, max + 0.05 * span)
    }
}

fn draw_dot(img: &mut RgbImage, cx: i64, cy: i64, color: Rgb<u8>) {
    for dx in -1..=1i64 {
        for dy in -1..=1i64 {
            let x = cx + dx;
            let y = cy + dy;
            if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}
