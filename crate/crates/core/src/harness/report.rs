use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{RegretRecord, RegretRow};
use crate::error::{Error, Result};

pub const RECORD_SUFFIX: &str = ".record.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" | "svg_lines" => Ok(Self::Svg),
            other => Err(Error::config(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn write_rows_csv(rows: &[RegretRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<RegretRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_record_json(record: &RegretRecord, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(record)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_record_json(path: &Path) -> Result<RegretRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// File stem shared by all outputs of one record.
pub fn record_stem(record: &RegretRecord) -> String {
    format!("{}_seed{}", record.label, record.seed)
}

/// Write the full JSON record and its CSV table into `dir`.
pub fn save_record(record: &RegretRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = record_stem(record);
    let json = dir.join(format!("{stem}{RECORD_SUFFIX}"));
    let csv = dir.join(format!("{stem}.csv"));
    write_record_json(record, &json)?;
    write_rows_csv(&record.rows, &csv)?;
    Ok(vec![json, csv])
}

/// All `*.record.json` files in `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<RegretRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(RECORD_SUFFIX))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_record_json(p)).collect()
}

/// Pixel mapping of a line chart with optional logarithmic axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePlot {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub log_x: bool,
    pub log_y: bool,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

fn axis(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

fn unaxis(v: f64, log: bool) -> f64 {
    if log {
        10f64.powf(v)
    } else {
        v
    }
}

fn lerp_inverse(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

impl LinePlot {
    /// Fit the axes to `series`; on log axes nonpositive values are ignored.
    pub fn fit(series: &[(String, Vec<(f64, f64)>)], log_x: bool, log_y: bool) -> Result<Self> {
        let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| {
            (!log_x || *x > 0.0) && (!log_y || *y > 0.0) && x.is_finite() && y.is_finite()
        });
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            let (ax, ay) = (axis(x, log_x), axis(y, log_y));
            xr = (xr.0.min(ax), xr.1.max(ax));
            yr = (yr.0.min(ay), yr.1.max(ay));
        }
        if !xr.0.is_finite() {
            return Err(Error::config("nothing to plot"));
        }
        Ok(Self {
            width: 800.0,
            height: 500.0,
            margin: 60.0,
            log_x,
            log_y,
            x_range: xr,
            y_range: yr,
        })
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = lerp_inverse(axis(x, self.log_x), self.x_range);
        let fy = lerp_inverse(axis(y, self.log_y), self.y_range);
        (
            self.margin + fx * (self.width - 2.0 * self.margin),
            self.height - self.margin - fy * (self.height - 2.0 * self.margin),
        )
    }

    pub fn unmap(&self, px: f64, py: f64) -> (f64, f64) {
        let fx = (px - self.margin) / (self.width - 2.0 * self.margin);
        let fy = (self.height - self.margin - py) / (self.height - 2.0 * self.margin);
        (
            unaxis(
                self.x_range.0 + fx * (self.x_range.1 - self.x_range.0),
                self.log_x,
            ),
            unaxis(
                self.y_range.0 + fy * (self.y_range.1 - self.y_range.0),
                self.log_y,
            ),
        )
    }

    pub fn render(&self, series: &[(String, Vec<(f64, f64)>)], title: &str) -> String {
        const COLORS: [&str; 8] = [
            "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
        ];
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            self.width / 2.0,
            escape(title)
        );
        let (x0, y0) = (self.margin, self.height - self.margin);
        let (x1, y1) = (self.width - self.margin, self.margin);
        let _ = writeln!(
            svg,
            r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
        );
        for (label, value) in [("x", self.x_range), ("y", self.y_range)] {
            let log = if label == "x" { self.log_x } else { self.log_y };
            let (lo, hi) = (unaxis(value.0, log), unaxis(value.1, log));
            let (tx, ty, anchor) = if label == "x" {
                (x1, y0 + 20.0, "end")
            } else {
                (x0 - 5.0, y1 - 5.0, "start")
            };
            let _ = writeln!(
                svg,
                r#"<text x="{tx}" y="{ty}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{label}: {lo:.4} .. {hi:.4}{}</text>"#,
                if log { " (log)" } else { "" }
            );
        }
        for (i, (label, points)) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut coords = String::new();
            for &(x, y) in points {
                if (self.log_x && x <= 0.0)
                    || (self.log_y && y <= 0.0)
                    || !x.is_finite()
                    || !y.is_finite()
                {
                    continue;
                }
                let (px, py) = self.map(x, y);
                let _ = write!(coords, "{px:.4},{py:.4} ");
            }
            let _ = writeln!(
                svg,
                r#"<polyline data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(label),
                coords.trim_end()
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
                x0 + 10.0,
                y1 + 16.0 * (i + 1) as f64,
                escape(label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Polyline points of an SVG produced by [`LinePlot::render`], in pixels.
pub fn parse_polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| {
            let start = l.find("points=\"").map_or(l.len(), |i| i + 8);
            let body = &l[start..];
            let body = &body[..body.find('"').unwrap_or(body.len())];
            body.split_whitespace()
                .filter_map(|pair| {
                    let (x, y) = pair.split_once(',')?;
                    Some((x.parse().ok()?, y.parse().ok()?))
                })
                .collect()
        })
        .collect()
}

/// Cumulative-regret series of each record, at the rows with a comparator.
pub fn regret_series(records: &[RegretRecord]) -> Vec<(String, Vec<(f64, f64)>)> {
    records
        .iter()
        .map(|r| {
            (
                record_stem(r),
                r.rows
                    .iter()
                    .filter_map(|row| row.regret.map(|g| (row.k as f64, g)))
                    .collect(),
            )
        })
        .collect()
}

/// Emit `records` into `dir` in the requested format.
pub fn emit_report(
    records: &[RegretRecord],
    dir: &Path,
    format: ReportFormat,
    log_log: bool,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::config("no records to report"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        ReportFormat::Csv => records
            .iter()
            .map(|r| {
                let path = dir.join(format!("{}.csv", record_stem(r)));
                write_rows_csv(&r.rows, &path).map(|_| path)
            })
            .collect(),
        ReportFormat::Json => {
            let path = dir.join("report.json");
            let text = serde_json::to_string_pretty(records)?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        ReportFormat::Svg => {
            let series = regret_series(records);
            let plot = LinePlot::fit(&series, log_log, log_log)?;
            let path = dir.join("regret.svg");
            std::fs::write(&path, plot.render(&series, "cumulative regret"))
                .map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
