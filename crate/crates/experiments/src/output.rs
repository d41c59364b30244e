//! Result bundles: CSV tables, SVG plots and run metadata on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use patchbeam::{Error, Result};

use crate::analysis::fmt_num;
use crate::config::ScenarioConfig;

/// Version of the CSV schemas; bump when a header changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "patch", "x", "ubar", "vbar", "ustd", "vstd"];
pub const SPECTRUM_HEADER: [&str; 5] = ["re", "im", "class", "branch", "residual"];

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        CsvTable {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(format!("writing {}: {e}", self.name));
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Parse(format!("writing {}: {e}", self.name)))
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

/// Shorthand for a row of numbers.
pub fn nums(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| fmt_num(v)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Markers only, no connecting line.
    pub scatter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl Plot {
    pub fn new(name: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn line(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            label: label.into(),
            points,
            scatter: false,
        });
        self
    }

    pub fn scatter(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            label: label.into(),
            points,
            scatter: true,
        });
        self
    }

    pub fn logs(mut self, log_x: bool, log_y: bool) -> Self {
        self.log_x = log_x;
        self.log_y = log_y;
        self
    }

    /// Polylines and markers inside a framed box with min/max tick labels.
    pub fn to_svg(&self) -> String {
        let (w, h, margin) = (640.0, 420.0, 60.0);
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|&(x, y)| (tx(x), ty(y))))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= 1e-300 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = bounds(|p| p.0);
        let (y0, y1) = bounds(|p| p.1);
        let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
        let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
        let tick = |v: f64, log: bool| if log { format!("1e{}", fmt_num((v * 100.0).round() / 100.0)) } else { fmt_num(v) };

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * margin,
            h - 2.0 * margin
        );
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            h / 2.0,
            h / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(s, r#"<text x="{margin}" y="{}" text-anchor="start">{}</text>"#, h - margin + 16.0, tick(x0, self.log_x));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, w - margin, h - margin + 16.0, tick(x1, self.log_x));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, margin - 4.0, h - margin, tick(y0, self.log_y));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, margin - 4.0, margin + 10.0, tick(y1, self.log_y));
        for (k, series) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let coords: Vec<(f64, f64)> = series
                .points
                .iter()
                .map(|&(x, y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (sx(x), sy(y)))
                .collect();
            if series.scatter {
                for (x, y) in &coords {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{colour}"/>"#);
                }
            } else if !coords.is_empty() {
                let path: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            }
            let ly = margin + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{ly}" text-anchor="end" fill="{colour}">{}</text>"#,
                w - margin - 6.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub config: ScenarioConfig,
    pub tables: Vec<CsvTable>,
    pub plots: Vec<Plot>,
    /// Headline numbers, echoed into the metadata and printed by the CLI.
    pub summary: Vec<(String, String)>,
    pub wall_time: Duration,
}

impl ResultBundle {
    pub fn table(&self, name: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn metadata(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "# run metadata");
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "scenario = \"{}\"", self.config.scenario);
        let _ = writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "schema_version = {SCHEMA_VERSION}");
        let _ = writeln!(s, "wall_time_seconds = {}", fmt_num(self.wall_time.as_secs_f64()));
        let tables: Vec<String> = self.tables.iter().map(|t| format!("\"{}.csv\"", t.name)).collect();
        let _ = writeln!(s, "tables = [{}]", tables.join(", "));
        let _ = writeln!(s, "\n[summary]");
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{} = {}", k, toml::Value::String(v.clone()));
        }
        let _ = writeln!(s, "\n# configuration as run");
        let mut config = toml::Table::new();
        config.insert(
            "config".into(),
            toml::Value::try_from(&self.config).map_err(|e| Error::Parse(format!("cannot serialise config: {e}")))?,
        );
        s.push_str(&toml::to_string(&config).map_err(|e| Error::Parse(format!("cannot serialise config: {e}")))?);
        Ok(s)
    }
}

/// Write every table as `<name>.csv`, plots as `<name>.svg` when enabled,
/// and `metadata.toml`. Returns the paths written.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &bundle.tables {
        let p = dir.join(format!("{}.csv", t.name));
        fs::write(&p, t.to_csv_bytes()?)?;
        written.push(p);
    }
    if bundle.config.output.svg {
        for plot in &bundle.plots {
            let p = dir.join(format!("{}.svg", plot.name));
            fs::write(&p, plot.to_svg())?;
            written.push(p);
        }
    }
    let p = dir.join("metadata.toml");
    fs::write(&p, bundle.metadata()?)?;
    written.push(p);
    Ok(written)
}
