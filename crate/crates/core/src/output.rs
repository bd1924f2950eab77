//! Result emission: CSV and text tables, the run manifest and SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::diagnostics::DiagnosticTable;
use crate::dynamics::Trajectory;
use crate::environment::KernelTable;
use crate::error::Result;
use crate::hpz::CoefficientSeries;
use crate::oracle::ComparisonReport;
use crate::transform::CanonicalTransform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
}

/// Named columns of numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// 17 significant digits: round-trips every `f64`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match *self {
            Cell::Num(x) => format_number(x),
            Cell::Int(i) => i.to_string(),
        }
    }

    fn short(&self) -> String {
        match *self {
            Cell::Num(x) if x.is_finite() => format!("{x:.6e}"),
            Cell::Num(x) => format_number(x),
            Cell::Int(i) => i.to_string(),
        }
    }
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self { headers, rows: vec![] }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Right-aligned columns for terminals.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::short).collect()).collect();
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|j| {
                cells
                    .iter()
                    .map(|r| r.get(j).map_or(0, String::len))
                    .chain([self.headers[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, items: &mut dyn Iterator<Item = &String>| {
            let parts: Vec<String> = items.zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&mut out, &mut self.headers.iter());
        for r in &cells {
            line(&mut out, &mut r.iter());
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[j] {
                    Cell::Num(x) => x,
                    Cell::Int(i) => i as f64,
                })
                .collect(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Parses a CSV written by [`Table::to_csv`].
pub fn parse_csv(text: &str) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let headers = lines.next()?.split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|c| c.parse::<f64>().ok()).collect::<Option<Vec<f64>>>())
        .collect::<Option<Vec<_>>>()?;
    Some((headers, rows))
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `i, M_eff, T_i1…T_iN, S_i1…S_iN`.
pub fn transform_table(t: &CanonicalTransform) -> Table {
    let n = t.n_osc();
    let mut headers = strings(&["i", "eff_mass"]);
    headers.extend((1..=n).map(|j| format!("T_{j}")));
    headers.extend((1..=n).map(|j| format!("S_{j}")));
    let mut table = Table::new(headers);
    for i in 0..n {
        let mut row = vec![Cell::Int(i as i64 + 1), Cell::Num(t.eff_masses()[i])];
        row.extend((0..n).map(|j| Cell::Num(t.t_matrix()[(i, j)])));
        row.extend((0..n).map(|j| Cell::Num(t.s_matrix()[(i, j)])));
        table.rows.push(row);
    }
    table
}

pub fn kernel_table(k: &KernelTable) -> Table {
    let mut table = Table::new(strings(&["s", "eta", "nu"]));
    for (i, s) in k.grid().iter().enumerate() {
        table
            .rows
            .push(vec![Cell::Num(*s), Cell::Num(k.eta()[i]), Cell::Num(k.nu()[i])]);
    }
    table
}

pub fn coefficient_table(series: &CoefficientSeries) -> Table {
    let mut table = Table::new(strings(&["t", "a", "b", "c", "d", "caustic_flag"]));
    for (k, t) in series.grid().iter().enumerate() {
        let [a, b, c, d] = series.node(k);
        table.rows.push(vec![
            Cell::Num(*t),
            Cell::Num(a),
            Cell::Num(b),
            Cell::Num(c),
            Cell::Num(d),
            Cell::Int(series.caustic()[k] as i64),
        ]);
    }
    table
}

/// Means, the upper triangle of the covariance, the smallest symplectic
/// eigenvalue and any diagnostic columns.
pub fn trajectory_table(traj: &Trajectory, diagnostics: Option<&DiagnosticTable>) -> Table {
    let n = traj.states().first().map_or(0, |s| s.n_modes());
    let name = |a: usize| {
        if a < n {
            format!("x{}", a + 1)
        } else {
            format!("p{}", a - n + 1)
        }
    };
    let mut headers = vec!["t".to_string()];
    headers.extend((0..2 * n).map(|a| format!("mean_{}", name(a))));
    for a in 0..2 * n {
        for b in a..2 * n {
            headers.push(format!("cov_{}_{}", name(a), name(b)));
        }
    }
    headers.push("nu_min".into());
    if let Some(d) = diagnostics {
        headers.extend(d.headers.iter().cloned());
    }
    let mut table = Table::new(headers);
    for (k, s) in traj.states().iter().enumerate() {
        let mut row = vec![Cell::Num(traj.times()[k])];
        row.extend(s.mean().iter().map(|&v| Cell::Num(v)));
        for a in 0..2 * n {
            for b in a..2 * n {
                row.push(Cell::Num(s.cov()[(a, b)]));
            }
        }
        row.push(Cell::Num(traj.min_symplectic()[k]));
        if let Some(d) = diagnostics {
            row.extend(d.rows[k].iter().map(|&v| Cell::Num(v)));
        }
        table.rows.push(row);
    }
    table
}

pub fn comparison_table(r: &ComparisonReport) -> Table {
    let mut table = Table::new(strings(&["t", "covariance_dev", "collective_dev", "relative_dev", "in_window"]));
    for (k, t) in r.times.iter().enumerate() {
        table.rows.push(vec![
            Cell::Num(*t),
            Cell::Num(r.covariance[k]),
            Cell::Num(r.collective[k]),
            Cell::Num(r.relative[k]),
            Cell::Int((*t <= r.window_end) as i64),
        ]);
    }
    table
}

pub fn config_hash(config: &ScenarioConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Written as `manifest.json` beside the results.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub n_scaling: String,
    pub order: u8,
    pub evolution: String,
    pub threads: usize,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(subcommand: &str, config: &ScenarioConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_sha256: config_hash(config),
            config: serde_json::to_value(config).expect("config serializes"),
            n_scaling: config.solver.n_scaling.to_string(),
            order: config.solver.order.into(),
            evolution: serde_json::to_value(config.solver.evolution)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            threads: rayon::current_num_threads(),
            files: vec![],
            warnings: vec![],
            summary: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Minimal SVG line chart of several series against a shared x axis.
/// Non-finite points break the line.
pub fn svg_line_chart(title: &str, x_label: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let finite = |v: &[f64]| v.iter().copied().filter(|v| v.is_finite()).collect::<Vec<_>>();
    let (x0, x1) = bounds(&finite(x));
    let all_y: Vec<f64> = series.iter().flat_map(|(_, y)| finite(y)).collect();
    let (y0, y1) = bounds(&all_y);
    let px = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        W / 2.0,
        escape(title),
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (v, anchor, xp, yp) in [
        (x0, "start", PAD, H - PAD + 16.0),
        (x1, "end", W - PAD, H - PAD + 16.0),
    ] {
        let _ = writeln!(svg, "<text x=\"{xp}\" y=\"{yp}\" text-anchor=\"{anchor}\">{v:.3e}</text>");
    }
    for (v, yp) in [(y0, H - PAD), (y1, PAD + 10.0)] {
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{yp}\" text-anchor=\"end\">{v:.3e}</text>", PAD - 4.0);
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 16.0,
        escape(x_label)
    );
    for (i, (name, y)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (xv, yv) in x.iter().zip(y.iter()) {
            if xv.is_finite() && yv.is_finite() {
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(*xv), py(*yv));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            d.trim_end()
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            W - PAD + 6.0,
            PAD + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX, 0.0] {
            let s = format_number(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(vec!["t".into(), "v".into(), "flag".into()]);
        t.rows.push(vec![Cell::Num(0.5), Cell::Num(1.0 / 7.0), Cell::Int(1)]);
        t.rows.push(vec![Cell::Num(1.0), Cell::Num(f64::NAN), Cell::Int(0)]);
        let (h, rows) = parse_csv(&t.to_csv()).unwrap();
        assert_eq!(h, vec!["t", "v", "flag"]);
        assert_eq!(rows[0][1], 1.0 / 7.0);
        assert!(rows[1][1].is_nan());
        assert_eq!(t.column("flag").unwrap(), vec![1.0, 0.0]);
        assert!(t.to_text().lines().count() == 3);
    }

    #[test]
    fn svg_is_well_formed() {
        let x = [0.0, 1.0, 2.0];
        let svg = svg_line_chart("a < b", "t", &x, &[("y", &[1.0, f64::NAN, 3.0])]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<path").count(), 1);
    }

    #[test]
    fn hash_tracks_effective_config() {
        let a = crate::config::parse_config(r#"{"n_osc": 2}"#).unwrap();
        let b = crate::config::parse_config(r#"{"n_osc": 2, "mass": 1.0}"#).unwrap();
        let c = crate::config::parse_config(r#"{"n_osc": 3}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
