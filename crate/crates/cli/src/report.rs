//! Results CSV, run manifest and SVG error curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use levy_neumann::{McEstimate, SweepTable};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_HEADER: &str = "sweep_param,x,mean,std_error,bias_bound,n_paths";

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    /// Sweep value, a label such as `target`, or empty for plain solves.
    pub sweep_param: String,
    pub x: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub bias_bound: f64,
    pub n_paths: usize,
}

impl ResultRow {
    pub fn from_estimate(sweep_param: impl Into<String>, x: &[f64], e: &McEstimate) -> Self {
        ResultRow {
            sweep_param: sweep_param.into(),
            x: x.to_vec(),
            mean: e.mean,
            std_error: e.std_error,
            bias_bound: e.truncation_bias_bound,
            n_paths: e.n_paths,
        }
    }

    /// A deterministic value without sampling error.
    pub fn exact(sweep_param: impl Into<String>, x: &[f64], value: f64) -> Self {
        ResultRow { sweep_param: sweep_param.into(), x: x.to_vec(), mean: value, std_error: 0.0, bias_bound: 0.0, n_paths: 0 }
    }
}

/// Shortest round-trip formatting keeps the CSV lossless and deterministic.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Text of the results CSV; point coordinates are joined by `;`.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let x: Vec<String> = r.x.iter().map(|v| num(*v)).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.sweep_param,
            x.join(";"),
            num(r.mean),
            num(r.std_error),
            num(r.bias_bound),
            r.n_paths
        );
    }
    s
}

/// SHA-256 of the canonical config JSON.
pub fn config_hash(config: &RunConfig) -> String {
    hex::encode(Sha256::digest(config.to_json().as_bytes()))
}

/// Everything needed to repeat a run bit for bit.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub mode: &'static str,
    pub versions: Versions,
    /// Step of the uniform base grid and the horizon rule.
    pub grid: GridInfo,
    /// Largest truncation-bias bound over the rows (heuristic).
    pub max_bias_bound: f64,
    pub bias_bounds: Vec<f64>,
    pub results_file: &'static str,
    pub plots: Vec<String>,
    pub warnings: Vec<String>,
    /// Mode-specific details, such as sweep tables or check outcomes.
    pub details: serde_json::Value,
    pub config: RunConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub cli: &'static str,
    pub core: &'static str,
    pub manifest_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions { cli: env!("CARGO_PKG_VERSION"), core: levy_neumann::VERSION, manifest_format: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridInfo {
    pub dt: f64,
    pub horizon: levy_neumann::Horizon,
    /// Horizons actually used by the rows.
    pub horizons_used: Vec<f64>,
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))
}

/// Plot file name for a sweep parameter.
fn plot_name(parameter: &str) -> String {
    let slug: String = parameter.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("error_vs_{slug}.svg")
}

/// Writes the error-vs-parameter curves of a sweep, one polyline per point.
/// Never fails the run: problems come back as warnings.
pub fn render_report(table: &SweepTable, dir: &Path) -> (Vec<PathBuf>, Vec<String>) {
    if table.rows.is_empty() {
        return (Vec::new(), vec![format!("sweep over {} produced an empty table; no plot written", table.parameter)]);
    }
    let svg = match sweep_svg(table) {
        Some(s) => s,
        None => return (Vec::new(), vec![format!("sweep over {} has no finite values; no plot written", table.parameter)]),
    };
    let path = dir.join(plot_name(&table.parameter));
    match std::fs::write(&path, svg) {
        Ok(()) => (vec![path], Vec::new()),
        Err(e) => (Vec::new(), vec![format!("cannot write {}: {e}; results are in the CSV only", path.display())]),
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// SVG text of the error curves with 3-standard-error bars. `None` when
/// nothing is finite. Penalties spread over decades get a log axis.
pub fn sweep_svg(table: &SweepTable) -> Option<String> {
    let rows: Vec<_> = table.rows.iter().filter(|r| r.param.is_finite() && r.error.is_finite()).collect();
    if rows.is_empty() {
        return None;
    }
    let log_x = rows.iter().all(|r| r.param > 0.0) && {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.param), b.max(r.param)));
        hi / lo >= 100.0
    };
    let fx = |p: f64| if log_x { p.log10() } else { p };
    let (mut x0, mut x1) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(fx(r.param)), b.max(fx(r.param))));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let y1 = rows.iter().map(|r| r.error + 3.0 * r.combined_std_error).fold(0.0f64, f64::max).max(1e-300) * 1.1;
    let sx = |p: f64| MARGIN + (fx(p) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |e: f64| H - MARGIN - e / y1 * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">error against {} (target: {})</text>"#, W / 2.0, escape(&table.parameter), escape(&table.target));
    let (bx, by) = (MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/>"#, W - MARGIN);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{MARGIN}" stroke="black"/>"#);
    for k in 0..=4 {
        let e = y1 * k as f64 / 4.0;
        let y = sy(e);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{bx}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{e:.2e}</text>"#, bx - 4.0, bx - 6.0, y + 4.0);
    }
    let mut ticks: Vec<f64> = rows.iter().map(|r| r.param).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for p in &ticks {
        let x = sx(*p);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{by}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{p}</text>"#, by + 4.0, by + 18.0);
    }
    let xlabel = if log_x { format!("{} (log scale)", table.parameter) } else { table.parameter.clone() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&xlabel));
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">|estimate - target|</text>"#, H / 2.0, H / 2.0);

    let mut points: Vec<&Vec<f64>> = Vec::new();
    for r in &rows {
        if !points.contains(&&r.x) {
            points.push(&r.x);
        }
    }
    for (i, x) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut series: Vec<_> = rows.iter().filter(|r| &r.x == *x).collect();
        series.sort_by(|a, b| a.param.total_cmp(&b.param));
        let pts: Vec<String> = series.iter().map(|r| format!("{:.2},{:.2}", sx(r.param), sy(r.error))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        for r in &series {
            let (cx, cy) = (sx(r.param), sy(r.error));
            let lo = sy((r.error - 3.0 * r.combined_std_error).max(0.0));
            let hi = sy(r.error + 3.0 * r.combined_std_error);
            let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="{color}"/><circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#);
        }
        let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.2}" fill="{color}" text-anchor="end">x = ({})</text>"#, W - MARGIN, coords.join(", "));
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
