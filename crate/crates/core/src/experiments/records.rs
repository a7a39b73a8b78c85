use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;

pub const SCHEMA_LINE: &str = "# schema=1";

/// One (seed, n, pair) row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    /// ε, k, h or p depending on the scenario.
    pub param: f64,
    pub i: usize,
    pub j: usize,
    pub exact_rescaled: f64,
    pub approx_rescaled: f64,
    pub limit_value: f64,
    /// `|exact_rescaled − approx_rescaled|`
    pub deviation: f64,
    /// Key bound on the deviation, in the same rescaled units.
    pub key_prop_rhs: f64,
    pub lovasz_rhs: f64,
    pub gap2: f64,
    pub runtime_ms: f64,
}

pub fn write_csv<W: Write>(records: &[SweepRecord], mut out: W) -> Result<(), ExperimentError> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<SweepRecord>, ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    rdr.deserialize().map(|r| r.map_err(ExperimentError::from)).collect()
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<(), ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::Config("no records to write".into()));
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(records, file)
}

/// A reference curve drawn dashed in the plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuideLine {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Median deviation per `n` for each (scenario, param rule) series, in
/// order of first appearance.
pub fn median_series(records: &[SweepRecord]) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut names: Vec<String> = Vec::new();
    let mut buckets: Vec<Vec<(usize, f64)>> = Vec::new();
    for r in records {
        let name = r.scenario.clone();
        let k = match names.iter().position(|x| *x == name) {
            Some(k) => k,
            None => {
                names.push(name);
                buckets.push(Vec::new());
                names.len() - 1
            }
        };
        buckets[k].push((r.n, r.deviation));
    }
    names
        .into_iter()
        .zip(buckets)
        .map(|(name, mut rows)| {
            rows.sort_by_key(|r| r.0);
            let mut pts = Vec::new();
            for chunk in rows.chunk_by(|a, b| a.0 == b.0) {
                let mut v: Vec<f64> = chunk.iter().map(|r| r.1).filter(|x| x.is_finite()).collect();
                pts.push((chunk[0].0 as f64, median(&mut v)));
            }
            (name, pts)
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Log-log SVG of the median deviation against `n`, one solid series per
/// scenario and one dashed line per guide. No timestamps are embedded.
pub fn render_plot(records: &[SweepRecord], guides: &[GuideLine]) -> String {
    let series = median_series(records);
    let positive = |p: &&(f64, f64)| p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite();
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter())
        .chain(guides.iter().flat_map(|g| g.points.iter()))
        .filter(positive)
        .copied()
        .collect();
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if all.is_empty() {
        let _ = writeln!(svg, r#"<text x="{pad}" y="{pad}">no positive data</text>"#);
        svg.push_str("</svg>\n");
        return svg;
    }
    let lx: Vec<f64> = all.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = all.iter().map(|p| p.1.log10()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
        }
    };
    let (x0, x1) = range(&lx);
    let (y0, y1) = range(&ly);
    let px = |x: f64| pad + (x.log10() - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * pad);

    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        t = pad,
        b = h - pad,
        r = w - pad
    );
    for e in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, h - pad + 18.0);
    }
    for e in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">1e{e}</text>"#, pad - 6.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">n</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">median deviation</text>"#,
        h / 2.0,
        h / 2.0
    );

    let polyline = |pts: &[(f64, f64)]| -> String {
        pts.iter()
            .filter(positive)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut legend_y = pad;
    let mut legend = |svg: &mut String, color: &str, dash: &str, label: &str| {
        let _ = writeln!(
            svg,
            r#"<line x1="{a:.1}" y1="{legend_y:.1}" x2="{b:.1}" y2="{legend_y:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{c:.1}" y="{:.1}">{}</text>"#,
            legend_y + 4.0,
            xml_escape(label),
            a = w - pad - 150.0,
            b = w - pad - 125.0,
            c = w - pad - 120.0,
        );
        legend_y += 16.0;
    };
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            polyline(pts)
        );
        for p in pts.iter().filter(positive) {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(p.0), py(p.1));
        }
        legend(&mut svg, color, "", name);
    }
    for (k, g) in guides.iter().enumerate() {
        let color = PALETTE[(k + series.len()) % PALETTE.len()];
        let dash = r#" stroke-dasharray="6 4""#;
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            polyline(&g.points)
        );
        legend(&mut svg, color, dash, &g.label);
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_plot(records: &[SweepRecord], guides: &[GuideLine], path: &Path) -> Result<(), ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::Config("no records to plot".into()));
    }
    std::fs::write(path, render_plot(records, guides))?;
    Ok(())
}
