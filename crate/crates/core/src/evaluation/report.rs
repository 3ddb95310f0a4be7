//! Table-style reporting: CSV, aligned text and an SVG chart of AP per
//! iteration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header note pinning the mean-IoU definition used in every report.
pub const MEAN_IOU_NOTE: &str =
    "mean IoU: average over ground-truth boxes of the matched IoU; unmatched ground truth counts 0";

pub const CSV_HEADER: &str = "regime,iteration,ap_percent,mean_iou_percent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub regime: String,
    /// `"-"` for regimes without iterations.
    pub iteration: String,
    pub ap_percent: f64,
    pub mean_iou_percent: f64,
}

impl ReportRow {
    pub fn new(regime: impl Into<String>, iteration: impl Into<String>, ap_percent: f64, mean_iou_percent: f64) -> Self {
        Self {
            regime: regime.into(),
            iteration: iteration.into(),
            ap_percent,
            mean_iou_percent,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.regime.trim().is_empty() {
            return Err(Error::Report("empty regime label".into()));
        }
        if self.iteration.trim().is_empty() {
            return Err(Error::Report(format!("empty iteration label for {}", self.regime)));
        }
        for field in [&self.regime, &self.iteration] {
            if field.contains([',', '\n', '"']) {
                return Err(Error::Report(format!("label {field:?} is not CSV-safe")));
            }
        }
        let pct = |v: f64| v.is_finite() && (0.0..=100.0).contains(&v);
        if !pct(self.ap_percent) || !pct(self.mean_iou_percent) {
            return Err(Error::Report(format!(
                "{}/{}: percentages must lie in [0, 100]",
                self.regime, self.iteration
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub csv: String,
    pub text: String,
    pub svg: String,
}

pub fn render_report(rows: &[ReportRow]) -> Result<RenderedReport> {
    if rows.is_empty() {
        return Err(Error::Report("no rows to render".into()));
    }
    rows.iter().try_for_each(ReportRow::validate)?;
    Ok(RenderedReport {
        csv: render_csv(rows),
        text: render_text(rows),
        svg: render_svg(rows),
    })
}

fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2}",
            r.regime, r.iteration, r.ap_percent, r.mean_iou_percent
        );
    }
    out
}

fn render_text(rows: &[ReportRow]) -> String {
    let header = ["Model", "Iteration", "AP", "Mean IoU"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.regime.clone(),
                r.iteration.clone(),
                format!("{:.2}", r.ap_percent),
                format!("{:.2}", r.mean_iou_percent),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let line = |c: [&str; 4]| {
        format!(
            "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}\n",
            c[0],
            c[1],
            c[2],
            c[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        )
    };
    let mut out = format!("# AP at IoU 0.5 and mean IoU, in %\n# {MEAN_IOU_NOTE}\n");
    out.push_str(&line(header));
    out.push_str(&format!("{}\n", "-".repeat(widths.iter().sum::<usize>() + 6)));
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2], &c[3]]));
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const PAD: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Rows with numeric iterations become one polyline per regime; rows whose
/// iteration is not a number are drawn as horizontal reference lines.
fn render_svg(rows: &[ReportRow]) -> String {
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    let mut levels: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        match r.iteration.parse::<f64>() {
            Ok(it) if it.is_finite() => series.entry(&r.regime).or_default().push((it, r.ap_percent)),
            _ => levels.entry(&r.regime).or_default().push(r.ap_percent),
        }
    }
    let (mut lo, mut hi) = series
        .values()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (lo, hi) = (1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let sx = |x: f64| PAD + (x - lo) / (hi - lo) * (SVG_W - 2.0 * PAD);
    let sy = |y: f64| SVG_H - PAD - y / 100.0 * (SVG_H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        SVG_H - PAD,
        SVG_W - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">iteration</text>"#,
        SVG_W / 2.0,
        SVG_H - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">AP (%)</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0
    );

    let mut legend = 0;
    let color = |legend: &mut usize| {
        let c = PALETTE[*legend % PALETTE.len()];
        *legend += 1;
        c
    };
    for (regime, values) in &levels {
        let c = color(&mut legend);
        let y = sy(values.iter().sum::<f64>() / values.len() as f64);
        let _ = writeln!(
            out,
            r#"<line class="reference" data-regime="{regime}" x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="{c}" stroke-dasharray="4 3"/>"#,
            SVG_W - PAD
        );
        legend_entry(&mut out, legend - 1, regime, c);
    }
    for (regime, points) in &mut series {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c = color(&mut legend);
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline data-regime="{regime}" points="{}" fill="none" stroke="{c}"/>"#,
            coords.join(" ")
        );
        legend_entry(&mut out, legend - 1, regime, c);
    }
    out.push_str("</svg>\n");
    out
}

fn legend_entry(out: &mut String, slot: usize, regime: &str, color: &str) {
    let y = PAD + 14.0 * slot as f64;
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{y}" font-size="11" fill="{color}">{regime}</text>"#,
        SVG_W - PAD - 120.0
    );
}

/// Writes `report.csv`, `report.txt` and `report.svg` into `dir`.
pub fn write_report(dir: &Path, rows: &[ReportRow], extra_text: &str) -> Result<RenderedReport> {
    let mut rendered = render_report(rows)?;
    if !extra_text.is_empty() {
        rendered.text.push('\n');
        rendered.text.push_str(extra_text);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("report.csv", &rendered.csv),
        ("report.txt", &rendered.text),
        ("report.svg", &rendered.svg),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rendered)
}
