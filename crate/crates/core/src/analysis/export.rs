//! CSV and SVG report writers. Floats are written in Rust's shortest
//! round-trip form, so re-parsing reproduces them exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::EvalReport;
use super::norms::{NormProfile, NormSlope};
use crate::error::{GleeError, Result};

fn csv_err(path: &Path, e: csv::Error) -> GleeError {
    GleeError::io(path, std::io::Error::other(e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| GleeError::io(path, e))
}

fn nonempty<T>(items: &[T]) -> Result<()> {
    if items.is_empty() {
        Err(GleeError::Degenerate("nothing to export".into()))
    } else {
        Ok(())
    }
}

pub const RESULTS_HEADER: [&str; 6] = ["variant", "seed", "accuracy", "macro_f1", "head_f1", "tail_f1"];

/// One row per (variant, seed).
pub fn write_results_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    nonempty(reports)?;
    write_csv(
        path,
        &RESULTS_HEADER,
        reports.iter().map(|r| {
            vec![
                r.variant.clone(),
                r.seed.to_string(),
                r.accuracy.to_string(),
                r.macro_f1.to_string(),
                r.head_f1.to_string(),
                r.tail_f1.to_string(),
            ]
        }),
    )
}

/// Reads a results CSV back. Per-class scores are not stored, so
/// `per_class_f1` is empty and `n_test` is 0.
pub fn read_results_csv(path: &Path) -> Result<Vec<EvalReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = || GleeError::format(line as u64 + 1, format!("malformed results row in {}", path.display()));
        if rec.len() != RESULTS_HEADER.len() {
            return Err(bad());
        }
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
        out.push(EvalReport {
            variant: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad())?,
            accuracy: f(2)?,
            macro_f1: f(3)?,
            head_f1: f(4)?,
            tail_f1: f(5)?,
            per_class_f1: Vec::new(),
            n_test: 0,
        });
    }
    Ok(out)
}

/// Norm profiles as `variant,class,rank,count,norm`.
pub fn write_norms_csv(path: &Path, profiles: &[(String, NormProfile)]) -> Result<()> {
    nonempty(profiles)?;
    let rows = profiles.iter().flat_map(|(variant, p)| {
        p.entries.iter().enumerate().map(move |(rank, e)| {
            vec![
                variant.clone(),
                e.class.to_string(),
                rank.to_string(),
                e.count.to_string(),
                e.norm.to_string(),
            ]
        })
    });
    write_csv(path, &["variant", "class", "rank", "count", "norm"], rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub variant: String,
    pub seed: u64,
    pub slope: NormSlope,
}

pub fn write_slopes_csv(path: &Path, rows: &[SlopeRow]) -> Result<()> {
    nonempty(rows)?;
    write_csv(
        path,
        &["variant", "seed", "pearson_r", "spearman_rho", "flat"],
        rows.iter().map(|r| {
            vec![
                r.variant.clone(),
                r.seed.to_string(),
                r.slope.pearson_r.to_string(),
                r.slope.spearman_rho.to_string(),
                r.slope.flat.to_string(),
            ]
        }),
    )
}

/// Across-seed mean, population standard deviation and variance of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub variance: f64,
    pub runs: usize,
}

/// Groups reports by variant (first-appearance order) and summarizes each metric.
pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut variants: Vec<&str> = Vec::new();
    for r in reports {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }
    let metrics: [(&'static str, fn(&EvalReport) -> f64); 4] = [
        ("accuracy", |r| r.accuracy),
        ("macro_f1", |r| r.macro_f1),
        ("head_f1", |r| r.head_f1),
        ("tail_f1", |r| r.tail_f1),
    ];
    let mut out = Vec::new();
    for v in variants {
        let group: Vec<&EvalReport> = reports.iter().filter(|r| r.variant == v).collect();
        let n = group.len() as f64;
        for (metric, get) in metrics {
            let mean = group.iter().map(|r| get(r)).sum::<f64>() / n;
            let variance = group.iter().map(|r| (get(r) - mean).powi(2)).sum::<f64>() / n;
            out.push(SummaryRow {
                variant: v.to_string(),
                metric,
                mean,
                std: variance.sqrt(),
                variance,
                runs: group.len(),
            });
        }
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    nonempty(rows)?;
    write_csv(
        path,
        &["variant", "metric", "mean", "std", "variance", "runs"],
        rows.iter().map(|r| {
            vec![
                r.variant.clone(),
                r.metric.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.variance.to_string(),
                r.runs.to_string(),
            ]
        }),
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Line plot of norm profiles: class rank on x, predictor norm on y.
pub fn render_norms_svg(profiles: &[(String, NormProfile)]) -> Result<String> {
    nonempty(profiles)?;
    let (w, h, margin) = (640.0, 400.0, 50.0);
    let max_rank = profiles.iter().map(|(_, p)| p.entries.len()).max().unwrap_or(1).max(2) - 1;
    let max_norm = profiles
        .iter()
        .flat_map(|(_, p)| p.entries.iter().map(|e| e.norm))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let max_norm = if max_norm > 0.0 { max_norm } else { 1.0 };
    let x = |rank: usize| margin + (w - 2.0 * margin) * rank as f64 / max_rank as f64;
    let y = |norm: f64| h - margin - (h - 2.0 * margin) * norm / max_norm;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{margin}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        h - margin,
        w - margin
    );
    let _ = writeln!(
        s,
        r#"<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{0}" stroke="black"/>"#,
        h - margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{0}" y="{1}" text-anchor="middle" font-size="12">class rank (most frequent first)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{0}" font-size="12" transform="rotate(-90 15 {0})" text-anchor="middle">predictor norm (max {max_norm:.4})</text>"#,
        h / 2.0
    );
    for (i, (name, p)) in profiles.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = p
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.norm.is_finite())
            .map(|(r, e)| format!("{:.2},{:.2}", x(r), y(e.norm)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{0}" y="{1}" font-size="11" fill="{color}">{2}</text>"#,
            w - margin - 150.0,
            margin + 14.0 * i as f64,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_norms_svg(path: &Path, profiles: &[(String, NormProfile)]) -> Result<()> {
    let svg = render_norms_svg(profiles)?;
    fs::write(path, svg).map_err(|e| GleeError::io(path, e))
}
