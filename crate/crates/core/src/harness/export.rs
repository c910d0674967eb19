//! Report files: CSV tables, a JSON summary, the recipe text and SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{ExperimentReport, MethodCurve};
use crate::error::{Error, Result};

fn write(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn curves_csv(curves: &[MethodCurve]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "method", "mean_quality", "std_quality"])?;
    for c in curves {
        for (t, (m, s)) in c.mean.iter().zip(&c.std).enumerate() {
            w.write_record([(t + 1).to_string(), c.method.clone(), m.to_string(), s.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

fn histograms_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "bin_label", "count"])?;
    for h in &report.histograms {
        for (bin, count) in h.bins.iter().zip(&h.counts) {
            w.write_record([h.variable.clone(), bin.label(), count.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

fn recipe_text(report: &ExperimentReport) -> String {
    let n = report.replications.len();
    let mut s = format!("Most voted recipe for {} over {n} replications\n\n", report.benchmark);
    let width = report.recipe.iter().map(|e| e.variable.len()).max().unwrap_or(0);
    for (entry, r) in report.recipe.iter().zip(&report.reference) {
        let mark = if r.overlaps {
            "matches reference"
        } else {
            "misses reference"
        };
        let _ = writeln!(
            s,
            "{:width$}  {:>16}  {:>4}/{n} votes  {mark}",
            entry.variable,
            entry.bin.label(),
            entry.votes
        );
    }
    s
}

fn summary_json(report: &ExperimentReport) -> Result<Vec<u8>> {
    let finals: serde_json::Map<String, serde_json::Value> = report
        .curves
        .iter()
        .map(|c| (c.method.clone(), json!(c.final_mean())))
        .collect();
    let v = json!({
        "benchmark": report.benchmark,
        "replications": report.replications.len(),
        "iterations": report.config.iterations,
        "surrogate": {
            "c": report.surrogate.c,
            "gamma": report.surrogate.gamma,
            "epsilon": report.surrogate.epsilon,
            "cv_rmse": report.surrogate.cv_rmse,
            "cv_mse": report.surrogate.cv_mse,
            "rows": report.surrogate.rows,
            "support_vectors": report.surrogate.support_vectors,
        },
        "seeds": {
            "master": report.config.seed,
            "dataset": report.dataset_seed,
            "cv_folds": report.cv_seed,
            "replications": report.replications.iter().map(|r| r.seed).collect::<Vec<_>>(),
        },
        "expert_point": report.expert_point,
        "expert_quality": report.expert_quality,
        "final_mean_quality": finals,
        "sign_test": report.sign_test,
        "recipe": report.reference,
        "reference_hits": report.reference_hits(),
    });
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes every report file into `out_dir`, creating it if needed, and
/// returns the paths written. Output depends only on the report.
pub fn export_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    write(out_dir.join("curves.csv"), &curves_csv(&report.curves)?, &mut written)?;
    write(
        out_dir.join("raw_curves.csv"),
        &curves_csv(&report.raw_curves)?,
        &mut written,
    )?;
    write(out_dir.join("histograms.csv"), &histograms_csv(report)?, &mut written)?;
    write(out_dir.join("recipe.txt"), recipe_text(report).as_bytes(), &mut written)?;
    write(out_dir.join("summary.json"), &summary_json(report)?, &mut written)?;
    let mut full = serde_json::to_vec_pretty(report)?;
    full.push(b'\n');
    write(out_dir.join("report.json"), &full, &mut written)?;
    for c in &report.curves {
        let svg = render_svg(c, &report.benchmark);
        write(
            out_dir.join(format!("curve_{}.svg", c.method)),
            svg.as_bytes(),
            &mut written,
        )?;
    }
    Ok(written)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD_L: f64 = 60.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 50.0;

/// Mean curve with a ±1 std band on a fixed `[0, 10]` quality axis.
pub fn render_svg(curve: &MethodCurve, benchmark: &str) -> String {
    let n = curve.mean.len().max(1);
    let x = |t: usize| {
        let span = (n - 1).max(1) as f64;
        PAD_L + (W - PAD_L - PAD_R) * t as f64 / span
    };
    let y = |q: f64| PAD_T + (H - PAD_T - PAD_B) * (1.0 - q.clamp(0.0, 10.0) / 10.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{} · {}</text>"#,
        W / 2.0,
        escape(benchmark),
        escape(&curve.method)
    );
    for q in (0..=10).step_by(2) {
        let yy = y(q as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD_L}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{q}</text>"##,
            W - PAD_R,
            PAD_L - 6.0,
            yy + 4.0
        );
    }
    let ticks = [0, (n - 1) / 2, n - 1];
    for &t in ticks.iter() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            x(t),
            H - PAD_B + 16.0,
            t + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">iteration</text>"#,
        (W + PAD_L) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">best quality</text>"#,
        H / 2.0,
        H / 2.0
    );

    let mut band = String::new();
    for (t, (m, sd)) in curve.mean.iter().zip(&curve.std).enumerate() {
        let _ = write!(band, "{:.2},{:.2} ", x(t), y(m + sd));
    }
    for (t, (m, sd)) in curve.mean.iter().zip(&curve.std).enumerate().rev() {
        let _ = write!(band, "{:.2},{:.2} ", x(t), y(m - sd));
    }
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="#4477aa" fill-opacity="0.2" stroke="none"/>"##,
        band.trim_end()
    );
    let line: Vec<String> = curve
        .mean
        .iter()
        .enumerate()
        .map(|(t, m)| format!("{:.2},{:.2}", x(t), y(*m)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#4477aa" stroke-width="2"/>"##,
        line.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        W - PAD_L - PAD_R,
        H - PAD_T - PAD_B
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
