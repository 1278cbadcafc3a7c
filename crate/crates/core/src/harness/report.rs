use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::eval::{write_oscr_csv, write_roc_csv, EvalMode};
use crate::strategy::StrategyKind;

use super::run::{RunReport, Source, SummaryRow};

pub const REPORT_FILE: &str = "report.json";
pub const GAINS_FILE: &str = "gains.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Strategy minus genuine-baseline difference of one summary row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainRow {
    pub model: String,
    pub strategy: StrategyKind,
    pub source: Source,
    pub ratio: Option<f64>,
    pub alpha: Option<f64>,
    pub mode: EvalMode,
    pub auc: f64,
    pub ccr_at: Vec<(f64, f64)>,
}

/// Gains against the same model's genuine baseline row in the same mode.
/// Rows without such a baseline are left out.
pub fn gain_table(summary: &[SummaryRow]) -> Vec<GainRow> {
    summary
        .iter()
        .filter_map(|row| {
            let base = summary.iter().find(|b| {
                b.model == row.model
                    && b.strategy == StrategyKind::Baseline
                    && b.source == Source::Genuine
                    && b.mode == row.mode
            })?;
            Some(GainRow {
                model: row.model.clone(),
                strategy: row.strategy,
                source: row.source.clone(),
                ratio: row.ratio,
                alpha: row.alpha,
                mode: row.mode,
                auc: row.auc - base.auc,
                ccr_at: row
                    .ccr_at
                    .iter()
                    .zip(&base.ccr_at)
                    .map(|(a, b)| (a.0, a.1 - b.1))
                    .collect(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn gains_csv(gains: &[GainRow]) -> String {
    let mut out = String::from("model,strategy,source,ratio,alpha,mode,auc");
    if let Some(first) = gains.first() {
        for (fpr, _) in &first.ccr_at {
            let _ = write!(out, ",ccr@{fpr}");
        }
    }
    out.push('\n');
    for g in gains {
        let source = match g.source {
            Source::Genuine => "genuine",
            Source::Mixup => "mixup",
        };
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            g.model,
            g.strategy,
            source,
            opt(g.ratio),
            opt(g.alpha),
            g.mode,
            g.auc
        );
        for (_, v) in &g.ccr_at {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes the curve CSVs, gain table and report JSON under `dir`, plus
/// wall times in a separate file. Returns the written paths.
pub fn export_report(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("curves"))?;
    let mut written = Vec::new();
    for cell in &report.cells {
        for (k, curves) in cell.curves.iter().enumerate() {
            let oscr = dir.join(&cell.curve_files[2 * k]);
            let mut buf = Vec::new();
            write_oscr_csv(&mut buf, &curves.oscr)?;
            fs::write(&oscr, buf)?;
            let roc = dir.join(&cell.curve_files[2 * k + 1]);
            let mut buf = Vec::new();
            write_roc_csv(&mut buf, &curves.roc)?;
            fs::write(&roc, buf)?;
            written.push(oscr);
            written.push(roc);
        }
    }
    let gains = dir.join(GAINS_FILE);
    fs::write(&gains, gains_csv(&gain_table(&report.summary)))?;
    written.push(gains);

    let mut timings = String::from("cell,wall_time_s\n");
    for c in &report.cells {
        let _ = writeln!(timings, "{},{}", c.id, c.wall_time);
    }
    let timings_path = dir.join(TIMINGS_FILE);
    fs::write(&timings_path, timings)?;
    written.push(timings_path);

    let json = dir.join(REPORT_FILE);
    fs::write(&json, report_json(report)?)?;
    written.push(json);
    Ok(written)
}

pub fn report_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Plain-text table of the summary rows.
pub fn summary_text(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<9} {:<8} {:>6} {:>6} {:<9} {:>4} {:>8} {:>9} {:>9} {:>9}",
        "model", "strategy", "source", "ratio", "alpha", "mode", "n", "auc", "ccr@0.1%", "ccr@1%", "ccr@10%"
    );
    for r in summary {
        let source = match r.source {
            Source::Genuine => "genuine",
            Source::Mixup => "mixup",
        };
        let _ = write!(
            out,
            "{:<12} {:<9} {:<8} {:>6} {:>6} {:<9} {:>4} {:>8.4}",
            r.model,
            r.strategy.to_string(),
            source,
            opt(r.ratio),
            opt(r.alpha),
            r.mode.to_string(),
            r.repeats,
            r.auc
        );
        for (_, v) in &r.ccr_at {
            let _ = write!(out, " {v:>9.4}");
        }
        out.push('\n');
    }
    out
}
