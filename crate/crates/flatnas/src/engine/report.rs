//! Comparison-table rendering and corruption-error curve files for a
//! finished search: one row per nondominated archive record, plus CSV
//! curves of error versus severity (overall and per corruption type).

use crate::corruption::CorruptionReport;
use crate::error::{Error, Result};
use crate::nn_core;
use crate::objectives::{EvalRecord, FomConfig};
use crate::search_space::{self, SearchSpaceDef};
use std::collections::BTreeMap;
use std::path::Path;

/// One line of the comparison table. Error-like quantities are percents;
/// sizes are millions. A missing corruption benchmark renders as `-`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub top1_err_pct: f64,
    pub robustness_pct: f64,
    pub mce_pct: Option<f64>,
    pub params_m: f64,
    pub macs_m: f64,
}

pub const TABLE_HEADER: [&str; 6] =
    ["Model", "1-F_A (%)", "R(x,sigma) (%)", "mCE (%)", "Params (M)", "MACs (M)"];

/// Stable row name for an archive record, from its position in the archive.
pub fn model_name(archive_index: usize) -> String {
    format!("arch_{archive_index:03}")
}

/// Rows for the archive's true nondominated front, ordered by the combined
/// accuracy/robustness objective. Size columns are computed analytically
/// from the decoded architecture.
pub fn archive_rows(
    records: &[EvalRecord],
    space: &SearchSpaceDef,
    fom: &FomConfig,
) -> Result<Vec<ReportRow>> {
    let front = super::front_indices(records, fom)?;
    front
        .into_iter()
        .map(|i| {
            let r = &records[i];
            let config = search_space::decode(space, &r.gene)?;
            Ok(ReportRow {
                model: model_name(i),
                top1_err_pct: 100.0 * (1.0 - r.top1_accuracy),
                robustness_pct: 100.0 * r.robustness,
                mce_pct: None,
                params_m: r.params_millions(),
                macs_m: nn_core::macs(&config)? as f64 / 1e6,
            })
        })
        .collect()
}

/// Renders rows as an aligned pipe table with two-decimal numbers.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut cells: Vec<Vec<String>> =
        vec![TABLE_HEADER.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        cells.push(vec![
            row.model.clone(),
            format!("{:.2}", row.top1_err_pct),
            format!("{:.2}", row.robustness_pct),
            row.mce_pct.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")),
            format!("{:.2}", row.params_m),
            format!("{:.2}", row.macs_m),
        ]);
    }
    let widths: Vec<usize> = (0..TABLE_HEADER.len())
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let render_line = |row: &[String]| {
        let padded: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = render_line(&cells[0]);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in &cells[1..] {
        out.push_str(&render_line(row));
    }
    out
}

/// Mean error over corruption types at each severity, one CSV row per
/// (model, severity).
pub fn severity_curves_csv(reports: &[CorruptionReport]) -> String {
    let mut out = String::from("model,severity,mean_error\n");
    for report in reports {
        let mut by_sev: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        for e in &report.entries {
            by_sev.entry(e.severity).or_default().push(e.error);
        }
        for (sev, errs) in by_sev {
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            out.push_str(&format!("{},{},{}\n", report.model_id, sev, mean));
        }
    }
    out
}

/// Every (model, type, severity) error as CSV, one row each.
pub fn per_type_curves_csv(reports: &[CorruptionReport]) -> String {
    let mut out = String::from("model,type,severity,error\n");
    for report in reports {
        for e in &report.entries {
            out.push_str(&format!("{},{},{},{}\n", report.model_id, e.ctype, e.severity, e.error));
        }
    }
    out
}

/// Writes the comparison table and both curve files into `dir`, matching
/// corruption benchmarks to table rows by model name. Returns the rendered
/// table.
pub fn write_report(
    records: &[EvalRecord],
    corruption_reports: &[CorruptionReport],
    space: &SearchSpaceDef,
    fom: &FomConfig,
    dir: &Path,
) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyArchive);
    }
    std::fs::create_dir_all(dir)?;
    let mut rows = archive_rows(records, space, fom)?;
    for row in &mut rows {
        if let Some(report) = corruption_reports.iter().find(|c| c.model_id == row.model) {
            row.mce_pct = Some(report.mce * 100.0);
        }
    }
    let table = render_table(&rows);
    std::fs::write(dir.join("comparison.md"), &table)?;
    std::fs::write(dir.join("severity_curves.csv"), severity_curves_csv(corruption_reports))?;
    std::fs::write(dir.join("corruption_curves.csv"), per_type_curves_csv(corruption_reports))?;
    Ok(table)
}
