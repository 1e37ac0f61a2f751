use serde::{Deserialize, Serialize};

use super::metrics::{ClassReport, RegReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegRow {
    pub model: String,
    pub report: RegReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub model: String,
    pub report: ClassReport,
}

/// Left-aligned first column, right-aligned numeric columns, one rule under the header.
pub fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate().take(cols) {
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                out.push_str(cell);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str(" | ");
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    out.push('\n');
    let total = widths.iter().sum::<usize>() + 3 * (cols - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// `Model | RMSE | MAE | R²`, prices to two decimals.
pub fn regression_table(rows: &[RegRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.2}", r.report.rmse),
                format!("{:.2}", r.report.mae),
                format!("{:.3}", r.report.r2),
            ]
        })
        .collect();
    format_table(&["Model", "RMSE", "MAE", "R²"], &body)
}

/// `Model | Precision | Recall | F1`, macro averages.
pub fn classification_table(rows: &[ClassRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.3}", r.report.macro_precision),
                format!("{:.3}", r.report.macro_recall),
                format!("{:.3}", r.report.macro_f1),
            ]
        })
        .collect();
    format_table(&["Model", "Precision", "Recall", "F1"], &body)
}

pub fn per_class_table(report: &ClassReport) -> String {
    let body: Vec<Vec<String>> = report
        .per_class
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                format!("segment {i}"),
                format!("{:.3}", c.precision),
                format!("{:.3}", c.recall),
                format!("{:.3}", c.f1),
                c.support.to_string(),
            ]
        })
        .collect();
    format_table(&["Class", "Precision", "Recall", "F1", "Support"], &body)
}
