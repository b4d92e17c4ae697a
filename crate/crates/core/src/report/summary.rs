//! Final-state tables: last-hidden usable information per label kind,
//! validation accuracy, and the forgetting gap where it applies, as
//! mean +/- SEM over seeds. Rendered as aligned text or CSV.

use crate::error::{Error, Result};
use crate::harness::{PretrainPoint, RunRecord};
use crate::task::LabelKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let fmt_row = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:>width$}", width = widths[i]))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = fmt_row(&self.columns);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out
    }
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

fn mean_sem_of(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-row cohort summary over completed runs of the same plan: final-epoch
/// last-hidden information per probed kind, final validation accuracy, and
/// the fine-label forgetting gap for coarse-trained runs.
pub fn summarize_runs(records: &[RunRecord]) -> Result<SummaryTable> {
    if records.is_empty() {
        return Err(Error::input("nothing to summarize"));
    }
    let completed: Vec<&RunRecord> = records.iter().filter(|r| !r.status.is_aborted()).collect();
    if completed.is_empty() {
        return Err(Error::input("every run aborted; nothing to summarize"));
    }
    let plan = &completed[0].plan;

    let mut columns = vec!["seeds".to_string()];
    let mut row = vec![completed.len().to_string()];

    for &kind in &plan.probed_kinds {
        let finals: Vec<f64> = completed
            .iter()
            .filter_map(|r| r.final_last_hidden(kind).map(|p| p.estimate.iu_bits))
            .collect();
        columns.push(format!("{kind}_iu_bits"));
        columns.push(format!("{kind}_iu_sem"));
        if finals.is_empty() {
            row.push("n/a".into());
            row.push("n/a".into());
        } else {
            let (m, s) = mean_sem_of(&finals);
            row.push(num(m));
            row.push(num(s));
        }
    }

    let accs: Vec<f64> = completed.iter().filter_map(|r| r.final_val_acc()).collect();
    columns.push("val_acc".into());
    columns.push("val_acc_sem".into());
    if accs.is_empty() {
        row.push("n/a".into());
        row.push("n/a".into());
    } else {
        let (m, s) = mean_sem_of(&accs);
        row.push(num(m));
        row.push(num(s));
    }

    if plan.label_kind_main == LabelKind::Coarse {
        let gaps: Vec<f64> = completed
            .iter()
            .filter_map(|r| {
                let fine: Vec<f64> = r
                    .last_hidden_curve(LabelKind::Direction)
                    .iter()
                    .map(|p| p.estimate.iu_bits)
                    .collect();
                if fine.is_empty() {
                    None
                } else {
                    let max = fine.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    Some(max - fine.last().unwrap())
                }
            })
            .collect();
        columns.push("forgetting_gap_bits".into());
        columns.push("forgetting_gap_sem".into());
        if gaps.is_empty() {
            row.push("n/a".into());
            row.push("n/a".into());
        } else {
            let (m, s) = mean_sem_of(&gaps);
            row.push(num(m));
            row.push(num(s));
        }
    }

    Ok(SummaryTable {
        columns,
        rows: vec![row],
    })
}

/// One row per pretraining length.
pub fn summarize_pretrain(points: &[PretrainPoint]) -> Result<SummaryTable> {
    if points.is_empty() {
        return Err(Error::input("nothing to summarize"));
    }
    let columns = vec![
        "pretrain_epochs".to_string(),
        "seeds".to_string(),
        "direction_iu_bits".to_string(),
        "direction_iu_sem".to_string(),
        "color_iu_bits".to_string(),
        "color_iu_sem".to_string(),
        "val_acc".to_string(),
        "val_acc_sem".to_string(),
    ];
    let rows = points
        .iter()
        .map(|p| {
            vec![
                p.pretrain_epochs.to_string(),
                p.per_seed.len().to_string(),
                num(p.mean_direction_iu_bits),
                num(p.sem_direction_iu_bits),
                num(p.mean_color_iu_bits),
                num(p.sem_color_iu_bits),
                num(p.mean_val_acc),
                num(p.sem_val_acc),
            ]
        })
        .collect();
    Ok(SummaryTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize_runs(&[]).is_err());
        assert!(summarize_pretrain(&[]).is_err());
    }

    #[test]
    fn pretrain_table_has_one_row_per_point() {
        let mk = |pre: usize| PretrainPoint {
            pretrain_epochs: pre,
            mean_direction_iu_bits: 1.0,
            sem_direction_iu_bits: 0.0,
            mean_color_iu_bits: 0.1,
            sem_color_iu_bits: 0.0,
            mean_val_acc: 0.99,
            sem_val_acc: 0.0,
            per_seed: vec![(0, 1.0, 0.1, 0.99)],
        };
        let table = summarize_pretrain(&[mk(0), mk(20)]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0][0], "0");
        assert_eq!(table.rows[1][0], "20");
        let text = table.to_text();
        assert!(text.contains("pretrain_epochs"));
        let csv = table.to_csv();
        assert!(csv.starts_with("pretrain_epochs,seeds,"));
    }
}
