//! CSV and JSON writers. Column order of every CSV is fixed; floats are
//! written in their shortest round-trip form and absent values as empty
//! fields.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::run::RunRecord;
use super::sweep::{AblationRow, SweepRow};

pub const STEPS_HEADER: [&str; 12] = [
    "run_id",
    "optimizer",
    "lr",
    "mu",
    "seed",
    "step",
    "train_loss",
    "val_loss",
    "grad_norm_sq",
    "step_norm",
    "rho",
    "safeguard_count",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "optimizer",
    "lr",
    "final_train",
    "final_val",
    "min_val",
    "min_val_step",
    "diverged",
];

pub const HEATMAP_HEADER: [&str; 3] = ["optimizer", "lr", "val_loss_at_T"];

pub const SWEEP_HEADER: [&str; 9] = [
    "optimizer",
    "lr",
    "stage",
    "n_seeds",
    "n_diverged",
    "final_val",
    "min_val",
    "min_val_step",
    "metric",
];

pub const ABLATION_HEADER: [&str; 8] = [
    "mu",
    "control",
    "seed",
    "final_train",
    "final_val",
    "min_val",
    "min_val_step",
    "diverged",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_to_bytes<const N: usize>(header: [&str; N], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn steps_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let rows = records.iter().flat_map(|r| {
        r.steps.iter().map(move |s| {
            vec![
                r.run_id.clone(),
                r.optimizer.clone(),
                r.lr.to_string(),
                opt(r.mu),
                r.seed.to_string(),
                s.step.to_string(),
                s.train_loss.to_string(),
                s.val_loss.to_string(),
                s.grad_norm_sq.to_string(),
                s.step_norm.to_string(),
                opt(s.rho),
                s.safeguard_count.to_string(),
            ]
        })
    });
    csv_to_bytes(STEPS_HEADER, rows)
}

pub fn summary_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let rows = records.iter().map(|r| {
        let s = &r.summary;
        vec![
            r.optimizer.clone(),
            r.lr.to_string(),
            s.final_train.to_string(),
            s.final_val.to_string(),
            s.min_val.to_string(),
            s.min_val_step.to_string(),
            s.diverged.to_string(),
        ]
    });
    csv_to_bytes(SUMMARY_HEADER, rows)
}

/// One cell per (optimizer, lr): the median validation loss at the final
/// step, taken from sweep rows.
pub fn heatmap_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.optimizer.cmp(&b.optimizer).then(b.lr.total_cmp(&a.lr)));
    csv_to_bytes(
        HEATMAP_HEADER,
        sorted
            .into_iter()
            .map(|r| vec![r.optimizer.clone(), r.lr.to_string(), opt(r.final_val)]),
    )
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    csv_to_bytes(
        SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.optimizer.clone(),
                r.lr.to_string(),
                r.stage.to_string(),
                r.n_seeds.to_string(),
                r.n_diverged.to_string(),
                opt(r.final_val),
                opt(r.min_val),
                opt(r.min_val_step),
                opt(r.metric),
            ]
        }),
    )
}

pub fn ablation_csv(rows: &[AblationRow]) -> Result<Vec<u8>> {
    csv_to_bytes(
        ABLATION_HEADER,
        rows.iter().map(|r| {
            vec![
                r.mu.to_string(),
                r.control.to_string(),
                r.seed.to_string(),
                r.final_train.to_string(),
                r.final_val.to_string(),
                r.min_val.to_string(),
                r.min_val_step.to_string(),
                r.diverged.to_string(),
            ]
        }),
    )
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Writes `records` into directory `dir`: `steps.csv` and `summary.csv` for
/// [`Format::Csv`], `records.json` for [`Format::Json`].
pub fn emit_results(records: &[RunRecord], format: Format, dir: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    std::fs::create_dir_all(dir)?;
    match format {
        Format::Csv => {
            write_bytes(&dir.join("steps.csv"), &steps_csv(records)?)?;
            write_bytes(&dir.join("summary.csv"), &summary_csv(records)?)
        }
        Format::Json => write_json(&dir.join("records.json"), records),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{RunSummary, StepRecord};

    fn record(run_id: &str) -> RunRecord {
        RunRecord {
            run_id: run_id.into(),
            optimizer: "diag_ocp".into(),
            lr: 0.05,
            mu: Some(1e-4),
            seed: 3,
            steps: (0..3)
                .map(|k| StepRecord {
                    step: k,
                    train_loss: 1.0 / (k as f64 + 1.0),
                    val_loss: 1.5 / (k as f64 + 1.0),
                    grad_norm_sq: 0.1,
                    step_norm: 0.01 * k as f64,
                    rho: (k > 0).then_some(0.99),
                    safeguard_count: 0,
                })
                .collect(),
            summary: RunSummary {
                final_train: 1.0 / 3.0,
                final_val: 0.5,
                min_val: 0.5,
                min_val_step: 2,
                diverged: false,
                diverged_at: None,
                wall_clock_ms: 1.0,
            },
        }
    }

    #[test]
    fn steps_csv_has_header_and_one_row_per_step() {
        let bytes = steps_csv(&[record("a")]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.split("\r\n").filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], STEPS_HEADER.join(","));
        assert!(lines[1].ends_with(",0,,0"), "{}", lines[1]);
    }

    #[test]
    fn fields_are_quoted_when_needed() {
        let text = String::from_utf8(summary_csv(&[RunRecord {
            optimizer: "odd,\"name\"".into(),
            ..record("x")
        }])
        .unwrap())
        .unwrap();
        assert!(text.contains("\"odd,\"\"name\"\"\""), "{text}");
    }

    #[test]
    fn empty_records_are_rejected() {
        assert!(matches!(steps_csv(&[]), Err(Error::EmptyRecords)));
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&[], Format::Csv, dir.path()).is_err());
    }
}
