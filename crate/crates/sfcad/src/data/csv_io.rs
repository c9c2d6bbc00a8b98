//! CSV ingestion and emission.
//!
//! Schema (UTF-8, header required):
//! `time,instance,<23 metric columns>,label` — one row per (step, VNF).
//! The chain order lives in a sidecar manifest `<stem>.manifest.json`
//! carrying the dataset name, the ordered VNF instance names, and the SLA
//! thresholds used for labeling. Floats are written in shortest
//! round-trip decimal form, so save/load is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Dataset, SlaThresholds, D_INPUT, METRIC_COLUMNS};

/// Sidecar file describing a monitoring CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    /// VNF instance names in chain order; defines row grouping.
    pub chain: Vec<String>,
    pub sla: SlaThresholds,
}

/// `foo.csv` -> `foo.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn header() -> String {
    let mut cols = vec!["time", "instance"];
    cols.extend(METRIC_COLUMNS);
    cols.push("label");
    cols.join(",")
}

/// Writes the dataset rows (time-major, chain order) and its manifest.
pub fn save_csv(dataset: &Dataset, csv: &Path) -> Result<()> {
    if dataset.d_input() != D_INPUT {
        return Err(Error::Contract(format!(
            "CSV schema carries {D_INPUT} metrics; dataset has {}",
            dataset.d_input()
        )));
    }
    let manifest = Manifest {
        name: dataset.name.clone(),
        chain: dataset.chain.clone(),
        sla: dataset.sla,
    };
    fs::write(
        manifest_path(csv),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let mut out = std::io::BufWriter::new(fs::File::create(csv)?);
    writeln!(out, "{}", header())?;
    for t in 0..dataset.len() {
        let frame = dataset.frame(t);
        let label = dataset.label(t);
        for (v, instance) in dataset.chain.iter().enumerate() {
            write!(out, "{t},{instance}")?;
            for x in frame.row_slice(v) {
                write!(out, ",{x}")?;
            }
            writeln!(out, ",{label}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Loads a monitoring CSV plus its manifest into an unnormalized, unsplit
/// dataset. Rows are grouped by `time` and reordered to the manifest's chain
/// order; every step must supply exactly one row per instance with a
/// consistent label.
pub fn load_csv(csv: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path(csv))?)?;
    if manifest.chain.is_empty() {
        return Err(Error::Config("manifest declares an empty chain".into()));
    }
    let v = manifest.chain.len();
    let index_of: BTreeMap<&str, usize> = manifest
        .chain
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    if index_of.len() != v {
        return Err(Error::Config("manifest chain has duplicate instances".into()));
    }

    let text = fs::read_to_string(csv)?;
    let mut lines = text.lines().enumerate();
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::Integrity("empty CSV".into()))?;
    if head.trim_end() != header() {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!("expected `{}`", header()),
        });
    }

    // step -> (per-vnf metrics, label)
    struct StepRows {
        metrics: Vec<Option<Vec<f64>>>,
        label: Option<u8>,
        first_row: usize,
    }
    let mut steps: BTreeMap<usize, StepRows> = BTreeMap::new();

    for (line_idx, line) in lines {
        let row = line_idx + 1; // 1-based, counting the header
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != D_INPUT + 3 {
            return Err(Error::Parse {
                row,
                column: "row".into(),
                message: format!("expected {} fields, got {}", D_INPUT + 3, fields.len()),
            });
        }
        let time: usize = fields[0].parse().map_err(|_| Error::Parse {
            row,
            column: "time".into(),
            message: format!("not an integer: `{}`", fields[0]),
        })?;
        let instance = fields[1];
        let vnf = *index_of.get(instance).ok_or_else(|| Error::Integrity(format!(
            "row {row}: instance `{instance}` is not in the manifest chain"
        )))?;
        let mut metrics = Vec::with_capacity(D_INPUT);
        for (j, cell) in fields[2..2 + D_INPUT].iter().enumerate() {
            metrics.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: METRIC_COLUMNS[j].into(),
                message: format!("not a number: `{cell}`"),
            })?);
        }
        let label: u8 = match *fields.last().expect("field count checked") {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    row,
                    column: "label".into(),
                    message: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        };

        let entry = steps.entry(time).or_insert_with(|| StepRows {
            metrics: vec![None; v],
            label: None,
            first_row: row,
        });
        if entry.metrics[vnf].is_some() {
            return Err(Error::Integrity(format!(
                "step {time}: duplicate row for instance `{instance}`"
            )));
        }
        entry.metrics[vnf] = Some(metrics);
        match entry.label {
            None => entry.label = Some(label),
            Some(prev) if prev != label => {
                return Err(Error::Integrity(format!(
                    "step {time}: inconsistent labels ({prev} vs {label})"
                )))
            }
            _ => {}
        }
    }

    if steps.is_empty() {
        return Err(Error::Integrity("CSV holds no data rows".into()));
    }
    // steps must be the consecutive integers 0..T
    let mut frames = Vec::with_capacity(steps.len());
    let mut labels = Vec::with_capacity(steps.len());
    for (expected, (time, rows)) in steps.into_iter().enumerate() {
        if time != expected {
            return Err(Error::Integrity(format!(
                "steps are not consecutive: expected {expected}, found {time}"
            )));
        }
        let mut values = Vec::with_capacity(v * D_INPUT);
        for (i, slot) in rows.metrics.iter().enumerate() {
            match slot {
                Some(m) => values.extend_from_slice(m),
                None => {
                    return Err(Error::Integrity(format!(
                        "step {time} (near row {}): missing row for instance `{}`",
                        rows.first_row, manifest.chain[i]
                    )))
                }
            }
        }
        frames.push(Tensor::new(vec![v, D_INPUT], values)?);
        labels.push(rows.label.expect("at least one row per step"));
    }

    Dataset::new(manifest.name, manifest.chain, manifest.sla, frames, labels)
}
