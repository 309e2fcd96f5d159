//! Trace CSV files and the run summary JSON.
//!
//! CSV schema (fixed header, rows sorted by (run_id, iteration)):
//!   run_id,seed,iteration,ifo,objective,subopt,grad_norm,elapsed_s
//! A leading `#` comment records which reference the subopt column uses.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rspider_core::optim::TraceRecord;
use serde::{Deserialize, Serialize};

pub const TRACE_HEADER: &str = "run_id,seed,iteration,ifo,objective,subopt,grad_norm,elapsed_s";

/// How the sub-optimality column is anchored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum SuboptReference {
    /// Exact or reference optimum f*.
    Optimum(f64),
    /// No optimum available: the minimum objective seen across the run set.
    RunSetMinimum(f64),
}

impl SuboptReference {
    pub fn value(&self) -> f64 {
        match self {
            SuboptReference::Optimum(v) | SuboptReference::RunSetMinimum(v) => *v,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            SuboptReference::Optimum(_) => "optimum",
            SuboptReference::RunSetMinimum(_) => "run_set_minimum",
        }
    }
}

/// Shortest round-trippable decimal form (scientific for extreme exponents).
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn trace_file_name(run_id: &str, seed: u64) -> String {
    format!("{run_id}_seed{seed}.csv")
}

/// Writes one (run_id, seed) trace. Iterations are recorded in order, which
/// keeps the file sorted by (run_id, iteration).
pub fn write_trace(
    dir: &Path,
    run_id: &str,
    seed: u64,
    records: &[TraceRecord],
    reference: &SuboptReference,
) -> Result<PathBuf> {
    let path = dir.join(trace_file_name(run_id, seed));
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(
        w,
        "# subopt_reference={} {}",
        reference.label(),
        fmt_f64(reference.value())
    )?;
    writeln!(w, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{run_id},{seed},{},{},{},{},{},{}",
            r.iteration,
            r.ifo,
            fmt_f64(r.objective),
            fmt_f64(r.objective - reference.value()),
            fmt_f64(r.grad_estimate_norm),
            fmt_f64(r.elapsed_s),
        )?;
    }
    w.flush()?;
    Ok(path)
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run_id: String,
    pub seed: u64,
    pub iteration: u64,
    pub ifo: u64,
    pub objective: f64,
    pub subopt: f64,
    pub grad_norm: f64,
    pub elapsed_s: f64,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let reader =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                bail!(
                    "{}: unexpected header `{line}` (expected `{TRACE_HEADER}`)",
                    path.display()
                );
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!(
                "{}:{}: expected 8 fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            );
        }
        rows.push(TraceRow {
            run_id: fields[0].to_string(),
            seed: fields[1].parse()?,
            iteration: fields[2].parse()?,
            ifo: fields[3].parse()?,
            objective: fields[4].parse()?,
            subopt: fields[5].parse()?,
            grad_norm: fields[6].parse()?,
            elapsed_s: fields[7].parse()?,
        });
    }
    if !saw_header {
        bail!("{}: no header found", path.display());
    }
    Ok(rows)
}

/// Per-cell outcome recorded in the summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub optimizer: String,
    pub run_id: String,
    pub seed: u64,
    pub final_objective: Option<f64>,
    pub final_subopt: Option<f64>,
    pub total_ifo: u64,
    pub iterations: u64,
    pub wall_s: f64,
    pub termination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    /// Full config echo for provenance.
    pub config: crate::config::RunConfig,
    pub problem_n: usize,
    pub subopt_reference: SuboptReference,
    pub cells: Vec<CellSummary>,
}

pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<PathBuf> {
    let path = dir.join("summary.json");
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.flush()?;
    Ok(path)
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("summary.json");
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            TraceRecord {
                iteration: 0,
                ifo: 10,
                objective: -0.5,
                grad_estimate_norm: 0.25,
                true_grad_norm: None,
                elapsed_s: 0.001,
            },
            TraceRecord {
                iteration: 1,
                ifo: 14,
                objective: -0.625,
                grad_estimate_norm: 1e-300,
                true_grad_norm: None,
                elapsed_s: 0.002,
            },
        ];
        let reference = SuboptReference::Optimum(-0.75);
        let path = write_trace(dir.path(), "rspider", 3, &records, &reference).unwrap();
        let rows = read_trace(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].run_id, "rspider");
        assert_eq!(rows[0].seed, 3);
        assert_eq!(rows[1].grad_norm.to_bits(), 1e-300f64.to_bits());
        assert_eq!(rows[0].subopt.to_bits(), 0.25f64.to_bits());
        // ifo strictly increases
        assert!(rows[1].ifo > rows[0].ifo);
    }
}
