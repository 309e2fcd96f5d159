//! The `plot` command: aggregates trace files (median over seeds) and emits a
//! self-contained plotting script. No images are rendered here.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use crate::trace_io::{fmt_f64, read_summary, read_trace, TraceRow};

/// Median with the usual even-count average.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRow {
    pub run_id: String,
    pub iteration: u64,
    pub ifo: f64,
    pub ifo_over_n: f64,
    pub subopt: f64,
    pub elapsed_s: f64,
}

/// Median curves over seeds, keyed by (run_id, iteration). Iterations missing
/// from some seeds aggregate over the seeds that reached them.
pub fn aggregate(rows: &[TraceRow], n: usize) -> Vec<AggregatedRow> {
    let mut grouped: BTreeMap<(String, u64), Vec<&TraceRow>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry((row.run_id.clone(), row.iteration))
            .or_default()
            .push(row);
    }
    grouped
        .into_iter()
        .map(|((run_id, iteration), bucket)| {
            let mut ifo: Vec<f64> = bucket.iter().map(|r| r.ifo as f64).collect();
            let mut subopt: Vec<f64> = bucket.iter().map(|r| r.subopt).collect();
            let mut elapsed: Vec<f64> = bucket.iter().map(|r| r.elapsed_s).collect();
            let ifo = median(&mut ifo);
            AggregatedRow {
                run_id,
                iteration,
                ifo,
                ifo_over_n: ifo / n as f64,
                subopt: median(&mut subopt),
                elapsed_s: median(&mut elapsed),
            }
        })
        .collect()
}

pub fn cmd_plot(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let mut trace_files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().map(|e| e == "csv").unwrap_or(false)
                && p.file_name()
                    .and_then(|f| f.to_str())
                    .map(|f| f.contains("_seed"))
                    .unwrap_or(false)
        })
        .collect();
    trace_files.sort();
    if trace_files.is_empty() {
        bail!(
            "no trace files found in {} (expected files matching `<run_id>_seed<seed>.csv`)",
            dir.display()
        );
    }

    let mut rows = Vec::new();
    for f in &trace_files {
        rows.extend(read_trace(f)?);
    }
    let n = match read_summary(dir) {
        Ok(s) => s.problem_n,
        Err(_) => {
            log::warn!("no readable summary.json; ifo_over_n will use n = 1");
            1
        }
    };
    let aggregated = aggregate(&rows, n);

    let agg_path = dir.join("aggregated.csv");
    let mut w = BufWriter::new(File::create(&agg_path)?);
    writeln!(w, "run_id,iteration,ifo,ifo_over_n,subopt,elapsed_s")?;
    for r in &aggregated {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.run_id,
            r.iteration,
            fmt_f64(r.ifo),
            fmt_f64(r.ifo_over_n),
            fmt_f64(r.subopt),
            fmt_f64(r.elapsed_s)
        )?;
    }
    w.flush()?;

    let script_path = dir.join("plot_traces.py");
    std::fs::write(&script_path, PLOT_SCRIPT)?;
    println!(
        "wrote {} and {}; run `python3 {}` to render",
        agg_path.display(),
        script_path.display(),
        script_path.display()
    );
    Ok((agg_path, script_path))
}

/// Reads aggregated.csv next to itself; one curve per run id, log-scale
/// sub-optimality against IFO/n and against wall-clock seconds.
const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Render sub-optimality curves from aggregated.csv (written by `plot`)."""
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
curves = defaultdict(lambda: ([], [], []))  # run_id -> (ifo_over_n, subopt, elapsed)
with open(os.path.join(here, "aggregated.csv")) as f:
    for row in csv.DictReader(f):
        c = curves[row["run_id"]]
        c[0].append(float(row["ifo_over_n"]))
        c[1].append(float(row["subopt"]))
        c[2].append(float(row["elapsed_s"]))

fig, (ax_ifo, ax_time) = plt.subplots(1, 2, figsize=(11, 4.2))
floor = 1e-16
for run_id in sorted(curves):
    ifo, subopt, elapsed = curves[run_id]
    subopt = [max(s, floor) for s in subopt]
    ax_ifo.plot(ifo, subopt, label=run_id)
    ax_time.plot(elapsed, subopt, label=run_id)
ax_ifo.set_xlabel("IFO / n")
ax_ifo.set_ylabel("f(x) - f*")
ax_ifo.set_yscale("log")
ax_ifo.legend()
ax_time.set_xlabel("seconds")
ax_time.set_ylabel("f(x) - f*")
ax_time.set_yscale("log")
ax_time.legend()
fig.tight_layout()
out = os.path.join(here, "traces.png")
fig.savefig(out, dpi=150)
print(f"wrote {out}")
"#;
