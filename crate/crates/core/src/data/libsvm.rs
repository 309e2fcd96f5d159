//! LibSVM text format: one sample per line, `<label> <idx>:<val> ...` with
//! 1-based, strictly increasing feature indices. Indices are stored 0-based
//! internally and converted back at the boundary.

use std::io::{BufRead, Write};

use crate::error::DataError;

/// A parsed sparse dataset. `rows[i]` holds (0-based index, value) pairs in
/// increasing index order; labels are kept verbatim (k-PCA ignores them).
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub rows: Vec<Vec<(u32, f64)>>,
    pub labels: Vec<f64>,
    /// Feature count: the maximum index seen, unless overridden at parse time.
    pub d: usize,
}

impl RawDataset {
    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses LibSVM text; `d` becomes the maximum feature index seen. Blank
/// lines are skipped; every malformed token is rejected with its line number.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<RawDataset, DataError> {
    parse_libsvm_with_dim(reader, None)
}

/// Like [`parse_libsvm`] but with a fixed feature count; indices beyond it
/// are rejected.
pub fn parse_libsvm_with_dim<R: BufRead>(
    reader: R,
    dim_override: Option<usize>,
) -> Result<RawDataset, DataError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index: usize = 0;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank line
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(line_no, format!("non-numeric label `{label_tok}`")))?;

        let mut row: Vec<(u32, f64)> = Vec::new();
        let mut prev_index: u32 = 0;
        for tok in tokens {
            let Some((idx_tok, val_tok)) = tok.split_once(':') else {
                return Err(parse_err(
                    line_no,
                    format!("malformed feature pair `{tok}` (expected idx:val)"),
                ));
            };
            let idx: u32 = idx_tok.parse().map_err(|_| {
                parse_err(line_no, format!("non-numeric feature index `{idx_tok}`"))
            })?;
            if idx == 0 {
                return Err(parse_err(line_no, "feature index 0 (indices are 1-based)"));
            }
            if idx <= prev_index {
                return Err(parse_err(
                    line_no,
                    format!("non-increasing feature index {idx} after {prev_index}"),
                ));
            }
            let value: f64 = val_tok
                .parse()
                .map_err(|_| parse_err(line_no, format!("non-numeric value `{val_tok}`")))?;
            if let Some(d) = dim_override {
                if idx as usize > d {
                    return Err(parse_err(
                        line_no,
                        format!("feature index {idx} exceeds declared dimension {d}"),
                    ));
                }
            }
            max_index = max_index.max(idx as usize);
            prev_index = idx;
            row.push((idx - 1, value));
        }
        rows.push(row);
        labels.push(label);
    }

    Ok(RawDataset {
        rows,
        labels,
        d: dim_override.unwrap_or(max_index),
    })
}

/// Writes the dataset back to LibSVM text. Values are formatted with the
/// shortest decimal representation that round-trips, so write∘parse is
/// value-identical.
pub fn write_libsvm<W: Write>(ds: &RawDataset, mut w: W) -> std::io::Result<()> {
    for (row, label) in ds.rows.iter().zip(&ds.labels) {
        write!(w, "{}", fmt_f64(*label))?;
        for &(idx, value) in row {
            write!(w, " {}:{}", idx + 1, fmt_f64(value))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    // Plain decimal where it stays short; scientific for extreme exponents.
    // Both Display and LowerExp emit round-trippable shortest forms.
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
