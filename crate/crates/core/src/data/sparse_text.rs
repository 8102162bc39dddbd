//! Sparse text reader and writer.
//!
//! Line format: `label idx:val idx:val ...` with 1-based, strictly
//! increasing indices, as used by the common sparse classification corpora.
//! Labels map to `{-1, +1}` by sign.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::vector::FeatureVec;

/// Reads a sparse text file. The dimension is the largest index seen
/// unless `dim_override` extends it; an override smaller than the data is
/// rejected.
pub fn read_sparse_text(path: &Path, dim_override: Option<usize>) -> Result<Dataset> {
    let display = path.display().to_string();
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    let mut max_index = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let malformed = |msg: String| Error::MalformedLine {
            path: display.clone(),
            line: line_no,
            msg,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut tokens = trimmed.split_ascii_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label_val: f64 = label_tok
            .parse()
            .map_err(|_| malformed(format!("unparseable label {label_tok:?}")))?;
        let label = if label_val > 0.0 { 1 } else { -1 };

        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| malformed(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| malformed(format!("unparseable index {idx_s:?}")))?;
            if idx == 0 {
                return Err(malformed("indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(malformed(format!(
                    "index {idx} not strictly increasing after {prev}"
                )));
            }
            let val: f64 = val_s
                .parse()
                .map_err(|_| malformed(format!("unparseable value {val_s:?}")))?;
            prev = idx;
            indices.push(idx - 1);
            values.push(val);
        }
        max_index = max_index.max(prev);
        examples.push(Example {
            features: FeatureVec::sparse(indices, values)?,
            label,
        });
    }

    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(Error::InvalidConfig(format!(
                "declared dimension {d} smaller than max index {max_index} in {display}"
            )));
        }
        Some(d) => d,
        None => max_index,
    };
    Dataset::new(examples, dim)
}

/// Writes a dataset in the sparse text format. Values use the shortest
/// representation that parses back to the same bits, so a write/read
/// round trip is exact.
pub fn write_sparse_text(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for ex in data.examples() {
        write!(out, "{}", ex.label)?;
        for (i, v) in ex.features.iter_entries() {
            if v != 0.0 {
                write!(out, " {}:{}", i + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
