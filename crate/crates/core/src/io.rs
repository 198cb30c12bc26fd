//! File-format helpers: Matrix Market input and diff-stable float output.

use nalgebra::DMatrix;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Fixed 17-significant-digit scientific notation.
///
/// Every CSV column in this crate goes through this formatter so that
/// identical runs produce byte-identical artifacts.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{:.16e}", x)
    }
}

/// Reads a dense matrix from a Matrix Market file.
///
/// Supports `coordinate` files with `real`/`integer` fields and
/// `general`/`symmetric`/`skew-symmetric` storage, plus `array real general`
/// files (column-major). Pattern and complex fields are rejected.
pub fn read_matrix_market(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::FileFormat(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();

    let ctx = |msg: &str| Error::FileFormat(format!("{}: {msg}", path.display()));

    let header = lines
        .next()
        .ok_or_else(|| ctx("empty file"))?
        .map_err(|e| ctx(&e.to_string()))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_lowercase()).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(ctx("missing %%MatrixMarket matrix header"));
    }
    let format = fields[2].as_str();
    let field = fields[3].as_str();
    let symmetry = fields[4].as_str();
    if !matches!(field, "real" | "integer") {
        return Err(ctx(&format!("unsupported field type '{field}'")));
    }

    let mut data_lines = lines.filter_map(|l| match l {
        Ok(s) => {
            let t = s.trim().to_string();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok(t))
            }
        }
        Err(e) => Some(Err(e)),
    });

    let size_line = data_lines
        .next()
        .ok_or_else(|| ctx("missing size line"))?
        .map_err(|e| ctx(&e.to_string()))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();

    match format {
        "coordinate" => {
            if dims.len() != 3 {
                return Err(ctx("coordinate size line must be 'rows cols nnz'"));
            }
            let nrows: usize = dims[0].parse().map_err(|_| ctx("bad row count"))?;
            let ncols: usize = dims[1].parse().map_err(|_| ctx("bad column count"))?;
            let nnz: usize = dims[2].parse().map_err(|_| ctx("bad nnz count"))?;
            let mut m = DMatrix::zeros(nrows, ncols);
            for _ in 0..nnz {
                let line = data_lines
                    .next()
                    .ok_or_else(|| ctx("fewer entries than the declared nnz"))?
                    .map_err(|e| ctx(&e.to_string()))?;
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(ctx(&format!("malformed entry line '{line}'")));
                }
                let i: usize = parts[0].parse().map_err(|_| ctx("bad row index"))?;
                let j: usize = parts[1].parse().map_err(|_| ctx("bad column index"))?;
                let v: f64 = parts[2].parse().map_err(|_| ctx("bad value"))?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(ctx(&format!("entry ({i}, {j}) out of bounds")));
                }
                m[(i - 1, j - 1)] = v;
                match symmetry {
                    "general" => {}
                    "symmetric" => {
                        if i != j {
                            m[(j - 1, i - 1)] = v;
                        }
                    }
                    "skew-symmetric" => {
                        if i != j {
                            m[(j - 1, i - 1)] = -v;
                        }
                    }
                    other => return Err(ctx(&format!("unsupported symmetry '{other}'"))),
                }
            }
            Ok(m)
        }
        "array" => {
            if symmetry != "general" {
                return Err(ctx("array files must use general symmetry"));
            }
            if dims.len() != 2 {
                return Err(ctx("array size line must be 'rows cols'"));
            }
            let nrows: usize = dims[0].parse().map_err(|_| ctx("bad row count"))?;
            let ncols: usize = dims[1].parse().map_err(|_| ctx("bad column count"))?;
            let mut values = Vec::with_capacity(nrows * ncols);
            for line in data_lines {
                let line = line.map_err(|e| ctx(&e.to_string()))?;
                for tok in line.split_whitespace() {
                    values.push(tok.parse::<f64>().map_err(|_| ctx("bad value"))?);
                }
            }
            if values.len() != nrows * ncols {
                return Err(ctx(&format!(
                    "array file carries {} values, expected {}",
                    values.len(),
                    nrows * ncols
                )));
            }
            Ok(DMatrix::from_column_slice(nrows, ncols, &values))
        }
        other => Err(ctx(&format!("unsupported format '{other}'"))),
    }
}
