//! Delimited text matrix files.
//!
//! Data matrices are exchanged as comma- or tab-separated text: first row =
//! feature names, first column = sample names, `NA` (case-insensitive) or an
//! empty field = missing. Parameter matrices use the same delimiter without
//! any label row/column.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{GfaError, Result};

/// A labeled matrix as read from disk; missing entries are NaN.
#[derive(Debug, Clone)]
pub struct LabeledMatrix {
    pub values: DMatrix<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

fn detect_delimiter(line: &str) -> char {
    if line.contains('\t') {
        '\t'
    } else {
        ','
    }
}

fn parse_cell(path: &str, row: usize, col: usize, field: &str) -> Result<f64> {
    let t = field.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    t.parse::<f64>().map_err(|_| {
        GfaError::parse(
            path,
            format!("row {row}, column {col}: cannot parse value {t:?}"),
        )
    })
}

/// Read a labeled matrix file (header row of feature names, first column of
/// sample names).
pub fn read_labeled_matrix(path: impl AsRef<Path>) -> Result<LabeledMatrix> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| GfaError::io(&pstr, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| GfaError::parse(&pstr, "empty file"))?;
    let delim = detect_delimiter(header);
    let header_fields: Vec<&str> = header.split(delim).collect();

    let mut row_names = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(delim).collect();
        if fields.len() < 2 {
            return Err(GfaError::parse(
                &pstr,
                format!("data row {} has fewer than two fields", i + 1),
            ));
        }
        row_names.push(fields[0].trim().to_string());
        let vals: Vec<f64> = fields[1..]
            .iter()
            .enumerate()
            .map(|(j, f)| parse_cell(&pstr, i + 1, j + 1, f))
            .collect::<Result<_>>()?;
        if let Some(w) = width {
            if vals.len() != w {
                return Err(GfaError::parse(
                    &pstr,
                    format!("row {} has {} values, expected {}", i + 1, vals.len(), w),
                ));
            }
        } else {
            width = Some(vals.len());
        }
        rows.push(vals);
    }
    let ncols = width.ok_or_else(|| GfaError::parse(&pstr, "no data rows"))?;

    // The header may or may not include a corner cell above the sample names.
    let col_names: Vec<String> = if header_fields.len() == ncols + 1 {
        header_fields[1..].iter().map(|s| s.trim().to_string()).collect()
    } else if header_fields.len() == ncols {
        header_fields.iter().map(|s| s.trim().to_string()).collect()
    } else {
        return Err(GfaError::parse(
            &pstr,
            format!(
                "header has {} fields but data rows have {} values",
                header_fields.len(),
                ncols
            ),
        ));
    };

    let nrows = rows.len();
    let values = DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]);
    Ok(LabeledMatrix {
        values,
        row_names,
        col_names,
    })
}

/// Write a labeled matrix, tab-delimited, missing entries as `NA`.
pub fn write_labeled_matrix(
    path: impl AsRef<Path>,
    values: &DMatrix<f64>,
    row_names: &[String],
    col_names: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    assert_eq!(values.nrows(), row_names.len(), "row name count");
    assert_eq!(values.ncols(), col_names.len(), "column name count");
    let mut out = String::new();
    for name in col_names {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for (r, name) in row_names.iter().enumerate() {
        out.push_str(name);
        for c in 0..values.ncols() {
            out.push('\t');
            let v = values[(r, c)];
            if v.is_nan() {
                out.push_str("NA");
            } else {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| GfaError::io(&pstr, e))
}

/// Write an unlabeled numeric matrix (one row per line, tab-delimited).
pub fn write_plain_matrix(path: impl AsRef<Path>, values: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut out = String::new();
    for r in 0..values.nrows() {
        for c in 0..values.ncols() {
            if c > 0 {
                out.push('\t');
            }
            out.push_str(&format!("{}", values[(r, c)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| GfaError::io(&pstr, e))
}

/// Read an unlabeled numeric matrix written by [`write_plain_matrix`].
pub fn read_plain_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| GfaError::io(&pstr, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split('\t')
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| GfaError::parse(&pstr, format!("row {i}, field {j}")))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(GfaError::parse(&pstr, format!("ragged row {i}")));
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(GfaError::parse(&pstr, "no data rows"));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}
