//! Parsing of list flags and JSON operands.

use std::path::Path;

use qfidkit::channels::QuantumOperation;
use qfidkit::error::{Error, Result};
use qfidkit::linalg::{c64, ComplexMatrix, DensityOperator};
use serde_json::Value;

/// `a,b,c` or the inclusive range `start:stop:step`.
pub fn parse_reals(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("`{s}` is not a number")))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(Error::Parse(format!("range `{text}` is not start:stop:step")));
        };
        let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(Error::Parse(format!("range `{text}` is empty or has a non-positive step")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Rounded so that 0.1 * 3 prints as 0.3.
        return Ok((0..count)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    text.split(',').map(parse).collect()
}

pub fn parse_counts(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("`{s}` is not a nonnegative integer")))
        })
        .collect()
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn entry(v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Parse(format!("matrix entry {v} is not a number")))
}

/// Rows of entries, each a real number or a `[re, im]` pair.
pub fn matrix(v: &Value) -> Result<ComplexMatrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Parse("matrix must be an array of rows".into()))?;
    let n_rows = rows.len();
    let mut data = Vec::new();
    let mut n_cols = None;
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Parse("matrix row must be an array".into()))?;
        if *n_cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse("matrix rows differ in length".into()));
        }
        for z in row {
            data.push(match z {
                Value::Array(pair) if pair.len() == 2 => c64(entry(&pair[0])?, entry(&pair[1])?),
                other => c64(entry(other)?, 0.0),
            });
        }
    }
    Ok(ComplexMatrix::from_row_slice(n_rows, n_cols.unwrap_or(0), &data))
}

pub fn density(v: &Value) -> Result<DensityOperator> {
    DensityOperator::new(matrix(v)?)
}

pub fn operation(v: &Value) -> Result<QuantumOperation> {
    Ok(serde_json::from_value(v.clone())?)
}

pub fn field<'a>(doc: &'a Value, key: &str) -> Result<&'a Value> {
    doc.get(key)
        .ok_or_else(|| Error::Parse(format!("input is missing `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_reals("0.9, 0.1").unwrap(), vec![0.9, 0.1]);
        assert_eq!(parse_reals("0:0.5:0.1").unwrap(), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        assert!(parse_reals("0:1").is_err());
        assert!(parse_reals("x").is_err());
        assert_eq!(parse_counts("1,2").unwrap(), vec![1, 2]);
        assert!(parse_counts("-1").is_err());
    }

    #[test]
    fn matrices() {
        let m = matrix(&json!([[0.5, [0.0, 0.1]], [[0.0, -0.1], 0.5]])).unwrap();
        assert_eq!(m[(0, 1)], c64(0.0, 0.1));
        assert!(density(&json!([[0.5, [0.0, 0.1]], [[0.0, -0.1], 0.5]])).is_ok());
        assert!(matrix(&json!([[1.0], [1.0, 2.0]])).is_err());
        assert!(matrix(&json!({"a": 1})).is_err());
    }
}
