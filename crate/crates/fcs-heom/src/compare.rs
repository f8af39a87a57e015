//! Column-wise comparison of two reports.

use serde::Serialize;

use crate::error::AppError;
use crate::output::{Cell, Table};

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ColumnVerdict {
    pub column: String,
    /// `max |a - b| / max |b|`.
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Verdict {
    pub columns: Vec<ColumnVerdict>,
    pub pass: bool,
}

impl Verdict {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new("compare", &["column", "deviation", "tolerance", "pass"]);
        for c in &self.columns {
            t.push(vec![Cell::Text(c.column.clone()), c.deviation.into(), c.tolerance.into(), (if c.pass { "PASS" } else { "FAIL" }).into()]);
        }
        t
    }
}

fn deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(1e-300)
    }
}

fn numeric_columns(t: &Table) -> Vec<String> {
    t.header
        .iter()
        .enumerate()
        .filter(|(i, _)| t.rows.iter().all(|r| !matches!(r[*i], Cell::Text(_))))
        .map(|(_, h)| h.clone())
        .collect()
}

/// Compares every numeric column the two tables share. The first column is
/// the grid and must match exactly.
pub fn compare(a: &Table, b: &Table, tolerance: f64) -> Result<Verdict, AppError> {
    if a.rows.len() != b.rows.len() || a.header.first() != b.header.first() {
        return Err(AppError::Other("grid mismatch: tables have different shapes".into()));
    }
    if let Some(grid) = a.header.first() {
        if let (Some(x), Some(y)) = (a.column(grid), b.column(grid)) {
            if x.iter().zip(&y).any(|(p, q)| (p - q).abs() > 1e-12 * p.abs().max(1.0)) {
                return Err(AppError::Other(format!("grid mismatch in column {grid}")));
            }
        }
    }
    let cols_b = numeric_columns(b);
    let columns: Vec<ColumnVerdict> = numeric_columns(a)
        .into_iter()
        .skip(1)
        .filter(|c| cols_b.contains(c))
        .map(|c| {
            let d = deviation(&a.column(&c).unwrap(), &b.column(&c).unwrap());
            ColumnVerdict { pass: d <= tolerance, column: c, deviation: d, tolerance }
        })
        .collect();
    if columns.is_empty() {
        return Err(AppError::Other("no shared numeric columns".into()));
    }
    let pass = columns.iter().all(|c| c.pass);
    Ok(Verdict { columns, pass })
}

/// Compares two columns of one table, for example the two conductance estimators.
pub fn compare_columns(t: &Table, first: &str, second: &str, tolerance: f64) -> Result<Verdict, AppError> {
    let a = t.column(first).ok_or_else(|| AppError::Other(format!("no column {first}")))?;
    let b = t.column(second).ok_or_else(|| AppError::Other(format!("no column {second}")))?;
    let d = deviation(&a, &b);
    let c = ColumnVerdict { column: format!("{first}~{second}"), deviation: d, tolerance, pass: d <= tolerance };
    Ok(Verdict { pass: c.pass, columns: vec![c] })
}
