//! CSV input: a header row followed by numeric records.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};

use cgmix::Dataset;

/// Raw table with the header and every record as text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let headers: Vec<String> = reader
            .headers()
            .with_context(|| format!("reading header of {}", path.display()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.iter().all(String::is_empty) {
            bail!("{} is empty: expected a header row", path.display());
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.with_context(|| format!("reading {}", path.display()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            bail!("{} has a header but no data rows (n = 0)", path.display());
        }
        Ok(Table { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            anyhow!(
                "column '{name}' not found; available: {}",
                self.headers.join(", ")
            )
        })
    }

    /// Parsed values of one column. Errors name the file line (the header is
    /// line 1) and the column.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let line = i + 2;
                let cell = row.get(j).map(String::as_str).unwrap_or("");
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    bail!("line {line}, column '{name}': missing value");
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => bail!("line {line}, column '{name}': '{cell}' is not a finite number"),
                }
            })
            .collect()
    }
}

/// Dataset with an intercept prepended to the expert covariates.
pub fn build_dataset(
    table: &Table,
    y_col: &str,
    x_cols: &[String],
    t_col: &str,
) -> Result<Dataset> {
    let y = table.numeric_column(y_col)?;
    let xs = x_cols
        .iter()
        .map(|c| table.numeric_column(c))
        .collect::<Result<Vec<_>>>()?;
    let t = table.numeric_column(t_col)?;
    let n = y.len();
    let x = DMatrix::from_fn(
        n,
        xs.len() + 1,
        |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] },
    );
    Ok(Dataset::new(DVector::from_vec(y), x, DVector::from_vec(t))?)
}

pub fn ingest_csv(path: &Path, y_col: &str, x_cols: &[String], t_col: &str) -> Result<Dataset> {
    build_dataset(&Table::read(path)?, y_col, x_cols, t_col)
}
