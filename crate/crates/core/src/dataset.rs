//! Observational datasets: `n x d` real matrices with optional column names.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::table::{read_numeric_csv, write_csv};

/// `n` observations of `d` variables, stored column-major so each variable
/// is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    columns: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Structural("dataset must have at least one row and one column".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Input(format!("non-finite value at row {r}, column {c}")));
        }
        Ok(Dataset { values, columns: None })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Structural("rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
    }

    /// Builds a dataset from column vectors of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Structural("columns have unequal lengths".into()));
        }
        Self::new(DMatrix::from_iterator(n, cols.len(), cols.iter().flatten().copied()))
    }

    pub fn with_columns(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::Structural(format!(
                "{} column names for {} columns",
                names.len(),
                self.d()
            )));
        }
        self.columns = Some(names);
        Ok(self)
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of variables.
    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.columns.as_deref()
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.d()).map(|c| self.values[(r, c)]).collect()
    }

    /// Returns a copy with every column shifted to mean 0 and scaled to unit
    /// (population) standard deviation; constant columns are only centered.
    pub fn standardized(&self) -> Dataset {
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let scale = if sd > 0.0 { sd } else { 1.0 };
            col.apply(|v| *v = (*v - mean) / scale);
        }
        Dataset { values, columns: self.columns.clone() }
    }

    /// Reorders columns: column `v` of `self` becomes column `perm[v]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Dataset> {
        if perm.len() != self.d() {
            return Err(Error::Structural("permutation length differs from d".into()));
        }
        let mut inverse = vec![0; perm.len()];
        for (v, &p) in perm.iter().enumerate() {
            inverse[p] = v;
        }
        let values = DMatrix::from_fn(self.n(), self.d(), |r, c| self.values[(r, inverse[c])]);
        Ok(Dataset { values, columns: None })
    }
}

/// Loads a numeric CSV, detecting an optional header row.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let table = read_numeric_csv(path, true)?;
    if table.rows.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }
    let ds = Dataset::from_rows(&table.rows).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    match table.header {
        Some(h) => ds.with_columns(h),
        None => Ok(ds),
    }
}

/// Writes the dataset as CSV, with a header row when column names are set.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_csv(path, ds.column_names(), (0..ds.n()).map(|r| ds.row(r)))
}
