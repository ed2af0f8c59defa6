use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Covariate matrix (one row per observation) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// Feature names default to `x1..xp`.
    pub fn new(x: Array2<f64>, y: Vec<f64>, names: Option<Vec<String>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: y.len(),
            });
        }
        let names = names.unwrap_or_else(|| (1..=x.ncols()).map(|j| format!("x{j}")).collect());
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: names.len(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite response at row {i}")));
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite covariate at row {i}, column {j}")));
        }
        Ok(Dataset { x, y, names })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            x: self.x.slice(ndarray::s![start..end, ..]).to_owned(),
            y: self.y[start..end].to_vec(),
            names: self.names.clone(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
        }
    }

    /// `[min, max]` of the responses widened by `fraction` of the span on
    /// each side.
    pub fn widened_range(&self, fraction: f64) -> Result<(f64, f64)> {
        widened_range(&self.y, fraction)
    }

    /// CSV with header `y,<feature names>`; floats written in shortest
    /// round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, y) in self.y.iter().enumerate() {
            record.clear();
            record.push(y.to_string());
            record.extend(self.x.row(i).iter().map(f64::to_string));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn widened_range(ys: &[f64], fraction: f64) -> Result<(f64, f64)> {
    if ys.is_empty() {
        return Err(Error::EmptyData("no responses to derive a range from".into()));
    }
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo { fraction * (hi - lo) } else { 0.5 };
    Ok((lo - pad, hi + pad))
}
