//! Datasets and the CSV ingestion format.
//!
//! CSV layout: a header row, first column named `y` (the response), remaining
//! columns are covariates. UTF-8 with `.` as the decimal separator.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        Self::with_names(y, x, None)
    }

    pub fn with_names(
        y: DVector<f64>,
        x: DMatrix<f64>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        if y.is_empty() || x.ncols() == 0 {
            return Err(Error::Data("dataset needs n >= 1 and p >= 1".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Data(format!(
                "covariate matrix has {} rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in dataset".into()));
        }
        if let Some(names) = &names {
            if names.len() != x.ncols() {
                return Err(Error::Data(format!(
                    "{} column names for {} covariates",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        Ok(Self { y, x, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Covariate row `i` as an owned vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Dataset with observation `i` removed.
    pub fn without(&self, i: usize) -> Result<Dataset> {
        if self.n() < 2 {
            return Err(Error::Input("cannot drop the only observation".into()));
        }
        let y = self.y.clone().remove_row(i);
        let x = self.x.clone().remove_row(i);
        Dataset::with_names(y, x, self.names.clone())
    }

    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|v| *v == 0.0 || *v == 1.0)
    }

    /// Center and scale every non-constant covariate column (sample standard
    /// deviation); constant columns such as an intercept are left untouched.
    /// When `response` is set the response is standardized as well.
    pub fn standardize(&mut self, response: bool) {
        for mut col in self.x.column_iter_mut() {
            if let Some((mean, sd)) = mean_sd(col.as_slice()) {
                col.apply(|v| *v = (*v - mean) / sd);
            }
        }
        if response {
            if let Some((mean, sd)) = mean_sd(self.y.as_slice()) {
                self.y.apply(|v| *v = (*v - mean) / sd);
            }
        }
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("line 1: {e}")))?
            .clone();
        match headers.iter().position(|h| h == "y") {
            None => return Err(Error::Data("line 1: missing `y` column".into())),
            Some(0) => {}
            Some(k) => {
                return Err(Error::Data(format!(
                    "line 1: `y` must be the first column (found at position {})",
                    k + 1
                )))
            }
        }
        if headers.len() < 2 {
            return Err(Error::Data("line 1: no covariate columns".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let p = names.len();
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let line = row_idx + 2;
            let record = record.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            if record.len() != p + 1 {
                return Err(Error::Data(format!(
                    "line {line}: expected {} fields, found {}",
                    p + 1,
                    record.len()
                )));
            }
            for (k, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("line {line}: cannot parse `{field}` as a number"))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("line {line}: non-finite value")));
                }
                if k == 0 {
                    ys.push(v);
                } else {
                    xs.push(v);
                }
            }
        }
        if ys.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        let n = ys.len();
        let x = DMatrix::from_row_slice(n, p, &xs);
        Dataset::with_names(DVector::from_vec(ys), x, Some(names))
    }

    /// Write in the CSV ingestion format (full round-trip precision).
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let default_names: Vec<String>;
        let names = match &self.names {
            Some(n) => n.as_slice(),
            None => {
                default_names = (1..=self.p()).map(|j| format!("x{j}")).collect();
                default_names.as_slice()
            }
        };
        write!(w, "y")?;
        for name in names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for i in 0..self.n() {
            write!(w, "{:?}", self.y[i])?;
            for j in 0..self.p() {
                write!(w, ",{:?}", self.x[(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn mean_sd(v: &[f64]) -> Option<(f64, f64)> {
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (sd > 1e-12 * (1.0 + mean.abs())).then_some((mean, sd))
}
