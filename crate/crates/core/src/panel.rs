//! Dense date × symbol matrices.
//!
//! A [`Panel`] holds one field (a price, a factor, a label) for every
//! `(date, symbol)` pair. Missing observations are stored as `NaN`; use
//! [`is_missing`] rather than comparing against [`MISSING`].

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Marker stored in a panel cell with no observation.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(x: f64) -> bool {
    x.is_nan()
}

#[derive(Debug, Clone)]
pub struct Panel {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    values: Array2<f64>,
}

impl Panel {
    pub fn new(dates: Vec<NaiveDate>, symbols: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (dates.len(), symbols.len()) {
            return Err(Error::Malformed(format!(
                "panel values have shape {:?}, axes imply ({}, {})",
                values.dim(),
                dates.len(),
                symbols.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed("panel dates must be strictly increasing".into()));
        }
        let mut sorted = symbols.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Malformed("panel symbols must be unique".into()));
        }
        Ok(Panel { dates, symbols, values })
    }

    /// An all-missing panel over the given axes.
    pub fn missing(dates: Vec<NaiveDate>, symbols: Vec<String>) -> Result<Self> {
        let values = Array2::from_elem((dates.len(), symbols.len()), MISSING);
        Panel::new(dates, symbols, values)
    }

    /// Same axes as `self`, every cell missing.
    pub fn missing_like(&self) -> Panel {
        Panel {
            dates: self.dates.clone(),
            symbols: self.symbols.clone(),
            values: Array2::from_elem(self.values.dim(), MISSING),
        }
    }

    /// Builds a panel from per-symbol columns.
    pub fn from_columns(dates: Vec<NaiveDate>, symbols: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != symbols.len() {
            return Err(Error::LengthMismatch {
                expected: symbols.len(),
                found: columns.len(),
            });
        }
        let mut values = Array2::from_elem((dates.len(), symbols.len()), MISSING);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != dates.len() {
                return Err(Error::LengthMismatch {
                    expected: dates.len(),
                    found: col.len(),
                });
            }
            for (t, &v) in col.iter().enumerate() {
                values[[t, j]] = v;
            }
        }
        Panel::new(dates, symbols, values)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[[t, j]]
    }

    pub fn set(&mut self, t: usize, j: usize, v: f64) {
        self.values[[t, j]] = v;
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.values.row(t)
    }

    pub fn same_axes(&self, other: &Panel) -> bool {
        self.dates == other.dates && self.symbols == other.symbols
    }

    /// Applies a series transform to every symbol's column.
    ///
    /// The transform must return a series of the same length.
    pub fn map_columns<F>(&self, mut f: F) -> Panel
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut out = self.missing_like();
        for j in 0..self.n_symbols() {
            let col = f(&self.column(j));
            debug_assert_eq!(col.len(), self.n_dates());
            for (t, v) in col.into_iter().enumerate() {
                out.values[[t, j]] = v;
            }
        }
        out
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Panel {
        Panel {
            dates: self.dates.clone(),
            symbols: self.symbols.clone(),
            values: self.values.mapv(f),
        }
    }

    /// Pointwise combination of two panels with identical axes.
    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Panel, f: F) -> Result<Panel> {
        if !self.same_axes(other) {
            return Err(Error::Malformed("panels do not share axes".into()));
        }
        let mut out = self.clone();
        ndarray::Zip::from(&mut out.values)
            .and(&other.values)
            .for_each(|a, &b| *a = f(*a, b));
        Ok(out)
    }

    /// The first `n` dates of the panel.
    pub fn head(&self, n: usize) -> Panel {
        let n = n.min(self.n_dates());
        Panel {
            dates: self.dates[..n].to_vec(),
            symbols: self.symbols.clone(),
            values: self.values.slice(ndarray::s![..n, ..]).to_owned(),
        }
    }

    pub fn count_defined(&self) -> usize {
        self.values.iter().filter(|v| !is_missing(**v)).count()
    }
}

/// Cell-wise equality where two missing cells compare equal.
impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.same_axes(other)
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}
