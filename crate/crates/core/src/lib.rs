//! Long-short equity research toolkit: market data ingestion, factor
//! construction, labelled datasets, feature selection, classifiers,
//! ensembles, walk-forward backtesting and performance analytics.

// `!(x >= 0.0)` is how NaN gets rejected here; indexed loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod backtest;
pub mod classifiers;
pub mod compare;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod factors;
pub mod market_data;
pub mod panel;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use factors::{compute_factors, FactorKind, FactorMatrix, FactorRegistry, FactorSpec};
pub use market_data::{BarSet, Fundamentals, Universe};
pub use panel::{is_missing, Panel, MISSING};
