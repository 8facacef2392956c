//! Exact shifted topological recursion on (r,s) spectral curves, with three
//! independent verification routes: W-constraints, quantum curves and WKB.

pub mod airy;
pub mod curve;
pub mod error;
pub mod exact;
pub mod exec;
pub mod io;
pub mod qcurve;
pub mod report;
pub mod series;
pub mod tr;
pub mod wkb;

pub use error::{Error, Result};
