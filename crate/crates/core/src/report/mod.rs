//! Metrics, codeword distributions and comparison tables.

mod cdf;
mod metrics;
mod tables;

pub use cdf::{codeword_cdf, CdfCurve, NEAR_ZERO};
pub use metrics::{nmse, qsnr, to_db, Expectation, RatioStats};
pub use tables::{make_tables, Method, Record, RunReport, Tables, DB_FLOOR};
