//! Streaming concept-drift detection over the four confusion rates of a
//! binary classifier.
//!
//! ```
//! use std::sync::Arc;
//!
//! use driftwatch::bounds::{BoundTable, GridSpec};
//! use driftwatch::detectors::{Detector, DetectorParams, Lfr};
//! use driftwatch::stream::{generate_stream, scenario};
//!
//! // warn at 1e-2, detect at 1e-3; real runs want the default 200k draws
//! let table = BoundTable::build(&GridSpec::standard(&[1e-2, 1e-3]), 0.9, 0.5, 2_000, 7)?;
//! let mut lfr = Lfr::new(DetectorParams::uniform(0.9, 1e-2, 1e-3)?, Arc::new(table))?;
//!
//! let stream = generate_stream(&scenario("Imbalance1")?.config(4_000, 1)?)?;
//! for (y, yhat) in stream.pairs {
//!     let out = lfr.step(y, yhat);
//!     if let Some((warned, detected)) = out.warn_window {
//!         println!("drift at {detected}, new concept since {warned}");
//!     }
//! }
//! # Ok::<(), driftwatch::Error>(())
//! ```

pub mod args;
pub mod bounds;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod power;
pub mod rates;
pub mod rng;
pub mod stream;

pub use error::{Error, Result};
