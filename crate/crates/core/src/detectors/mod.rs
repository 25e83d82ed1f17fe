//! Step-wise drift detectors sharing one interface: feed `(y, yhat)`, get
//! back [`Status::Stable`], [`Status::Warning`] or [`Status::Drift`].
//!
//! Every detector resets itself after a drift and keeps going; the time
//! index `t` counts stream positions and is never reset.

mod ddm;
mod lfr;
mod nfr;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ddm::{Ddm, DdmOci, DdmParams, DDM_MIN_OBSERVATIONS};
pub use lfr::Lfr;
pub use nfr::{normal_band, Nfr};
pub use trace::{write_trace, TraceRow, TRACE_HEADER};

use crate::error::{Error, Result};
use crate::rates::{Label, RateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Stable,
    Warning,
    Drift,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Stable => "stable",
            Status::Warning => "warning",
            Status::Drift => "drift",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of one detector step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub t: u64,
    pub status: Status,
    /// Rates whose statistic left its bound at this step: detect bounds on
    /// drift, warn bounds otherwise. Empty for DDM.
    pub triggered: RateSet,
    /// `(warn_time, detect_time)`, present only on drift.
    pub warn_window: Option<(u64, u64)>,
}

impl StepOutcome {
    pub fn is_drift(&self) -> bool {
        self.status == Status::Drift
    }
}

/// Per-step snapshot for trajectory dumps: the decayed (or reference)
/// statistic and the empirical rate, in `RateKind::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateSnapshot {
    pub statistic: [f64; 4],
    pub p_hat: [f64; 4],
}

pub trait Detector: Send {
    fn method(&self) -> Method;

    fn step(&mut self, y: Label, yhat: Label) -> StepOutcome;

    /// Back to the initial monitoring state. The time index is kept.
    fn reset(&mut self);

    /// Index of the last observed step (0 before any step).
    fn time(&self) -> u64;

    /// Rate statistics as they were at the end of the last step, before any
    /// drift reset.
    fn snapshot(&self) -> Option<RateSnapshot> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LFR")]
    Lfr,
    #[serde(rename = "NFR")]
    Nfr,
    #[serde(rename = "DDM")]
    Ddm,
    #[serde(rename = "DDM-OCI")]
    DdmOci,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lfr, Method::Nfr, Method::Ddm, Method::DdmOci];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lfr => "LFR",
            Method::Nfr => "NFR",
            Method::Ddm => "DDM",
            Method::DdmOci => "DDM-OCI",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LFR" => Ok(Method::Lfr),
            "NFR" => Ok(Method::Nfr),
            "DDM" => Ok(Method::Ddm),
            "DDM-OCI" | "DDMOCI" | "DDM_OCI" => Ok(Method::DdmOci),
            _ => Err(Error::InvalidParam(format!("unknown method `{s}`"))),
        }
    }
}

/// Per-rate parameters of the four-rate detectors, in `RateKind::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub eta: [f64; 4],
    /// Warn significance per rate.
    pub delta: [f64; 4],
    /// Detect significance per rate.
    pub epsilon: [f64; 4],
}

impl DetectorParams {
    /// Same `(eta, delta, epsilon)` for all four rates.
    pub fn uniform(eta: f64, delta: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            eta: [eta; 4],
            delta: [delta; 4],
            epsilon: [epsilon; 4],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            let (eta, delta, eps) = (self.eta[i], self.delta[i], self.epsilon[i]);
            if !(0.0..1.0).contains(&eta) {
                return Err(Error::InvalidParam(format!("eta {eta} outside [0, 1)")));
            }
            if !(eps > 0.0 && eps < delta && delta < 0.5) {
                return Err(Error::InvalidParam(format!(
                    "need 0 < epsilon < delta < 0.5, got epsilon={eps} delta={delta}"
                )));
            }
        }
        Ok(())
    }
}

/// Warn-window bookkeeping shared by every detector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct WarnClock {
    warn_time: Option<u64>,
}

impl WarnClock {
    /// Apply one step's verdicts and build the outcome.
    pub(crate) fn resolve(
        &mut self,
        t: u64,
        warned: RateSet,
        detected: RateSet,
        warn_hit: bool,
        detect_hit: bool,
    ) -> StepOutcome {
        if warn_hit {
            self.warn_time.get_or_insert(t);
        } else {
            self.warn_time = None;
        }
        if detect_hit {
            let start = self.warn_time.take().unwrap_or(t);
            StepOutcome {
                t,
                status: Status::Drift,
                triggered: detected,
                warn_window: Some((start, t)),
            }
        } else {
            StepOutcome {
                t,
                status: if warn_hit { Status::Warning } else { Status::Stable },
                triggered: warned,
                warn_window: None,
            }
        }
    }

    pub(crate) fn clear(&mut self) {
        self.warn_time = None;
    }

    pub(crate) fn warn_time(&self) -> Option<u64> {
        self.warn_time
    }
}

/// Runs a detector over items carrying `(y, yhat)`, buffering items since
/// the current warning and handing the warn-to-detect slice to a relearn
/// hook on every drift.
pub struct DriftMonitor<D, T> {
    detector: D,
    buffer: Vec<(u64, T)>,
}

impl<D: Detector, T> DriftMonitor<D, T> {
    pub fn new(detector: D) -> Self {
        Self {
            detector,
            buffer: Vec::new(),
        }
    }

    pub fn detector(&self) -> &D {
        &self.detector
    }

    pub fn observe<F>(&mut self, y: Label, yhat: Label, item: T, mut relearn: F) -> StepOutcome
    where
        F: FnMut(&[(u64, T)]),
    {
        let out = self.detector.step(y, yhat);
        match out.status {
            Status::Stable => self.buffer.clear(),
            Status::Warning => self.buffer.push((out.t, item)),
            Status::Drift => {
                self.buffer.push((out.t, item));
                let (start, _) = out.warn_window.expect("drift carries a window");
                let from = self.buffer.partition_point(|(t, _)| *t < start);
                relearn(&self.buffer[from..]);
                self.buffer.clear();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateKind;

    #[test]
    fn params_validation() {
        assert!(DetectorParams::uniform(0.9, 0.01, 1e-5).is_ok());
        assert!(DetectorParams::uniform(0.9, 1e-5, 0.01).is_err());
        assert!(DetectorParams::uniform(1.0, 0.01, 1e-5).is_err());
        assert!(DetectorParams::uniform(0.9, 0.5, 1e-5).is_err());
        assert!(DetectorParams::uniform(0.9, 0.01, 0.0).is_err());
    }

    #[test]
    fn warn_clock_paths() {
        let mut c = WarnClock::default();
        let none = RateSet::EMPTY;
        let some: RateSet = [RateKind::Tnr].into_iter().collect();
        assert_eq!(c.resolve(1, none, none, false, false).status, Status::Stable);
        assert_eq!(c.resolve(2, some, none, true, false).status, Status::Warning);
        assert_eq!(c.warn_time(), Some(2));
        c.resolve(3, some, none, true, false);
        assert_eq!(c.warn_time(), Some(2));
        let d = c.resolve(4, some, some, true, true);
        assert_eq!(d.warn_window, Some((2, 4)));
        assert_eq!(c.warn_time(), None);
        // warning erased when the statistic returns inside the bounds
        c.resolve(5, some, none, true, false);
        c.resolve(6, none, none, false, false);
        assert_eq!(c.warn_time(), None);
        // drift without a prior warning
        let d = c.resolve(7, none, some, false, true);
        assert_eq!(d.warn_window, Some((7, 7)));
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("EDDM".parse::<Method>().is_err());
    }
}
