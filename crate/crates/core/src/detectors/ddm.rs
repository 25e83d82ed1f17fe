//! Error-rate baselines: DDM on the overall error rate and DDM-OCI on the
//! decayed true positive rate.

use serde::{Deserialize, Serialize};

use super::{Detector, Method, RateSnapshot, StepOutcome, WarnClock};
use crate::error::{Error, Result};
use crate::rates::{Label, RateSet};

/// Neither baseline signals before this many observations since reset
/// (positives only, for DDM-OCI).
pub const DDM_MIN_OBSERVATIONS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdmParams {
    pub warn_mult: f64,
    pub detect_mult: f64,
    /// Decay for DDM-OCI's recall statistic; unused by DDM.
    pub eta: f64,
}

impl DdmParams {
    pub fn new(warn_mult: f64, detect_mult: f64, eta: f64) -> Result<Self> {
        let p = Self {
            warn_mult,
            detect_mult,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warn_mult > 0.0 && self.detect_mult > self.warn_mult && self.detect_mult.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "need 0 < warn_mult < detect_mult, got {} and {}",
                self.warn_mult, self.detect_mult
            )));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::InvalidParam(format!("eta {} outside [0, 1)", self.eta)));
        }
        Ok(())
    }
}

/// Drift Detection Method: running error rate `p`, its binomial standard
/// deviation `s`, and the point where `p + s` was smallest.
#[derive(Debug, Clone)]
pub struct Ddm {
    params: DdmParams,
    n: u64,
    errors: u64,
    p_min: f64,
    s_min: f64,
    clock: WarnClock,
    t: u64,
}

impl Ddm {
    pub fn new(params: DdmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            n: 0,
            errors: 0,
            p_min: f64::INFINITY,
            s_min: f64::INFINITY,
            clock: WarnClock::default(),
            t: 0,
        })
    }

    pub fn error_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.errors as f64 / self.n as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let p = self.error_rate();
        (p * (1.0 - p) / self.n as f64).sqrt()
    }

    /// `p_min + s_min`, infinite until the warm-up is over.
    pub fn best_level(&self) -> f64 {
        self.p_min + self.s_min
    }
}

impl Detector for Ddm {
    fn method(&self) -> Method {
        Method::Ddm
    }

    fn step(&mut self, y: Label, yhat: Label) -> StepOutcome {
        self.t += 1;
        self.n += 1;
        if y != yhat {
            self.errors += 1;
        }
        if self.n < DDM_MIN_OBSERVATIONS {
            return self.clock.resolve(self.t, RateSet::EMPTY, RateSet::EMPTY, false, false);
        }
        let p = self.error_rate();
        let s = self.std_dev();
        if p + s <= self.p_min + self.s_min {
            self.p_min = p;
            self.s_min = s;
        }
        let level = p + s;
        let detect = self.n > DDM_MIN_OBSERVATIONS && level > self.p_min + self.params.detect_mult * self.s_min;
        let warn = detect || level > self.p_min + self.params.warn_mult * self.s_min;
        let out = self.clock.resolve(self.t, RateSet::EMPTY, RateSet::EMPTY, warn, detect);
        if out.is_drift() {
            self.reset();
        }
        out
    }

    fn reset(&mut self) {
        self.n = 0;
        self.errors = 0;
        self.p_min = f64::INFINITY;
        self.s_min = f64::INFINITY;
        self.clock.clear();
    }

    fn time(&self) -> u64 {
        self.t
    }
}

/// DDM for online class imbalance: DDM's rule mirrored onto the decayed
/// recall `R_tpr` (higher is better). With `s = sqrt(R (1 - R) / n_pos)` it
/// records `(R, s)` where `R + s` peaked and signals when
/// `R + s < R_best - mult * s_best`.
#[derive(Debug, Clone)]
pub struct DdmOci {
    params: DdmParams,
    r: f64,
    n_pos: u64,
    r_max: f64,
    s_max: f64,
    clock: WarnClock,
    t: u64,
    last: RateSnapshot,
}

impl DdmOci {
    pub fn new(params: DdmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            r: 0.5,
            n_pos: 0,
            r_max: f64::NEG_INFINITY,
            s_max: 0.0,
            clock: WarnClock::default(),
            t: 0,
            last: RateSnapshot::default(),
        })
    }

    pub fn recall(&self) -> f64 {
        self.r
    }

    pub fn std_dev(&self) -> f64 {
        if self.n_pos == 0 {
            return 0.0;
        }
        (self.r * (1.0 - self.r) / self.n_pos as f64).sqrt()
    }
}

impl Detector for DdmOci {
    fn method(&self) -> Method {
        Method::DdmOci
    }

    fn step(&mut self, y: Label, yhat: Label) -> StepOutcome {
        self.t += 1;
        if y.is_one() {
            self.n_pos += 1;
            let hit = if yhat.is_one() { 1.0 } else { 0.0 };
            self.r = self.params.eta * self.r + (1.0 - self.params.eta) * hit;
        }
        self.last.statistic[0] = self.r;
        if self.n_pos < DDM_MIN_OBSERVATIONS {
            return self.clock.resolve(self.t, RateSet::EMPTY, RateSet::EMPTY, false, false);
        }
        let s = self.std_dev();
        let level = self.r + s;
        if level >= self.r_max + self.s_max {
            self.r_max = self.r;
            self.s_max = s;
        }
        let detect = self.n_pos > DDM_MIN_OBSERVATIONS && level < self.r_max - self.params.detect_mult * self.s_max;
        let warn = detect || level < self.r_max - self.params.warn_mult * self.s_max;
        let out = self.clock.resolve(self.t, RateSet::EMPTY, RateSet::EMPTY, warn, detect);
        if out.is_drift() {
            self.reset();
        }
        out
    }

    fn reset(&mut self) {
        self.r = 0.5;
        self.n_pos = 0;
        self.r_max = f64::NEG_INFINITY;
        self.s_max = 0.0;
        self.clock.clear();
    }

    fn time(&self) -> u64 {
        self.t
    }

    fn snapshot(&self) -> Option<RateSnapshot> {
        Some(self.last)
    }
}
