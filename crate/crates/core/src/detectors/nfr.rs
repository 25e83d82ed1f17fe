use statrs::distribution::{ContinuousCDF, Normal};

use super::{Detector, DetectorParams, Method, RateSnapshot, StepOutcome, WarnClock};
use crate::error::Result;
use crate::rates::{empirical_rate, influenced_rates, rate_denominator, ConfusionCounts, Label, RateKind, RateSet};

/// Upper `1 - alpha` standard normal quantile.
pub(crate) fn upper_z(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha)
}

/// Two-sided acceptance band `center +- z_{1-alpha} * sqrt(c (1-c) / n)`,
/// where the center is first clamped into `[1/(n+2), 1 - 1/(n+2)]` so the
/// band never collapses to zero width.
pub fn normal_band(center: f64, n: u64, alpha: f64) -> (f64, f64) {
    band_with_z(center, n, upper_z(alpha))
}

fn band_with_z(center: f64, n: u64, z: f64) -> (f64, f64) {
    let floor = 1.0 / (n as f64 + 2.0);
    let c = center.clamp(floor, 1.0 - floor);
    let sd = (c * (1.0 - c) / n as f64).sqrt();
    (c - z * sd, c + z * sd)
}

/// Naive Four Rates detector: tests each empirical rate against a normal
/// null centred on the running mean of its own past values.
#[derive(Debug, Clone)]
pub struct Nfr {
    params: DetectorParams,
    z_warn: [f64; 4],
    z_detect: [f64; 4],
    p_bar: [f64; 4],
    folded: [u64; 4],
    counts: ConfusionCounts,
    clock: WarnClock,
    t: u64,
    last: RateSnapshot,
}

impl Nfr {
    pub fn new(params: DetectorParams) -> Result<Self> {
        params.validate()?;
        let z_warn = params.delta.map(upper_z);
        let z_detect = params.epsilon.map(upper_z);
        Ok(Self {
            params,
            z_warn,
            z_detect,
            p_bar: [0.5; 4],
            folded: [0; 4],
            counts: ConfusionCounts::new(),
            clock: WarnClock::default(),
            t: 0,
            last: RateSnapshot::default(),
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    /// Running means of past empirical rates.
    pub fn p_bar(&self) -> [f64; 4] {
        self.p_bar
    }

    pub fn counts(&self) -> &ConfusionCounts {
        &self.counts
    }
}

impl Detector for Nfr {
    fn method(&self) -> Method {
        Method::Nfr
    }

    fn step(&mut self, y: Label, yhat: Label) -> StepOutcome {
        self.t += 1;
        self.counts.record(y, yhat);
        let influenced: RateSet = influenced_rates(y, yhat).into_iter().collect();

        let mut warned = RateSet::EMPTY;
        let mut detected = RateSet::EMPTY;
        let mut p_hats = [0.0; 4];
        for k in RateKind::ALL {
            let i = k.index();
            let p_hat = empirical_rate(&self.counts, k);
            let n = rate_denominator(&self.counts, k);
            p_hats[i] = p_hat;
            self.last.statistic[i] = self.p_bar[i];
            self.last.p_hat[i] = p_hat;
            let (lo, hi) = band_with_z(self.p_bar[i], n, self.z_warn[i]);
            if p_hat < lo || p_hat > hi {
                warned.insert(k);
            }
            let (lo, hi) = band_with_z(self.p_bar[i], n, self.z_detect[i]);
            if p_hat < lo || p_hat > hi {
                detected.insert(k);
            }
        }
        // fold after testing: the null never includes the point under test
        for k in influenced.iter() {
            let i = k.index();
            self.folded[i] += 1;
            self.p_bar[i] += (p_hats[i] - self.p_bar[i]) / self.folded[i] as f64;
        }

        let out = self
            .clock
            .resolve(self.t, warned, detected, !warned.is_empty(), !detected.is_empty());
        if out.is_drift() {
            self.reset();
        }
        out
    }

    fn reset(&mut self) {
        self.p_bar = [0.5; 4];
        self.folded = [0; 4];
        self.counts = ConfusionCounts::new();
        self.clock.clear();
    }

    fn time(&self) -> u64 {
        self.t
    }

    fn snapshot(&self) -> Option<RateSnapshot> {
        Some(self.last)
    }
}
