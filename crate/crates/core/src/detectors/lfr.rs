use std::sync::Arc;

use super::{Detector, DetectorParams, Method, RateSnapshot, StepOutcome, WarnClock};
use crate::bounds::BoundTable;
use crate::error::{Error, Result};
use crate::rates::{empirical_rate, influenced_rates, rate_denominator, ConfusionCounts, Label, RateKind, RateSet};

/// Initial value of every decayed rate and of every empirical rate.
pub const INITIAL_RATE: f64 = 0.5;

/// Linear Four Rates detector.
///
/// Each rate keeps a decayed statistic `R <- eta R + (1 - eta) 1{y = yhat}`,
/// updated only on the steps that influence that rate. `R` is tested
/// against Monte-Carlo quantile bounds of its own null distribution, looked
/// up at the current empirical rate and the number of updates since reset.
/// Leaving the bounds on either side counts as a crossing.
#[derive(Debug, Clone)]
pub struct Lfr {
    params: DetectorParams,
    table: Arc<BoundTable>,
    warn_alpha: [usize; 4],
    detect_alpha: [usize; 4],
    r: [f64; 4],
    counts: ConfusionCounts,
    clock: WarnClock,
    t: u64,
    last: RateSnapshot,
}

impl Lfr {
    /// The table must be built for this detector's decay factor with
    /// `start = 0.5`, and carry every warn and detect level.
    pub fn new(params: DetectorParams, table: Arc<BoundTable>) -> Result<Self> {
        params.validate()?;
        for k in RateKind::ALL {
            let eta = params.eta[k.index()];
            if eta != table.eta() {
                return Err(Error::InvalidParam(format!(
                    "{k} decay {eta} differs from the bound table's {}",
                    table.eta()
                )));
            }
        }
        if table.start() != INITIAL_RATE {
            return Err(Error::InvalidParam(format!(
                "bound table was built with start {}, LFR needs {INITIAL_RATE}",
                table.start()
            )));
        }
        let mut warn_alpha = [0; 4];
        let mut detect_alpha = [0; 4];
        for i in 0..4 {
            warn_alpha[i] = table.alpha_index(params.delta[i])?;
            detect_alpha[i] = table.alpha_index(params.epsilon[i])?;
        }
        let mut lfr = Self {
            params,
            table,
            warn_alpha,
            detect_alpha,
            r: [INITIAL_RATE; 4],
            counts: ConfusionCounts::new(),
            clock: WarnClock::default(),
            t: 0,
            last: RateSnapshot::default(),
        };
        lfr.reset();
        Ok(lfr)
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn rates(&self) -> [f64; 4] {
        self.r
    }

    pub fn counts(&self) -> &ConfusionCounts {
        &self.counts
    }

    pub fn warn_time(&self) -> Option<u64> {
        self.clock.warn_time()
    }
}

impl Detector for Lfr {
    fn method(&self) -> Method {
        Method::Lfr
    }

    fn step(&mut self, y: Label, yhat: Label) -> StepOutcome {
        self.t += 1;
        self.counts.record(y, yhat);
        let hit = if y == yhat { 1.0 } else { 0.0 };
        for k in influenced_rates(y, yhat) {
            let i = k.index();
            let eta = self.params.eta[i];
            self.r[i] = eta * self.r[i] + (1.0 - eta) * hit;
        }

        let mut warned = RateSet::EMPTY;
        let mut detected = RateSet::EMPTY;
        for k in RateKind::ALL {
            let i = k.index();
            let p_hat = empirical_rate(&self.counts, k);
            // updates since reset; the two seed counts are not updates
            let updates = rate_denominator(&self.counts, k) - 2;
            let pi = self.table.p_index(p_hat);
            let ni = self.table.n_index(updates);
            self.last.statistic[i] = self.r[i];
            self.last.p_hat[i] = p_hat;
            if self.table.cell(self.warn_alpha[i], ni, pi).excludes(self.r[i]) {
                warned.insert(k);
            }
            if self.table.cell(self.detect_alpha[i], ni, pi).excludes(self.r[i]) {
                detected.insert(k);
            }
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
        self.r = [INITIAL_RATE; 4];
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::GridSpec;
    use crate::detectors::Status;
    use crate::rates::ConfusionProbMatrix;
    use crate::rng::rng_from_seed;
    use crate::stream::sample_pair;

    fn table() -> Arc<BoundTable> {
        let mut grid = GridSpec::standard(&[1e-3, 1e-2]);
        grid.p_hat = (0..=20).map(|i| i as f64 / 20.0).collect();
        Arc::new(BoundTable::build(&grid, 0.9, 0.5, 2000, 5).unwrap())
    }

    #[test]
    fn first_update() {
        let params = DetectorParams::uniform(0.9, 1e-2, 1e-3).unwrap();
        let mut lfr = Lfr::new(params, table()).unwrap();
        let out = lfr.step(Label::One, Label::One);
        assert!((lfr.rates()[RateKind::Tpr.index()] - 0.55).abs() < 1e-15);
        assert!((lfr.rates()[RateKind::Ppv.index()] - 0.55).abs() < 1e-15);
        assert_eq!(lfr.rates()[RateKind::Tnr.index()], 0.5);
        assert_eq!(lfr.rates()[RateKind::Npv.index()], 0.5);
        assert_eq!(out.status, Status::Stable);
    }

    #[test]
    fn rejects_mismatched_table() {
        let t = table();
        assert!(Lfr::new(DetectorParams::uniform(0.8, 1e-2, 1e-3).unwrap(), t.clone()).is_err());
        assert!(matches!(
            Lfr::new(DetectorParams::uniform(0.9, 2e-2, 1e-3).unwrap(), t),
            Err(Error::AlphaNotInTable { .. })
        ));
    }

    #[test]
    fn two_rates_move_per_step() {
        let params = DetectorParams::uniform(0.9, 1e-2, 1e-3).unwrap();
        let mut lfr = Lfr::new(params, table()).unwrap();
        let cp = ConfusionProbMatrix::new([[0.4, 0.1], [0.1, 0.4]]).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..2000 {
            let before = lfr.rates();
            let (y, yhat) = sample_pair(&cp, &mut rng);
            let out = lfr.step(y, yhat);
            if out.is_drift() {
                assert_eq!(lfr.rates(), [INITIAL_RATE; 4]);
                continue;
            }
            let inf: RateSet = influenced_rates(y, yhat).into_iter().collect();
            for k in RateKind::ALL {
                let same = lfr.rates()[k.index()].to_bits() == before[k.index()].to_bits();
                if !inf.contains(k) {
                    assert!(same);
                }
            }
        }
    }

    #[test]
    fn reset_restores_initial_state() {
        let params = DetectorParams::uniform(0.9, 1e-2, 1e-3).unwrap();
        let mut lfr = Lfr::new(params, table()).unwrap();
        for _ in 0..50 {
            lfr.step(Label::Zero, Label::One);
        }
        lfr.reset();
        assert_eq!(lfr.rates(), [INITIAL_RATE; 4]);
        for k in RateKind::ALL {
            assert_eq!(lfr.counts().rate(k), 0.5);
        }
        assert_eq!(lfr.time(), 50);
    }

    #[test]
    fn all_wrong_stream_drifts() {
        let params = DetectorParams::uniform(0.9, 1e-2, 1e-3).unwrap();
        let mut lfr = Lfr::new(params, table()).unwrap();
        let cp_good = ConfusionProbMatrix::new([[0.45, 0.05], [0.05, 0.45]]).unwrap();
        let mut rng = rng_from_seed(8);
        for _ in 0..400 {
            let (y, yhat) = sample_pair(&cp_good, &mut rng);
            lfr.step(y, yhat);
        }
        let mut drift = None;
        for _ in 0..200 {
            let out = lfr.step(Label::One, Label::Zero);
            if out.is_drift() {
                drift = Some(out);
                break;
            }
        }
        let d = drift.expect("a run of misses must trip the detector");
        let (w, t) = d.warn_window.unwrap();
        assert!(w <= t && t > 400);
        assert_eq!(lfr.counts(), &ConfusionCounts::new());
    }
}
