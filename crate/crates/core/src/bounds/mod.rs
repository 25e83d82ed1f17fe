//! Null distribution of the decayed rate statistic and its quantile bounds.
//!
//! Under a stable concept the decayed statistic after `n` updates is
//!
//! ```text
//! R = eta^n * start + (1 - eta) * sum_{i=1..n} eta^(n-i) * I_i,   I_i ~ Bernoulli(p)
//! ```
//!
//! With `start = 0` this is the plain geometrically weighted Bernoulli sum.
//! There is no closed form for general `p`, so bounds come from Monte-Carlo
//! draws and are cached in a [`BoundTable`].

mod codec;
mod table;

pub use codec::{decode_table, encode_table, read_table, write_table, FORMAT_VERSION, MAGIC};
pub use table::{BoundTable, GridSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{bernoulli_draw, bernoulli_threshold, SimRng};

/// Fewer draws than this give quantiles too noisy to use.
pub const MIN_MC_SAMPLES: u64 = 1000;

/// Default number of draws per cell.
pub const DEFAULT_MC_SAMPLES: u64 = 200_000;

/// Each tail must hold at least this many draws; below it the sample count
/// is raised automatically.
pub const MIN_TAIL_DRAWS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomSumParams {
    /// Bernoulli success probability.
    pub p_hat: f64,
    /// Decay factor in `[0, 1)`.
    pub eta: f64,
    /// Number of Bernoulli terms.
    pub n: u32,
    /// Value of the statistic before the first term. Zero gives the plain sum.
    pub start: f64,
}

impl GeomSumParams {
    pub fn new(p_hat: f64, eta: f64, n: u32) -> Result<Self> {
        let params = Self {
            p_hat,
            eta,
            n,
            start: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_start(mut self, start: f64) -> Result<Self> {
        self.start = start;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_hat) {
            return Err(Error::InvalidParam(format!("p_hat {} outside [0, 1]", self.p_hat)));
        }
        validate_eta(self.eta)?;
        if !(0.0..=1.0).contains(&self.start) {
            return Err(Error::InvalidParam(format!("start {} outside [0, 1]", self.start)));
        }
        Ok(())
    }
}

pub(crate) fn validate_eta(eta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParam(format!("eta {eta} outside [0, 1)")));
    }
    Ok(())
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParam(format!(
            "significance level {alpha} outside (0, 0.5)"
        )));
    }
    Ok(())
}

/// Lower and upper quantile of the null distribution at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileBounds {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

impl QuantileBounds {
    /// Strictly outside `[lower, upper]`.
    pub fn excludes(&self, value: f64) -> bool {
        value < self.lower || value > self.upper
    }
}

/// One draw of the decayed statistic, by iterating `R <- eta R + (1-eta) I`.
pub fn simulate_geometric_sum(params: &GeomSumParams, rng: &mut SimRng) -> f64 {
    let th = bernoulli_threshold(params.p_hat);
    let gain = 1.0 - params.eta;
    let mut r = params.start;
    for _ in 0..params.n {
        let hit = bernoulli_draw(rng, th);
        r = params.eta * r + if hit { gain } else { 0.0 };
    }
    r
}

/// Samples needed so both tails at `alpha` hold [`MIN_TAIL_DRAWS`] draws.
pub fn required_samples(alpha: f64, requested: u64) -> u64 {
    let needed = (MIN_TAIL_DRAWS / alpha).ceil() as u64;
    requested.max(needed)
}

/// 1-based order-statistic index `ceil(q * m)`, clamped to `[1, m]`.
///
/// Products that land within rounding noise of an integer are treated as
/// that integer, so `0.01 * 200_000` picks index 2000 rather than 2001.
pub fn order_statistic_index(q: f64, m: u64) -> u64 {
    let x = q * m as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (k as u64).clamp(1, m.max(1))
}

/// Monte-Carlo lower/upper quantiles of the decayed statistic.
pub fn estimate_bounds(
    params: &GeomSumParams,
    alpha: f64,
    mc_samples: u64,
    rng: &mut SimRng,
) -> Result<QuantileBounds> {
    params.validate()?;
    validate_alpha(alpha)?;
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidParam(format!(
            "mc_samples {mc_samples} below the minimum of {MIN_MC_SAMPLES}"
        )));
    }
    let m = required_samples(alpha, mc_samples);
    if m > mc_samples {
        log::warn!(
            "alpha {alpha} with {mc_samples} draws leaves fewer than {MIN_TAIL_DRAWS} draws per tail; \
             escalating to {m}"
        );
    }
    let mut draws: Vec<f64> = (0..m).map(|_| simulate_geometric_sum(params, rng)).collect();
    let lo_idx = order_statistic_index(alpha, m) as usize - 1;
    let hi_idx = order_statistic_index(1.0 - alpha, m) as usize - 1;
    let lower = *draws.select_nth_unstable_by(lo_idx, f64::total_cmp).1;
    let upper = *draws.select_nth_unstable_by(hi_idx, f64::total_cmp).1;
    Ok(QuantileBounds { lower, upper, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn degenerate_zero_rate() {
        let mut rng = rng_from_seed(1);
        for &eta in &[0.0, 0.5, 0.9, 0.99] {
            let p = GeomSumParams::new(0.0, eta, 50).unwrap();
            assert_eq!(simulate_geometric_sum(&p, &mut rng), 0.0);
        }
    }

    #[test]
    fn all_ones_is_one_minus_eta_pow_n() {
        let mut rng = rng_from_seed(1);
        let p = GeomSumParams::new(1.0, 0.9, 3).unwrap();
        let r = simulate_geometric_sum(&p, &mut rng);
        assert!((r - 0.271).abs() < 1e-12, "{r}");
        let long = GeomSumParams::new(1.0, 0.9, 2000).unwrap();
        assert!((simulate_geometric_sum(&long, &mut rng) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn start_term_decays() {
        let mut rng = rng_from_seed(1);
        let p = GeomSumParams::new(0.0, 0.9, 2).unwrap().with_start(0.5).unwrap();
        assert!((simulate_geometric_sum(&p, &mut rng) - 0.405).abs() < 1e-15);
    }

    #[test]
    fn invalid_params() {
        assert!(GeomSumParams::new(1.5, 0.9, 3).is_err());
        assert!(GeomSumParams::new(0.5, 1.0, 3).is_err());
        let p = GeomSumParams::new(0.5, 0.9, 10).unwrap();
        let mut rng = rng_from_seed(1);
        assert!(estimate_bounds(&p, 0.0, 10_000, &mut rng).is_err());
        assert!(estimate_bounds(&p, 0.5, 10_000, &mut rng).is_err());
        assert!(estimate_bounds(&p, 0.01, 999, &mut rng).is_err());
    }

    #[test]
    fn order_index_convention() {
        assert_eq!(order_statistic_index(0.01, 200_000), 2000);
        assert_eq!(order_statistic_index(0.99, 200_000), 198_000);
        assert_eq!(order_statistic_index(1e-5, 1_000_000), 10);
        assert_eq!(order_statistic_index(0.001, 1500), 2);
        assert_eq!(order_statistic_index(1e-9, 1000), 1);
    }

    #[test]
    fn escalation() {
        assert_eq!(required_samples(1e-5, 200_000), 1_000_000);
        assert_eq!(required_samples(0.01, 200_000), 200_000);
    }

    #[test]
    fn degenerate_bounds() {
        let p = GeomSumParams::new(0.0, 0.9, 100).unwrap();
        let mut rng = rng_from_seed(5);
        let b = estimate_bounds(&p, 0.01, 10_000, &mut rng).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn mean_matches_expectation() {
        let p = GeomSumParams::new(0.3, 0.9, 40).unwrap();
        let mut rng = rng_from_seed(11);
        let m = 100_000;
        let draws: Vec<f64> = (0..m).map(|_| simulate_geometric_sum(&p, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let expect = 0.3 * (1.0 - 0.9f64.powi(40));
        assert!((mean - expect).abs() < 5.0 * (var / m as f64).sqrt());
    }

    #[test]
    fn seeded_determinism() {
        let p = GeomSumParams::new(0.6, 0.9, 64).unwrap();
        let a = estimate_bounds(&p, 0.01, 5000, &mut rng_from_seed(9)).unwrap();
        let b = estimate_bounds(&p, 0.01, 5000, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn recurrence_matches_closed_form(
            bits in proptest::collection::vec(any::<bool>(), 1..600),
            eta in prop_oneof![Just(0.5), Just(0.9), Just(0.99), 0.0f64..0.999],
        ) {
            let mut r = 0.0f64;
            for &b in &bits {
                r = eta * r + (1.0 - eta) * if b { 1.0 } else { 0.0 };
            }
            let n = bits.len();
            let closed: f64 = (1.0 - eta)
                * bits.iter().enumerate()
                    .map(|(i, &b)| if b { eta.powi((n - 1 - i) as i32) } else { 0.0 })
                    .sum::<f64>();
            prop_assert!((r - closed).abs() < 1e-12);
        }

        #[test]
        fn draws_within_support(p in 0.0f64..=1.0, eta in 0.0f64..0.999, n in 1u32..300, seed in any::<u64>()) {
            let params = GeomSumParams::new(p, eta, n).unwrap();
            let mut rng = rng_from_seed(seed);
            let r = simulate_geometric_sum(&params, &mut rng);
            prop_assert!(r >= 0.0);
            prop_assert!(r <= 1.0 - eta.powi(n as i32) + 1e-12);
        }
    }
}
