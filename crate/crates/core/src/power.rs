//! Monte-Carlo power of the decayed statistic `R` against the cumulative
//! empirical rate `P̂` after the underlying rate shifts from `p` to `q`.
//!
//! Each trial runs `m` Bernoulli(`p`) steps, then `k_max` Bernoulli(`q`)
//! steps, and checks both statistics at every lag `k` against two-sided
//! acceptance bounds fixed at `t = m` under rate `p`. The significance level
//! is split evenly over the two tails so the test has size `alpha`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_bounds, GeomSumParams, QuantileBounds, DEFAULT_MC_SAMPLES};
use crate::detectors::normal_band;
use crate::error::{Error, Result};
use crate::rng::{bernoulli_draw, bernoulli_threshold, child_rng};

/// Starting value of `R`, matching the detectors.
const R_START: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    /// Burn-in length under the null rate.
    pub m: u32,
    /// Largest lag after the shift.
    pub k_max: u32,
    pub p: f64,
    pub q_list: Vec<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub trials: u64,
    /// Draws for the Monte-Carlo bounds of `R` at `t = m`.
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            k_max: 200,
            p: 0.9,
            q_list: (1..=8).map(|i| i as f64 / 10.0).collect(),
            eta: 0.9,
            alpha: 0.01,
            trials: 10_000,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k_max == 0 {
            return Err(Error::InvalidParam("m and k_max must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParam("trials must be >= 1".into()));
        }
        if self.q_list.is_empty() {
            return Err(Error::InvalidParam("q list is empty".into()));
        }
        for &r in std::iter::once(&self.p).chain(&self.q_list) {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParam(format!("rate {r} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::InvalidParam(format!("eta {} outside [0, 1)", self.eta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    R,
    PHat,
}

/// Power estimates indexed `[q][k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerGrid {
    pub p: f64,
    pub q: Vec<f64>,
    pub k_max: u32,
    pub beta_r: Vec<Vec<f64>>,
    pub beta_p: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    /// Mean of `R` at each lag, over trials.
    pub mean_r: Vec<Vec<f64>>,
    pub r_bounds: QuantileBounds,
    pub p_bounds: (f64, f64),
}

impl PowerGrid {
    pub fn q_index(&self, q: f64) -> Option<usize> {
        self.q.iter().position(|&x| (x - q).abs() < 1e-9)
    }

    pub fn beta(&self, statistic: Statistic, qi: usize, k: u32) -> f64 {
        let row = match statistic {
            Statistic::R => &self.beta_r[qi],
            Statistic::PHat => &self.beta_p[qi],
        };
        row[k as usize - 1]
    }

    pub fn delta_at(&self, qi: usize, k: u32) -> f64 {
        self.delta[qi][k as usize - 1]
    }
}

/// Acceptance bounds for both statistics at `t = m` under rate `p`.
pub fn null_bounds(config: &PowerConfig) -> Result<(QuantileBounds, (f64, f64))> {
    let params = GeomSumParams::new(config.p, config.eta, config.m)?.with_start(R_START)?;
    let mut rng = child_rng(config.seed, 0);
    let r = estimate_bounds(&params, config.alpha / 2.0, config.mc_samples, &mut rng)?;
    let p = normal_band(config.p, config.m as u64, config.alpha / 2.0);
    Ok((r, p))
}

/// Both power surfaces from the same trial paths, so `delta` has common
/// random numbers. One path per trial serves every lag.
pub fn power_grid(config: &PowerConfig) -> Result<PowerGrid> {
    config.validate()?;
    let (r_bounds, p_bounds) = null_bounds(config)?;
    let rows: Vec<[Vec<f64>; 3]> = config
        .q_list
        .par_iter()
        .enumerate()
        .map(|(qi, &q)| simulate_q(config, q, qi as u64 + 1, &r_bounds, p_bounds))
        .collect();

    let mut grid = PowerGrid {
        p: config.p,
        q: config.q_list.clone(),
        k_max: config.k_max,
        beta_r: Vec::with_capacity(rows.len()),
        beta_p: Vec::with_capacity(rows.len()),
        delta: Vec::with_capacity(rows.len()),
        mean_r: Vec::with_capacity(rows.len()),
        r_bounds,
        p_bounds,
    };
    for [br, bp, mr] in rows {
        grid.delta.push(br.iter().zip(&bp).map(|(a, b)| a - b).collect());
        grid.beta_r.push(br);
        grid.beta_p.push(bp);
        grid.mean_r.push(mr);
    }
    Ok(grid)
}

/// Power surface for one statistic, `[q][k - 1]`.
pub fn estimate_power(config: &PowerConfig, statistic: Statistic) -> Result<Vec<Vec<f64>>> {
    let grid = power_grid(config)?;
    Ok(match statistic {
        Statistic::R => grid.beta_r,
        Statistic::PHat => grid.beta_p,
    })
}

fn simulate_q(
    config: &PowerConfig,
    q: f64,
    stream: u64,
    r_bounds: &QuantileBounds,
    p_bounds: (f64, f64),
) -> [Vec<f64>; 3] {
    let mut rng = child_rng(config.seed, stream);
    let (th_p, th_q) = (bernoulli_threshold(config.p), bernoulli_threshold(q));
    let (eta, gain) = (config.eta, 1.0 - config.eta);
    let k_max = config.k_max as usize;
    let mut rej_r = vec![0u64; k_max];
    let mut rej_p = vec![0u64; k_max];
    let mut sum_r = vec![0.0; k_max];
    for _ in 0..config.trials {
        let mut r = R_START;
        let mut hits = 0u64;
        for _ in 0..config.m {
            let hit = bernoulli_draw(&mut rng, th_p);
            r = eta * r + if hit { gain } else { 0.0 };
            hits += hit as u64;
        }
        for k in 0..k_max {
            let hit = bernoulli_draw(&mut rng, th_q);
            r = eta * r + if hit { gain } else { 0.0 };
            hits += hit as u64;
            let p_hat = hits as f64 / (config.m as u64 + k as u64 + 1) as f64;
            rej_r[k] += r_bounds.excludes(r) as u64;
            rej_p[k] += (p_hat < p_bounds.0 || p_hat > p_bounds.1) as u64;
            sum_r[k] += r;
        }
    }
    let n = config.trials as f64;
    [
        rej_r.iter().map(|&c| c as f64 / n).collect(),
        rej_p.iter().map(|&c| c as f64 / n).collect(),
        sum_r.iter().map(|&s| s / n).collect(),
    ]
}

pub const POWER_CSV: &str = "power.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";

/// Long form, one row per `(p, k, q)`.
pub fn power_csv_bytes(grids: &[PowerGrid]) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "p,k,q,beta_r,beta_p,delta").unwrap();
    for g in grids {
        for k in 1..=g.k_max {
            for (qi, q) in g.q.iter().enumerate() {
                let i = k as usize - 1;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    g.p, k, q, g.beta_r[qi][i], g.beta_p[qi][i], g.delta[qi][i]
                )
                .unwrap();
            }
        }
    }
    out
}

/// One row per `(p, q)` at lag `k`.
pub fn heatmap_csv_bytes(grids: &[PowerGrid], k: u32) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "p,q,k,beta_r,beta_p,delta").unwrap();
    for g in grids {
        if k == 0 || k > g.k_max {
            return Err(Error::InvalidParam(format!("heatmap lag {k} outside 1..={}", g.k_max)));
        }
        for (qi, q) in g.q.iter().enumerate() {
            let i = k as usize - 1;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                g.p, q, k, g.beta_r[qi][i], g.beta_p[qi][i], g.delta[qi][i]
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Write `power.csv` and `heatmap.csv` (at lag `heatmap_k`) into `dir`.
pub fn emit_grids(dir: &Path, grids: &[PowerGrid], heatmap_k: u32) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let heat = heatmap_csv_bytes(grids, heatmap_k)?;
    let path = dir.join(POWER_CSV);
    std::fs::write(&path, power_csv_bytes(grids)).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(HEATMAP_CSV);
    std::fs::write(&path, heat).map_err(|e| Error::io(&path, e))
}
