//! Helpers shared by the integration test binaries.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use driftwatch::bounds::{read_table, write_table, BoundTable, GridSpec, DEFAULT_MC_SAMPLES, FORMAT_VERSION};

/// Seed for every cached full-size table.
pub const TABLE_SEED: u64 = 20_240_611;

/// Path of the cached standard-grid table for these parameters.
pub fn table_path(eta: f64, alphas: &[f64], mc: u64) -> PathBuf {
    let tag: Vec<String> = alphas.iter().map(|a| format!("{a:e}")).collect();
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!(
        "table-v{}-{}-eta{eta}-a{}-mc{mc}-s{TABLE_SEED}.dwbt",
        env!("CARGO_PKG_VERSION"),
        FORMAT_VERSION,
        tag.join("_")
    ))
}

/// Standard-grid table at `start = 0.5`, built once and cached on disk.
/// Building is deterministic, so the cache only saves time.
pub fn standard_table(eta: f64, alphas: &[f64], mc: u64) -> Arc<BoundTable> {
    let path = table_path(eta, alphas, mc);
    let grid = GridSpec::standard(alphas);
    if let Ok(t) = read_table(&path) {
        if t.grid() == &grid && t.eta() == eta && t.mc_samples() == mc && t.seed() == TABLE_SEED {
            return Arc::new(t);
        }
    }
    eprintln!("building bound table {} (one-off)", path.display());
    let t = BoundTable::build(&grid, eta, 0.5, mc, TABLE_SEED).expect("table build");
    let tmp = path.with_extension("tmp");
    write_table(&t, &tmp).expect("write table");
    std::fs::rename(&tmp, &path).expect("rename table");
    Arc::new(t)
}

/// The table the synthetic preset needs: eta 0.9, levels 1e-5 and 1e-2.
pub fn synthetic_table() -> Arc<BoundTable> {
    standard_table(0.9, &[1e-5, 1e-2], DEFAULT_MC_SAMPLES)
}

/// Small coarse table for tests that only need the detector to run.
pub fn quick_table(eta: f64, alphas: &[f64]) -> Arc<BoundTable> {
    let mut grid = GridSpec::standard(alphas);
    grid.p_hat = (0..=20).map(|i| i as f64 / 20.0).collect();
    Arc::new(BoundTable::build(&grid, eta, 0.5, 1000, 11).expect("table build"))
}
