use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{order_statistic_index, required_samples, validate_alpha, validate_eta, QuantileBounds, MIN_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::rng::{child_rng, SimRng};

/// Axis values of a bound table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_hat: Vec<f64>,
    pub n: Vec<u32>,
    pub alpha: Vec<f64>,
}

impl GridSpec {
    /// `p_hat` in steps of 0.01 over `[0, 1]`, every `n` up to 64 then a
    /// thinning ladder up to 2048, and the given significance levels.
    pub fn standard(alphas: &[f64]) -> Self {
        let p_hat = (0..=100).map(|i| i as f64 / 100.0).collect();
        let mut n: Vec<u32> = (0..=64).collect();
        n.extend((72..=128).step_by(8));
        n.extend([160, 192, 256, 384, 512, 1024, 2048]);
        let mut alpha = alphas.to_vec();
        alpha.sort_by(f64::total_cmp);
        alpha.dedup();
        Self { p_hat, n, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_hat.is_empty() || self.n.is_empty() || self.alpha.is_empty() {
            return Err(Error::InvalidParam("grid axes must be nonempty".into()));
        }
        if !strictly_ascending(&self.p_hat) || !strictly_ascending(&self.alpha) {
            return Err(Error::InvalidParam("grid axes must be sorted ascending".into()));
        }
        if !self.n.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParam("n axis must be sorted ascending".into()));
        }
        if self.p_hat.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParam("p_hat axis must lie in [0, 1]".into()));
        }
        self.alpha.iter().try_for_each(|a| validate_alpha(*a))
    }

    pub fn cell_count(&self) -> usize {
        self.p_hat.len() * self.n.len() * self.alpha.len()
    }
}

fn strictly_ascending(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

/// Precomputed quantile bounds over `(p_hat, n, alpha)` for one decay factor.
///
/// Cells are stored densely, alpha-major, then `n`, then `p_hat` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    pub(super) eta: f64,
    pub(super) start: f64,
    pub(super) mc_samples: u64,
    pub(super) cell_samples: u64,
    pub(super) seed: u64,
    pub(super) grid: GridSpec,
    pub(super) cells: Vec<[f64; 2]>,
}

/// Relative tolerance when matching a requested alpha against the axis.
const ALPHA_MATCH_TOL: f64 = 1e-9;

/// Past this many terms the geometric weights fall below `1e-13` and are dropped.
pub(crate) fn truncation_len(eta: f64, max_n: u32) -> u32 {
    if eta <= 0.0 {
        return max_n.min(1);
    }
    let k = (1e-13f64.ln() / eta.ln()).ceil();
    if k >= max_n as f64 {
        max_n
    } else {
        k as u32
    }
}

impl BoundTable {
    /// Monte-Carlo fill of every cell.
    ///
    /// Each `p_hat` row gets its own RNG stream derived from `(seed, row)`.
    /// Within a row a single draw path supplies every `n` at once: the terms
    /// are generated newest-first, so the statistic after `n` updates is a
    /// prefix sum of the same path. Each cell's marginal distribution is
    /// exact; cells along `n` share draws.
    pub fn build(grid: &GridSpec, eta: f64, start: f64, mc_samples: u64, seed: u64) -> Result<Self> {
        grid.validate()?;
        validate_eta(eta)?;
        if !(0.0..=1.0).contains(&start) {
            return Err(Error::InvalidParam(format!("start {start} outside [0, 1]")));
        }
        if mc_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidParam(format!(
                "mc_samples {mc_samples} below the minimum of {MIN_MC_SAMPLES}"
            )));
        }
        let min_alpha = grid.alpha[0];
        let cell_samples = required_samples(min_alpha, mc_samples);
        if cell_samples > mc_samples {
            log::warn!(
                "alpha {min_alpha} with {mc_samples} draws per cell leaves fewer than 10 draws per tail; \
                 escalating every cell to {cell_samples} draws"
            );
        }

        let rows: Vec<Vec<[f64; 2]>> = grid
            .p_hat
            .par_iter()
            .enumerate()
            .map(|(row, &p)| {
                let mut rng = child_rng(seed, row as u64);
                sample_row(p, eta, start, &grid.n, &grid.alpha, cell_samples, &mut rng)
            })
            .collect();

        let (n_p, n_n, n_a) = (grid.p_hat.len(), grid.n.len(), grid.alpha.len());
        let mut cells = vec![[0.0; 2]; grid.cell_count()];
        for (pi, row) in rows.iter().enumerate() {
            for ai in 0..n_a {
                for ni in 0..n_n {
                    cells[(ai * n_n + ni) * n_p + pi] = row[ai * n_n + ni];
                }
            }
        }
        let mut table = Self {
            eta,
            start,
            mc_samples,
            cell_samples,
            seed,
            grid: grid.clone(),
            cells,
        };
        table.enforce_monotone();
        Ok(table)
    }

    /// Pool-adjacent-violators along `p_hat` for every `(alpha, n)` slice,
    /// lower and upper independently.
    fn enforce_monotone(&mut self) {
        let n_p = self.grid.p_hat.len();
        let mut buf = vec![0.0; n_p];
        for slice in self.cells.chunks_mut(n_p) {
            for side in 0..2 {
                for (b, c) in buf.iter_mut().zip(slice.iter()) {
                    *b = c[side];
                }
                isotonic_nondecreasing(&mut buf);
                for (c, b) in slice.iter_mut().zip(buf.iter()) {
                    c[side] = *b;
                }
            }
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn mc_samples(&self) -> u64 {
        self.mc_samples
    }

    /// Draws actually used per cell, after tail escalation.
    pub fn cell_samples(&self) -> u64 {
        self.cell_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cells(&self) -> &[[f64; 2]] {
        &self.cells
    }

    pub fn alpha_index(&self, alpha: f64) -> Result<usize> {
        self.grid
            .alpha
            .iter()
            .position(|a| (a - alpha).abs() <= ALPHA_MATCH_TOL * alpha.abs())
            .ok_or(Error::AlphaNotInTable { alpha })
    }

    pub fn has_alpha(&self, alpha: f64) -> bool {
        self.alpha_index(alpha).is_ok()
    }

    /// Nearest `p_hat` grid index, ties toward the smaller value.
    pub fn p_index(&self, p_hat: f64) -> usize {
        nearest_index(&self.grid.p_hat, p_hat)
    }

    /// Nearest `n` grid index, ties toward the smaller value, saturating at
    /// the largest `n`.
    pub fn n_index(&self, n: u64) -> usize {
        let axis = &self.grid.n;
        let i = axis.partition_point(|&v| (v as u64) < n);
        if i == 0 {
            0
        } else if i == axis.len() {
            axis.len() - 1
        } else if n - axis[i - 1] as u64 <= axis[i] as u64 - n {
            i - 1
        } else {
            i
        }
    }

    /// Cell by axis indices.
    pub fn cell(&self, alpha_idx: usize, n_idx: usize, p_idx: usize) -> QuantileBounds {
        let n_p = self.grid.p_hat.len();
        let n_n = self.grid.n.len();
        let [lower, upper] = self.cells[(alpha_idx * n_n + n_idx) * n_p + p_idx];
        QuantileBounds {
            lower,
            upper,
            alpha: self.grid.alpha[alpha_idx],
        }
    }

    /// Bounds for the nearest stored `(p_hat, n)` at an exact `alpha`.
    pub fn lookup(&self, p_hat: f64, alpha: f64, n: u64) -> Result<QuantileBounds> {
        let ai = self.alpha_index(alpha)?;
        Ok(self.cell(ai, self.n_index(n), self.p_index(p_hat)))
    }

    /// Hex SHA-256 of the encoded table.
    pub fn fingerprint(&self) -> String {
        let bytes = super::encode_table(self);
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn nearest_index(axis: &[f64], x: f64) -> usize {
    let i = axis.partition_point(|&v| v < x);
    if i == 0 {
        0
    } else if i == axis.len() {
        axis.len() - 1
    } else if x - axis[i - 1] <= axis[i] - x {
        i - 1
    } else {
        i
    }
}

/// In-place L2 isotonic regression (pool adjacent violators), equal weights.
pub(crate) fn isotonic_nondecreasing(values: &mut [f64]) {
    // (sum, count) blocks
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 > s2 / c2 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s1 + s2, c1 + c2);
            } else {
                break;
            }
        }
    }
    let mut i = 0;
    for (s, c) in blocks {
        let mean = if c == 1 { s } else { s / c as f64 };
        for v in &mut values[i..i + c] {
            *v = mean;
        }
        i += c;
    }
}

/// Keeps the `k` smallest and `k` largest values pushed into it.
struct Tails {
    k: usize,
    low: Vec<f64>,
    low_cut: f64,
    high: Vec<f64>,
    high_cut: f64,
}

impl Tails {
    fn new(k: usize) -> Self {
        let k = k.max(1);
        Self {
            k,
            low: Vec::with_capacity(2 * k),
            low_cut: f64::INFINITY,
            high: Vec::with_capacity(2 * k),
            high_cut: f64::NEG_INFINITY,
        }
    }

    #[inline]
    fn push(&mut self, x: f64) {
        if x < self.low_cut {
            self.low.push(x);
            if self.low.len() >= 2 * self.k {
                self.low.select_nth_unstable_by(self.k - 1, f64::total_cmp);
                self.low.truncate(self.k);
                self.low_cut = self.low[self.k - 1];
            }
        }
        if x > self.high_cut {
            self.high.push(x);
            if self.high.len() >= 2 * self.k {
                self.high.select_nth_unstable_by(self.k - 1, |a, b| b.total_cmp(a));
                self.high.truncate(self.k);
                self.high_cut = self.high[self.k - 1];
            }
        }
    }

    /// `(ascending k smallest, descending k largest)`.
    fn finish(mut self) -> (Vec<f64>, Vec<f64>) {
        self.low.sort_by(f64::total_cmp);
        self.low.truncate(self.k);
        self.high.sort_by(|a, b| b.total_cmp(a));
        self.high.truncate(self.k);
        (self.low, self.high)
    }
}

/// 64 independent draws of `U < threshold` with `U` uniform on 32 bits,
/// one per bit lane. Lanes are compared most significant bit first and the
/// loop stops once every lane is decided, so a word costs about seven RNG
/// calls instead of 32.
#[inline]
fn bernoulli_word(rng: &mut SimRng, threshold: u32) -> u64 {
    use rand::RngCore;
    let mut success = 0u64;
    let mut undecided = !0u64;
    for j in (0..32).rev() {
        let r = rng.next_u64();
        if threshold >> j & 1 == 1 {
            success |= undecided & !r;
            undecided &= r;
        } else {
            undecided &= !r;
        }
        if undecided == 0 {
            break;
        }
    }
    success
}

/// Bounds for one `p_hat` row: returns cells indexed `alpha * n_len + n`.
fn sample_row(p: f64, eta: f64, start: f64, n_axis: &[u32], alphas: &[f64], m: u64, rng: &mut SimRng) -> Vec<[f64; 2]> {
    let max_n = *n_axis.last().expect("nonempty n axis");
    let k_len = truncation_len(eta, max_n) as usize;
    let weights: Vec<f64> = (0..k_len).map(|i| (1.0 - eta) * eta.powi(i as i32)).collect();
    let start_terms: Vec<f64> = n_axis.iter().map(|&n| start * eta.powi(n as i32)).collect();
    // (prefix length, axis position), prefix lengths are nondecreasing
    let prefix: Vec<usize> = n_axis.iter().map(|&n| (n as usize).min(k_len)).collect();

    let ranks: Vec<(usize, usize)> = alphas
        .iter()
        .map(|&a| {
            let lo = order_statistic_index(a, m) as usize;
            let hi = order_statistic_index(1.0 - a, m) as usize;
            (lo, m as usize - hi + 1)
        })
        .collect();
    let keep = ranks.iter().map(|&(l, h)| l.max(h)).max().unwrap_or(1);

    let mut tails: Vec<Tails> = n_axis.iter().map(|_| Tails::new(keep)).collect();
    // hot copies of each tracker's cut points
    let mut cuts: Vec<[f64; 2]> = vec![[f64::INFINITY, f64::NEG_INFINITY]; n_axis.len()];

    if p <= 0.0 || p >= 1.0 {
        // deterministic path: every draw identical
        let mut s = 0.0;
        let mut values = vec![0.0; n_axis.len()];
        let mut next = 0;
        while next < prefix.len() && prefix[next] == 0 {
            values[next] = start_terms[next];
            next += 1;
        }
        for (i, w) in weights.iter().enumerate() {
            if p >= 1.0 {
                s += w;
            }
            while next < prefix.len() && prefix[next] == i + 1 {
                values[next] = s + start_terms[next];
                next += 1;
            }
        }
        return alphas.iter().flat_map(|_| values.iter().map(|&v| [v, v])).collect();
    }

    let threshold = (p * 4_294_967_296.0) as u32;
    // pad to whole 64-bit blocks with zero weights so every byte of the
    // draw path has a lookup table
    let blocks = k_len.div_ceil(64);
    let mut padded = weights.clone();
    padded.resize(blocks * 64, 0.0);
    let byte_sums: Vec<[f64; 256]> = padded
        .chunks_exact(8)
        .map(|w| {
            let mut t = [0.0; 256];
            for (v, slot) in t.iter_mut().enumerate() {
                *slot = (0..8).filter(|j| v >> j & 1 == 1).map(|j| w[j]).sum();
            }
            t
        })
        .collect();
    // axis positions grouped into segments of the draw path between
    // consecutive recording points: (from, to, first axis pos, end axis pos)
    let mut segments: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut pos = 0;
    let mut prev = 0;
    while pos < prefix.len() {
        let len = prefix[pos];
        let first = pos;
        while pos < prefix.len() && prefix[pos] == len {
            pos += 1;
        }
        segments.push((prev, len, first, pos));
        prev = len;
    }

    let mut bits = vec![0u64; blocks];
    for _ in 0..m {
        for w in bits.iter_mut() {
            *w = bernoulli_word(rng, threshold);
        }
        let bit = |i: usize| (bits[i / 64] >> (i % 64)) & 1;
        let byte = |g: usize| ((bits[g / 8] >> ((g % 8) * 8)) & 0xff) as usize;
        let mut s = 0.0;
        for &(from, to, first, end) in &segments {
            let mut i = from;
            while i < to {
                if i % 8 == 0 && i + 8 <= to {
                    s += byte_sums[i / 8][byte(i / 8)];
                    i += 8;
                } else {
                    s += weights[i] * bit(i) as f64;
                    i += 1;
                }
            }
            for ax in first..end {
                let x = s + start_terms[ax];
                let c = cuts[ax];
                if x < c[0] || x > c[1] {
                    tails[ax].push(x);
                    cuts[ax] = [tails[ax].low_cut, tails[ax].high_cut];
                }
            }
        }
    }

    let finished: Vec<(Vec<f64>, Vec<f64>)> = tails.into_iter().map(Tails::finish).collect();
    let mut out = Vec::with_capacity(alphas.len() * n_axis.len());
    for &(lo_rank, hi_rank) in &ranks {
        for (low, high) in &finished {
            out.push([low[lo_rank - 1], high[hi_rank - 1]]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{estimate_bounds, GeomSumParams};
    use crate::rng::rng_from_seed;

    fn small_grid() -> GridSpec {
        GridSpec {
            p_hat: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n: vec![0, 1, 2, 3, 8, 32, 100],
            alpha: vec![0.01, 0.05],
        }
    }

    #[test]
    fn pav_basic() {
        let mut v = vec![1.0, 3.0, 2.0, 4.0];
        isotonic_nondecreasing(&mut v);
        assert_eq!(v, vec![1.0, 2.5, 2.5, 4.0]);
        let mut w = vec![5.0, 4.0, 3.0];
        isotonic_nondecreasing(&mut w);
        assert_eq!(w, vec![4.0, 4.0, 4.0]);
        let mut sorted = vec![0.0, 0.1, 0.1, 0.7];
        isotonic_nondecreasing(&mut sorted);
        assert_eq!(sorted, vec![0.0, 0.1, 0.1, 0.7]);
    }

    #[test]
    fn tails_match_full_sort() {
        let mut rng = rng_from_seed(4);
        use rand::Rng;
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let mut t = Tails::new(37);
        xs.iter().for_each(|&x| t.push(x));
        let (low, high) = t.finish();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(low, sorted[..37].to_vec());
        let top: Vec<f64> = sorted.iter().rev().take(37).copied().collect();
        assert_eq!(high, top);
    }

    #[test]
    fn endpoint_rows_are_degenerate() {
        let t = BoundTable::build(&small_grid(), 0.9, 0.0, 2000, 1).unwrap();
        for ai in 0..2 {
            for (ni, &n) in t.grid.n.iter().enumerate() {
                let zero = t.cell(ai, ni, 0);
                assert_eq!((zero.lower, zero.upper), (0.0, 0.0));
                let one = t.cell(ai, ni, 4);
                let expect = 1.0 - 0.9f64.powi(n as i32);
                assert!((one.lower - expect).abs() < 1e-12);
                assert_eq!(one.lower, one.upper);
            }
        }
    }

    #[test]
    fn start_term_in_cells() {
        let t = BoundTable::build(&small_grid(), 0.9, 0.5, 2000, 1).unwrap();
        let b = t.lookup(0.0, 0.01, 2).unwrap();
        assert!((b.lower - 0.405).abs() < 1e-12);
        let b0 = t.lookup(0.5, 0.01, 0).unwrap();
        assert_eq!((b0.lower, b0.upper), (0.5, 0.5));
    }

    #[test]
    fn monotone_in_p() {
        let t = BoundTable::build(&small_grid(), 0.9, 0.0, 5000, 3).unwrap();
        for ai in 0..2 {
            for ni in 0..t.grid.n.len() {
                for pi in 1..t.grid.p_hat.len() {
                    let a = t.cell(ai, ni, pi - 1);
                    let b = t.cell(ai, ni, pi);
                    assert!(a.lower <= b.lower && a.upper <= b.upper);
                    assert!(b.lower <= b.upper);
                }
            }
        }
    }

    #[test]
    fn cells_agree_with_direct_estimate() {
        let grid = GridSpec {
            p_hat: vec![0.3, 0.7],
            n: vec![16, 64],
            alpha: vec![0.01],
        };
        let t = BoundTable::build(&grid, 0.9, 0.0, 200_000, 21).unwrap();
        for (pi, &p) in grid.p_hat.iter().enumerate() {
            for (ni, &n) in grid.n.iter().enumerate() {
                let params = GeomSumParams::new(p, 0.9, n).unwrap();
                let direct = estimate_bounds(&params, 0.01, 200_000, &mut rng_from_seed(99)).unwrap();
                let cell = t.cell(0, ni, pi);
                assert!((cell.lower - direct.lower).abs() < 0.01, "{p} {n} {cell:?} {direct:?}");
                assert!((cell.upper - direct.upper).abs() < 0.01, "{p} {n} {cell:?} {direct:?}");
            }
        }
    }

    #[test]
    fn lookup_snapping() {
        let grid = GridSpec::standard(&[0.01]);
        let t = BoundTable::build(
            &GridSpec {
                n: vec![2, 4, 2000],
                ..grid
            },
            0.9,
            0.0,
            1000,
            1,
        )
        .unwrap();
        assert_eq!(t.p_index(0.503), 50);
        assert_eq!(t.p_index(0.505), 50);
        assert_eq!(t.p_index(0.506), 51);
        assert_eq!(t.p_index(-0.2), 0);
        assert_eq!(t.p_index(1.3), 100);
        assert_eq!(t.n_index(3), 0);
        assert_eq!(t.n_index(1_000_000), 2);
        assert_eq!(t.n_index(1), 0);
        let exact = t.cell(0, 1, 37);
        assert_eq!(t.lookup(0.37, 0.01, 4).unwrap(), exact);
        assert!(matches!(t.lookup(0.5, 0.02, 4), Err(Error::AlphaNotInTable { .. })));
    }

    #[test]
    fn bad_grids_rejected() {
        let mut g = small_grid();
        g.p_hat = vec![0.5, 0.2];
        assert!(BoundTable::build(&g, 0.9, 0.0, 1000, 1).is_err());
        let mut g = small_grid();
        g.alpha = vec![];
        assert!(BoundTable::build(&g, 0.9, 0.0, 1000, 1).is_err());
        assert!(BoundTable::build(&small_grid(), 0.9, 0.0, 10, 1).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let a = BoundTable::build(&small_grid(), 0.9, 0.0, 3000, 8).unwrap();
        let b = BoundTable::build(&small_grid(), 0.9, 0.0, 3000, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn truncation() {
        assert_eq!(truncation_len(0.9, 2048), 285);
        assert_eq!(truncation_len(0.99, 2048), 2048);
        assert_eq!(truncation_len(0.0, 2048), 1);
        assert_eq!(truncation_len(0.9, 10), 10);
    }
}
