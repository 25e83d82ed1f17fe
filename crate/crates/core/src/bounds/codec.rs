//! Bound-table file format.
//!
//! All integers and floats little-endian; floats are IEEE-754 bit patterns,
//! so a decode/encode cycle is bit-exact.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "DWBT"
//! 4       2             format version (1)
//! 6       2             reserved, zero
//! 8       8             eta            f64
//! 16      8             start          f64
//! 24      8             mc_samples     u64   requested draws per cell
//! 32      8             cell_samples   u64   draws actually used per cell
//! 40      8             seed           u64
//! 48      4             len(p_hat)     u32
//! 52      4             len(n)         u32
//! 56      4             len(alpha)     u32
//! 60      8*len(p_hat)  p_hat axis     f64
//! ..      4*len(n)      n axis         u32
//! ..      8*len(alpha)  alpha axis     f64
//! ..      16*cells      (lower, upper) f64 pairs, alpha-major, then n, p_hat fastest
//! ```

use std::path::Path;

use super::table::{BoundTable, GridSpec};
use super::validate_eta;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DWBT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 60;

pub fn encode_table(table: &BoundTable) -> Vec<u8> {
    let g = &table.grid;
    let mut out =
        Vec::with_capacity(HEADER_LEN + 8 * g.p_hat.len() + 4 * g.n.len() + 8 * g.alpha.len() + 16 * table.cells.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&table.eta.to_le_bytes());
    out.extend_from_slice(&table.start.to_le_bytes());
    out.extend_from_slice(&table.mc_samples.to_le_bytes());
    out.extend_from_slice(&table.cell_samples.to_le_bytes());
    out.extend_from_slice(&table.seed.to_le_bytes());
    out.extend_from_slice(&(g.p_hat.len() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n.len() as u32).to_le_bytes());
    out.extend_from_slice(&(g.alpha.len() as u32).to_le_bytes());
    g.p_hat.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    g.n.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    g.alpha.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    for [lo, hi] in &table.cells {
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::TableFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_table(bytes: &[u8]) -> Result<BoundTable> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::TableFormat("bad magic".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::TableFormat(format!("unsupported version {version}")));
    }
    if r.u16()? != 0 {
        return Err(Error::TableFormat("reserved field must be zero".into()));
    }
    let eta = r.f64()?;
    validate_eta(eta).map_err(|e| Error::TableFormat(e.to_string()))?;
    let start = r.f64()?;
    if !(0.0..=1.0).contains(&start) {
        return Err(Error::TableFormat(format!("start {start} outside [0, 1]")));
    }
    let mc_samples = r.u64()?;
    let cell_samples = r.u64()?;
    let seed = r.u64()?;
    let n_p = r.u32()? as usize;
    let n_n = r.u32()? as usize;
    let n_a = r.u32()? as usize;

    // size check before any allocation
    let cells = n_p
        .checked_mul(n_n)
        .and_then(|x| x.checked_mul(n_a))
        .ok_or_else(|| Error::TableFormat("axis lengths overflow".into()))?;
    let body = n_p
        .checked_mul(8)
        .zip(n_n.checked_mul(4))
        .zip(n_a.checked_mul(8))
        .zip(cells.checked_mul(16))
        .and_then(|(((a, b), c), d)| a.checked_add(b)?.checked_add(c)?.checked_add(d))
        .ok_or_else(|| Error::TableFormat("axis lengths overflow".into()))?;
    if bytes.len() - r.pos != body {
        return Err(Error::TableFormat(format!(
            "expected {body} bytes after header, found {}",
            bytes.len() - r.pos
        )));
    }

    let p_hat = (0..n_p).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let n = (0..n_n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let alpha = (0..n_a).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let grid = GridSpec { p_hat, n, alpha };
    grid.validate().map_err(|e| Error::TableFormat(e.to_string()))?;

    let mut data = Vec::with_capacity(cells);
    for _ in 0..cells {
        let lo = r.f64()?;
        let hi = r.f64()?;
        if !(lo.is_finite() && hi.is_finite() && (0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0) {
            return Err(Error::TableFormat(format!("invalid cell ({lo}, {hi})")));
        }
        data.push([lo, hi]);
    }
    Ok(BoundTable {
        eta,
        start,
        mc_samples,
        cell_samples,
        seed,
        grid,
        cells: data,
    })
}

pub fn write_table(table: &BoundTable, path: &Path) -> Result<()> {
    std::fs::write(path, encode_table(table)).map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<BoundTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_table(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> BoundTable {
        let grid = GridSpec {
            p_hat: vec![0.0, 0.1, 0.5, 0.9, 1.0],
            n: vec![0, 3, 10, 300],
            alpha: vec![1e-3, 0.01],
        };
        BoundTable::build(&grid, 0.9, 0.5, 2000, 77).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let t = table();
        let bytes = encode_table(&t);
        let back = decode_table(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_table(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dwbt");
        let t = table();
        write_table(&t, &path).unwrap();
        assert_eq!(read_table(&path).unwrap(), t);
        assert!(read_table(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_table(&table());
        assert!(decode_table(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_table(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_table(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_table(&extra).is_err());
        // huge axis lengths must not allocate
        let mut huge = bytes[..HEADER_LEN].to_vec();
        huge[48..52].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[52..56].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_table(&huge).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = decode_table(&bytes);
        }

        #[test]
        fn header_mutation_never_panics(pos in 0usize..HEADER_LEN, val in any::<u8>()) {
            let mut bytes = encode_table(&table());
            bytes[pos] = val;
            if let Ok(t) = decode_table(&bytes) {
                prop_assert_eq!(encode_table(&t), bytes);
            }
        }
    }
}
