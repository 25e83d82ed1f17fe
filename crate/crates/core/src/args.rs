//! Parsers for numeric list arguments such as `0.01,1e-5` and `0.1:0.8:0.1`.

use crate::error::{Error, Result};

/// Most values a range may expand to.
pub const MAX_RANGE_LEN: usize = 100_000;

fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParam(format!("not a number: `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::InvalidParam(format!("not a finite number: `{s}`")));
    }
    Ok(v)
}

/// Comma-separated numbers.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Err(Error::InvalidParam("empty list".into()));
    }
    s.split(',').map(parse_f64).collect()
}

fn round12(x: f64) -> f64 {
    let scaled = x * 1e12;
    if scaled.is_finite() {
        scaled.round() / 1e12
    } else {
        x
    }
}

/// `start:stop:step` inclusive of `stop` (within rounding), or a
/// comma-separated list. Range values are rounded to 12 decimals so
/// `0.1:0.8:0.1` yields `0.3` rather than `0.30000000000000004`.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => parse_f64_list(s),
        3 => {
            let (start, stop, step) = (parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?);
            if step <= 0.0 {
                return Err(Error::InvalidParam(format!("range step must be positive: `{s}`")));
            }
            if stop < start {
                return Err(Error::InvalidParam(format!("range end below its start: `{s}`")));
            }
            let count = ((stop - start) / step + 1e-9).floor() + 1.0;
            if !(count.is_finite() && count <= MAX_RANGE_LEN as f64) {
                return Err(Error::InvalidParam(format!("range too long: `{s}`")));
            }
            Ok((0..count as usize).map(|i| round12(start + i as f64 * step)).collect())
        }
        _ => Err(Error::InvalidParam(format!(
            "expected start:stop:step or a list, got `{s}`"
        ))),
    }
}
