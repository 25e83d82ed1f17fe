#![no_main]

use driftwatch::args::{parse_f64_list, parse_range, MAX_RANGE_LEN};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(v) = parse_range(s) {
            assert!(!v.is_empty() && v.len() <= MAX_RANGE_LEN);
            assert!(v.iter().all(|x| x.is_finite()));
        }
        if let Ok(v) = parse_f64_list(s) {
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }
});
