#![no_main]

use driftwatch::stream::{parse_stream_csv, stream_csv_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(pairs) = parse_stream_csv(data) {
        assert_eq!(parse_stream_csv(&stream_csv_bytes(&pairs)).expect("re-parse"), pairs);
    }
});
