#![no_main]

use driftwatch::stream::parse_stream_meta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_stream_meta(data);
});
