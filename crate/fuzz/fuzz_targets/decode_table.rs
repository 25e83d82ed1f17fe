#![no_main]

use driftwatch::bounds::{decode_table, encode_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = decode_table(data) {
        // anything accepted must survive a round trip
        let again = decode_table(&encode_table(&table)).expect("re-decode");
        assert_eq!(again.cells(), table.cells());
        let _ = table.lookup(0.5, table.grid().alpha[0], 10);
    }
});
