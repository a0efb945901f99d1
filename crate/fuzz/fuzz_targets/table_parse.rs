#![no_main]

use libfuzzer_sys::fuzz_target;
use selfavg::engine::TableData;

fuzz_target!(|data: &[u8]| {
    // Format autodetection over all three encodings.
    let _ = TableData::parse(data);
});
