#![no_main]

use libfuzzer_sys::fuzz_target;
use selfavg::engine::NativeDump;

fuzz_target!(|data: &[u8]| {
    if let Ok(dump) = NativeDump::from_json(data) {
        let _ = dump.into_table();
    }
});
