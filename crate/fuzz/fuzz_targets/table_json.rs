#![no_main]

use libfuzzer_sys::fuzz_target;
use selfavg::engine::TableData;

fuzz_target!(|data: &[u8]| {
    // Anything accepted must survive a round trip unchanged.
    if let Ok(t) = TableData::from_json(data) {
        let again = TableData::from_json(t.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(t, again);
    }
});
