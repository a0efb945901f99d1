#![no_main]

use libfuzzer_sys::fuzz_target;
use selfavg::engine::TableData;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TableData::from_csv(data) {
        let again = TableData::from_csv(t.to_csv().unwrap().as_bytes()).unwrap();
        assert_eq!(t.values, again.values);
    }
});
