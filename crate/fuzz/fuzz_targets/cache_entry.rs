#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(null) = brenier::io::decode_cache_entry(data, None) {
        let _ = brenier::hypothesis::critical_value(&null, 0.05);
        let _ = brenier::hypothesis::p_value(&null, 0.5);
    }
});
