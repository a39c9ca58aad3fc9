#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(points) = brenier::io::parse_points_csv(text) {
            // Whatever parses must survive a write/parse round trip unchanged.
            let again = brenier::io::parse_points_csv(&brenier::io::write_points_csv(&points));
            assert_eq!(again.ok(), Some(points));
        }
    }
});
