#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = brenier::io::ModelFile::from_json_str(text) {
            // A model that passed validation must evaluate without panicking.
            let origin = vec![0.0; file.model.dim()];
            let _ = file.model.evaluate_index(&origin);
        }
    }
});
