#![no_main]

use brenier::io::{parse_dataset, split_by_label, IngestOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let options = IngestOptions {
        delimiter: [None, Some(b','), Some(b';'), Some(b'\t')][usize::from(flags & 3)],
        feature_columns: Vec::new(),
        label_column: (flags & 4 != 0).then(|| "quality".to_string()),
        has_header: flags & 8 == 0,
    };
    if let Ok(ds) = parse_dataset(text, &options) {
        let _ = split_by_label(&ds, "5", "7");
    }
});
