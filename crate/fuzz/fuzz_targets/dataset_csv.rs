#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // malformed CSVs must come back as errors, never panics
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = giks::data::parse_dataset_csv(text);
    }
});
