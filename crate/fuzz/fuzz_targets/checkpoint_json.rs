#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // parse + validate + model reconstruction must never panic
        if let Ok(ck) = giks::model::Checkpoint::from_json_str(text) {
            let _ = ck.into_model();
        }
    }
});
