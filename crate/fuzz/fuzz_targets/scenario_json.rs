#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use llc_core::harness::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Scenario::from_json_str(text, Path::new("/nonexistent"));
});
