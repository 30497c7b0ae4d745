#![no_main]

use libfuzzer_sys::fuzz_target;
use llc_core::plant::SurrogateParams;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = SurrogateParams::from_json_str(text) {
        let _ = p.to_json_string();
    }
});
