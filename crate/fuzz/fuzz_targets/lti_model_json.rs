#![no_main]

use libfuzzer_sys::fuzz_target;
use llc_core::harmonic::LtiModel;
use llc_core::plant::LtpModel;
use llc_core::reduction::ReducedLti;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = LtiModel::from_json_str(text);
    let _ = ReducedLti::from_json_str(text);
    let _ = LtpModel::from_json_str(text);
});
