#![no_main]

use libfuzzer_sys::fuzz_target;
use llc_core::harness::FrequencyResponse;

fuzz_target!(|data: &[u8]| {
    let _ = FrequencyResponse::read_csv(data);
});
