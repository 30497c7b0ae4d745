#![no_main]

use libfuzzer_sys::fuzz_target;
use llc_core::harness::SimTrace;

fuzz_target!(|data: &[u8]| {
    let _ = SimTrace::read_csv(data);
});
