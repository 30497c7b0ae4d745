#![no_main]

use libfuzzer_sys::fuzz_target;
use llc_core::harness::protocol::{parse_client_frame, ServerMessage};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for msg in parse_client_frame(text).into_iter().flatten() {
        // accepted messages must serialize
        let _ = msg.to_line();
    }
    let _ = ServerMessage::parse(text);
});
