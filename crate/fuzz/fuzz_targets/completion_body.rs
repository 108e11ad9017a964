#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::gateway::extract_text;

fuzz_target!(|data: &str| {
    let _ = extract_text(data);
});
