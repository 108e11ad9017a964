#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::gateway::MockProfile;

fuzz_target!(|data: &str| {
    let _ = MockProfile::from_toml(data);
});
