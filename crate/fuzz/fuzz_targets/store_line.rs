#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::store::{decode_line, StageRecord};

fuzz_target!(|data: &str| {
    for line in data.split('\n') {
        if let Ok(json) = decode_line(line) {
            let _ = serde_json::from_str::<StageRecord>(json);
        }
    }
});
