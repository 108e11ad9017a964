#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::questionnaire::ItemBank;

fuzz_target!(|data: &[u8]| {
    let _ = ItemBank::parse(&String::from_utf8_lossy(data));
});
