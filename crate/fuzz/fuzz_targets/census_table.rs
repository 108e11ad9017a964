#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::census::{sample_random, CensusTable};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(table) = CensusTable::parse(&text, &Default::default()) {
        let draws = sample_random(&table, 4, 1, Default::default()).unwrap();
        assert_eq!(draws.len(), 4);
    }
});
