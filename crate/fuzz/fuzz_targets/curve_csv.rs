#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::evaluation::TraitCurveTable;

fuzz_target!(|data: &str| {
    if let Ok(table) = TraitCurveTable::from_csv("fuzz", data) {
        let again = TraitCurveTable::from_csv("fuzz", &table.to_csv()).expect("emitted csv parses");
        assert_eq!(again.rows().len(), table.rows().len());
    }
});
