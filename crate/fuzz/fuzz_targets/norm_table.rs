#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::scoring::{Cohort, NormTable, Scale};
use vpop_core::Domain;

// Input: norm rows, a NUL byte, then percentile breakpoints.
fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let (norms, percentiles) = text.split_once('\0').unwrap_or((&text, ""));
    if let Ok(table) = NormTable::parse("fuzz", norms, percentiles) {
        for raw in [0.0, 12.0, 72.0, 120.0] {
            if let Ok((_, pct)) = table.normalize(Scale::Domain(Domain::Openness), raw, &Cohort::new("F", 30)) {
                assert!((1.0..=99.0).contains(&pct));
            }
        }
    }
});
