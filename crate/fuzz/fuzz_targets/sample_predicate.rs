#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::census::SamplePredicate;

fuzz_target!(|data: &str| {
    if let Ok(pred) = data.parse::<SamplePredicate>() {
        // Display output parses back to the same predicate.
        let shown = pred.to_string();
        let again: SamplePredicate = shown.parse().expect("display output parses");
        assert_eq!(again.to_string(), shown);
    }
});
