#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::questionnaire::{chunk_items, parse_quiz_response, render_canonical, ItemBank};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let bank = ItemBank::bundled();
    let chunk = chunk_items(bank.items(), 120).remove(0);
    let (sheet, report) = parse_quiz_response(&text, &chunk);
    assert_eq!(report.answered_count + report.missing_ids.len(), 120);
    assert!(sheet.answers.values().all(|c| (1..=5).contains(c)));
    // Whatever was parsed must survive the canonical round trip.
    let canonical = render_canonical(&sheet);
    let (again, _) = parse_quiz_response(&canonical, &chunk);
    assert_eq!(again.answers, sheet.answers);
});
