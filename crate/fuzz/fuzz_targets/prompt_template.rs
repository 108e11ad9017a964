#![no_main]

use std::collections::BTreeMap;

use libfuzzer_sys::fuzz_target;
use vpop_core::template::PromptTemplate;

fuzz_target!(|data: &str| {
    let tpl = PromptTemplate::new("fuzz", 1, data);
    let names = tpl.placeholders();
    let vars: BTreeMap<&str, String> = names.iter().map(|n| (*n, format!("<{n}>"))).collect();
    let rendered = tpl.render(&names, &vars).expect("every placeholder has a value");
    let _ = rendered.digest();
});
