#![no_main]

use libfuzzer_sys::fuzz_target;
use vpop_core::gateway::ProviderConfig;
use vpop_core::pipeline::RunConfig;

fuzz_target!(|data: &str| {
    let _ = RunConfig::from_toml(data);
    if let Ok(cfg) = ProviderConfig::from_toml(data) {
        let _ = cfg.validate();
    }
});
