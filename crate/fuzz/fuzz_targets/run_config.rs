#![no_main]

use graphcast::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        assert_eq!(RunConfig::from_json(&cfg.to_json()).expect("roundtrip"), cfg);
    }
});
