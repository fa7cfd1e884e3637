#![no_main]

use csm_core::runner::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = RunConfig::from_toml_str(text) else {
        return;
    };
    let again = RunConfig::from_toml_str(&cfg.to_toml_string()).expect("serialized config parses");
    assert_eq!(again, cfg);
});
