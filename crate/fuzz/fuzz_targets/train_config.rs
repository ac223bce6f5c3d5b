#![no_main]

use camprompt::classifier::ClassifierConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = toml::from_str::<ClassifierConfig>(text) {
        let _ = cfg.validate();
    }
});
