#![no_main]

use libfuzzer_sys::fuzz_target;
use zidlab::shaping::ShapingConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ShapingConfig::from_json(text) {
        let again = ShapingConfig::from_json(&cfg.to_json()).expect("round trip");
        assert_eq!(again.to_json(), cfg.to_json());
    }
});
