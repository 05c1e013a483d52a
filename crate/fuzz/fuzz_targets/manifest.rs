#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::noise::CorruptionManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = CorruptionManifest::parse(text) {
        assert_eq!(
            CorruptionManifest::parse(&m.to_text()).expect("rendered manifest parses"),
            m
        );
    }
});
