#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::noise::Gazetteer;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = Gazetteer::parse(text) {
        assert_eq!(g.contains("Berlin"), g.contains("berlin"));
    }
});
