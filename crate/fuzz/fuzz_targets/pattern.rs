#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::noise::PatternMatcher;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut lines = text.splitn(2, '\n');
    let tokens: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .map(str::to_string)
        .collect();
    if let Ok(m) = PatternMatcher::parse(lines.next().unwrap_or("")) {
        for (a, b) in m.find_spans(&tokens) {
            assert!(a <= b && b < tokens.len());
        }
    }
});
