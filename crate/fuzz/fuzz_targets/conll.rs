#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::corpus::{parse_conll, ParseOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(corpus) = parse_conll(text, &ParseOptions::default()) else {
        return;
    };
    // Rendering and re-parsing with the same labels is lossless.
    let opts = ParseOptions {
        labels: Some(&corpus.labels),
        ..ParseOptions::default()
    };
    let again = parse_conll(&corpus.to_conll(), &opts).expect("rendered corpus parses");
    assert_eq!(again.n_tokens(), corpus.n_tokens());
});
