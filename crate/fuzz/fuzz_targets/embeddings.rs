#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::features::{EmbeddingTable, OovPolicy};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = EmbeddingTable::parse(text, OovPolicy::HashedBucket(7)) {
        let _ = table.lookup("unseen");
        let again = EmbeddingTable::parse(&table.to_text(), table.oov_policy())
            .expect("rendered table parses");
        assert_eq!(again.len(), table.len());
    }
});
