#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::influence::GradientCache;

fuzz_target!(|data: &[u8]| {
    if let Ok(cache) = GradientCache::decode(data) {
        assert_eq!(cache.encode().len(), cache.byte_size());
    }
});
