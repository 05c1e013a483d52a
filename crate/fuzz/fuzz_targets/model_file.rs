#![no_main]

use libfuzzer_sys::fuzz_target;
use seginf::model_file::ModelFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = ModelFile::decode(data) {
        assert_eq!(
            ModelFile::decode(&model.encode().expect("decoded model encodes"))
                .expect("re-encoded model decodes"),
            model
        );
    }
});
