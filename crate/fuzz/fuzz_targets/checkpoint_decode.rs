#![no_main]

use affectbench::nn::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = decode_checkpoint(data) else {
        return;
    };
    let (cfg, meta) = (raw.config.clone(), raw.meta);
    if let Ok(model) = raw.into_model::<f32>(&cfg) {
        assert_eq!(encode_checkpoint(&model, &meta), data);
    }
});
