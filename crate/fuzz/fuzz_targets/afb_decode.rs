#![no_main]

use affectbench::data::{decode_afb, encode_afb};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rec) = decode_afb(data) {
        assert_eq!(encode_afb(&rec), data);
    }
});
