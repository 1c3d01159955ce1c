#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::net::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = decode_checkpoint::<f32>(data) {
        assert_eq!(encode_checkpoint(&p), data);
    }
    if let Ok(p) = decode_checkpoint::<f64>(data) {
        assert_eq!(encode_checkpoint(&p), data);
    }
});
