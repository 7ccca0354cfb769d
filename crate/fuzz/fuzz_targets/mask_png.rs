#![no_main]

use albench_core::io::{decode_mask_png, encode_mask_png};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = decode_mask_png(data, Some(255)) {
        assert_eq!(mask.pixels.len(), mask.width * mask.height);
        let back = decode_mask_png(&encode_mask_png(&mask).unwrap(), Some(255)).unwrap();
        assert_eq!(back.pixels, mask.pixels);
    }
});
