#![no_main]

use albench_core::adapter::Message;
use albench_core::adapter::message::{decode_bundle, expand_b64};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(msg) = Message::parse(line) {
        let _ = decode_bundle(&msg.payload);
        let mut payload = msg.payload.clone();
        let _ = expand_b64(&mut payload);
        assert_eq!(Message::parse(&msg.to_line()).expect("round trip"), msg);
    }
});
