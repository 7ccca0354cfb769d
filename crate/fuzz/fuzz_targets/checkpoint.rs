#![no_main]

use albench_core::learners::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = decode_checkpoint(data) {
        // whatever decodes must re-encode to something that decodes identically
        let again = decode_checkpoint(&encode_checkpoint(&net)).expect("re-encoded checkpoint decodes");
        assert_eq!(again.params(), net.params());
    }
});
