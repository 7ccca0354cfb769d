#![no_main]

use albench_core::adapter::check::parse_transcript;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_transcript(text, std::path::Path::new("/data.csv"));
    }
});
