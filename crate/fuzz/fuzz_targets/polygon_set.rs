#![no_main]

use albench_core::annotation::{rasterize, PolygonSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = PolygonSet::from_json(text, 2.0) {
        let _ = set.clicks();
        let _ = rasterize(&set, 24, 24, 0);
    }
});
