#![no_main]

use albench_core::io::read_csv;
use albench_core::model::validate_dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_csv(data, None) {
        assert!(validate_dataset(&ds).is_empty());
    }
});
