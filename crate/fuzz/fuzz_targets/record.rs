#![no_main]

use albench_core::model::ExperimentRecord;
use albench_core::orchestrator::summarize;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = serde_json::from_slice::<Vec<ExperimentRecord>>(data) {
        let _ = summarize(&records);
    }
});
