#![no_main]

use albench_core::model::PoolState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = serde_json::from_slice::<PoolState>(data) {
        let n = state.len();
        if state.check(n).is_ok() {
            let _ = state.total_clicks();
            let _ = state.candidates();
        }
    }
});
