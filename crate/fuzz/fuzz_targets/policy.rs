#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame_core::{ConditionalPolicy, Policy};

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = serde_json::from_slice::<Policy>(data) {
        for x in 0..p.num_contexts() {
            assert!((p.probs(x).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
    let _ = serde_json::from_slice::<ConditionalPolicy>(data);
});
