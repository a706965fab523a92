#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame_core::{CycleOptions, TieBreak};
use prefgame_harness::analyze::analyze_json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let opts = CycleOptions { tie_break: TieBreak::LowerIndexWins, cap: 10_000 };
    if let Ok(a) = analyze_json(text, opts) {
        assert!((0.0..=1.0).contains(&a.cycles.cyclic_fraction));
    }
});
