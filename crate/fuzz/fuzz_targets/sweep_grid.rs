#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame_harness::{parse_grid, Axis};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for axis in [Axis::Alpha, Axis::Tau, Axis::Kappa, Axis::N] {
        let _ = parse_grid(axis, text);
    }
    let _ = text.parse::<Axis>();
});
