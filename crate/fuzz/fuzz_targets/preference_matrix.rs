#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame_core::PreferenceMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = PreferenceMatrix::from_json(text) {
        let again = PreferenceMatrix::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p.num_actions(), again.num_actions());
        for x in 0..p.num_contexts() {
            for i in 0..p.num_actions() {
                for j in 0..p.num_actions() {
                    assert!((p.get(x, i, j) + p.get(x, j, i) - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
});
