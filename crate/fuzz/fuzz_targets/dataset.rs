#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame_core::solvers::{fit_bt_mle, BtFitOptions};
use prefgame_core::{ActionSpace, ComparisonDataset};

fuzz_target!(|data: &[u8]| {
    let Ok(d) = serde_json::from_slice::<ComparisonDataset>(data) else { return };
    let space = ActionSpace::single(&["A", "B", "C"]).unwrap();
    let opts = BtFitOptions { max_iters: 50, ..BtFitOptions::default() };
    let _ = fit_bt_mle(&d, &space, 0.01, opts);
});
