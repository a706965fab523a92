#![no_main]

use libfuzzer_sys::fuzz_target;
use prefgame_core::{aggregate_population, ActionSpace, AnnotatorPopulation};

fuzz_target!(|data: &[u8]| {
    let Ok(pop) = serde_json::from_slice::<AnnotatorPopulation>(data) else { return };
    let labels = pop.types()[0].ranking.clone();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    if let Ok(space) = ActionSpace::single(&refs) {
        // rankings that are not permutations of the first one must be rejected, not panic
        let _ = aggregate_population(&pop, &space);
    }
});
