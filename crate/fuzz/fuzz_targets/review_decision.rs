#![no_main]

use camprompt::pipeline::{DecisionInput, ReviewDecision};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(input) = serde_json::from_slice::<DecisionInput>(data) {
        let bytes = serde_json::to_vec(&input).unwrap();
        assert_eq!(serde_json::from_slice::<DecisionInput>(&bytes).unwrap(), input);
    }
    let _ = serde_json::from_slice::<ReviewDecision>(data);
});
