#![no_main]

use camprompt::segmenter::ProposalManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Dimensions are attacker-controlled; keep decoding cheap.
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(m) = ProposalManifest::parse(data) {
        if u64::from(m.width) * u64::from(m.height) <= 1 << 20 {
            let _ = m.to_set();
        }
    }
});
