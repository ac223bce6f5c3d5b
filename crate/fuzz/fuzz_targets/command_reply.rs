#![no_main]

use camprompt::segmenter::CommandReply;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(reply) = serde_json::from_slice::<CommandReply>(data) {
        if u64::from(reply.width) * u64::from(reply.height) <= 1 << 20 {
            for m in &reply.masks {
                let _ = m.rle.decode(reply.width, reply.height);
            }
        }
    }
});
