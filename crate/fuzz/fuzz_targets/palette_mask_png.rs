#![no_main]

use camprompt::LabelMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = LabelMap::decode_png(data) {
        let bytes = map.encode_png().expect("re-encode decoded map");
        assert_eq!(LabelMap::decode_png(&bytes).unwrap(), map);
    }
});
