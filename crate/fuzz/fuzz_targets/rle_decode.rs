#![no_main]

use camprompt::Rle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let (w, h) = (data[0] as u32 % 64 + 1, data[1] as u32 % 64 + 1);
    let Ok(rle) = serde_json::from_slice::<Rle>(&data[2..]) else { return };
    if let Ok(mask) = rle.decode(w, h) {
        assert_eq!(mask.count(), rle.foreground());
        assert_eq!(Rle::encode(&mask).decode(w, h).unwrap(), mask);
    }
});
