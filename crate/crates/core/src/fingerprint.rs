use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of `value`.
pub fn json_fingerprint<T: Serialize>(value: &T) -> String {
    // serde_json keeps struct field order, so this is stable for our types.
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    sha256_hex(&bytes)
}

/// Per-sample seed derived from (global seed, epoch, image id).
pub fn sample_seed(global_seed: u64, epoch: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(epoch.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
