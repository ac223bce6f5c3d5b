//! Run-length encoding for binary masks.
//!
//! Runs alternate between background and foreground in row-major order and
//! always start with a (possibly empty) zero-run, so `[0, 4]` is a fully set
//! 2×2 mask and `[4]` an empty one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rle(pub Vec<u32>);

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &bit in mask.bits() {
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
        counts.push(run);
        Rle(counts)
    }

    /// Number of foreground pixels, without materialising the mask.
    pub fn foreground(&self) -> u64 {
        self.0.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn decode(&self, width: u32, height: u32) -> Result<BinaryMask> {
        let total = width as u64 * height as u64;
        if total > MAX_PIXELS {
            return Err(Error::Decode {
                what: "run-length mask".into(),
                message: format!("{width}x{height} exceeds the supported mask size"),
            });
        }
        let sum = self.0.iter().map(|&c| c as u64).sum::<u64>();
        if sum != total {
            return Err(Error::Decode {
                what: "run-length mask".into(),
                message: format!("runs cover {sum} pixels, expected {width}x{height} = {total}"),
            });
        }
        let mut bits = Vec::with_capacity(total as usize);
        let mut value = false;
        for &count in &self.0 {
            bits.extend(std::iter::repeat_n(value, count as usize));
            value = !value;
        }
        BinaryMask::from_bits(width, height, bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn starts_with_zero_run() {
        let full = BinaryMask::filled(2, 2, true);
        assert_eq!(Rle::encode(&full).0, vec![0, 4]);
        let empty = BinaryMask::new(2, 2);
        assert_eq!(Rle::encode(&empty).0, vec![4]);
    }

    #[test]
    fn row_major_runs() {
        // 0 1 1
        // 1 0 0
        let m = BinaryMask::from_bits(3, 2, vec![false, true, true, true, false, false]).unwrap();
        let rle = Rle::encode(&m);
        assert_eq!(rle.0, vec![1, 3, 2]);
        assert_eq!(rle.foreground(), 3);
    }

    #[test]
    fn wrong_total_is_rejected() {
        assert!(Rle(vec![1, 2]).decode(2, 2).is_err());
        assert!(Rle(vec![u32::MAX, u32::MAX]).decode(2, 2).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode((w, h, bits) in (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(any::<bool>(), (w * h) as usize))
        })) {
            let m = BinaryMask::from_bits(w, h, bits).unwrap();
            let rle = Rle::encode(&m);
            prop_assert_eq!(rle.foreground(), m.count());
            prop_assert_eq!(rle.decode(w, h).unwrap(), m);
        }
    }
}
