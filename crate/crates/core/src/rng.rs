// SPDX-License-Identifier: Apache-2.0

//! Counter-based random streams.
//!
//! Every stream is Philox4x32-10 keyed by the 64-bit master seed. The
//! 128-bit counter is `[block_lo, block_hi, stream_lo, stream_hi]`, so any
//! `(purpose, node, index)` triple addresses an independent stream without
//! coordination. Each counter block yields two `u64`s, low word first:
//! `(w1 << 32) | w0` then `(w3 << 32) | w2`.

/// Name recorded in run manifests.
pub const RNG_ALGORITHM: &str = "philox4x32-10";

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32-10 block.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// What a stream is used for; occupies the top byte of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    Shuffle = 1,
    Generate = 2,
}

/// Packs `(purpose, node, index)` into a stream id:
/// `purpose << 56 | node << 32 | index`.
pub fn stream_id(purpose: StreamPurpose, node: usize, index: u32) -> u64 {
    debug_assert!(node < (1 << 24));
    ((purpose as u64) << 56) | ((node as u64) << 32) | index as u64
}

#[derive(Clone, Debug)]
pub struct RngStream {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buf: [u64; 2],
    used: u8,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream {
            key: [seed as u32, (seed >> 32) as u32],
            stream,
            block: 0,
            buf: [0; 2],
            used: 2,
        }
    }

    /// Stream for shuffle round `round` on `node`.
    pub fn for_shuffle(seed: u64, node: usize, round: u32) -> Self {
        Self::new(seed, stream_id(StreamPurpose::Shuffle, node, round))
    }

    /// Stream for edge generation on `(node, core)`.
    pub fn for_generate(seed: u64, node: usize, core: usize) -> Self {
        Self::new(seed, stream_id(StreamPurpose::Generate, node, core as u32))
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        let w = philox4x32_10(ctr, self.key);
        self.buf = [
            ((w[1] as u64) << 32) | w[0] as u64,
            ((w[3] as u64) << 32) | w[2] as u64,
        ];
        self.block += 1;
        self.used = 0;
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.used == 2 {
            self.refill();
        }
        let v = self.buf[self.used as usize];
        self.used += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)` by multiply-and-reject (no modulo bias).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let mut m = self.next_u64() as u128 * bound as u128;
        if (m as u64) < bound {
            let threshold = bound.wrapping_neg() % bound;
            while (m as u64) < threshold {
                m = self.next_u64() as u128 * bound as u128;
            }
        }
        (m >> 64) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Random123 known-answer vectors for philox4x32_10.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn first_words_follow_block_layout() {
        let mut s = RngStream::new(0, 0);
        let w = philox4x32_10([0; 4], [0; 2]);
        assert_eq!(s.next_u64(), ((w[1] as u64) << 32) | w[0] as u64);
        assert_eq!(s.next_u64(), ((w[3] as u64) << 32) | w[2] as u64);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut s = RngStream::for_generate(7, 1, 2);
            (0..64).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RngStream::for_generate(7, 1, 2);
            (0..64).map(|_| s.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut s = RngStream::for_generate(7, 1, 3);
            (0..64).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = RngStream::new(3, 9);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..200 {
                assert!(s.below(bound) < bound);
            }
        }
    }

    #[test]
    fn f64_in_unit_interval() {
        let mut s = RngStream::new(11, 0);
        for _ in 0..10_000 {
            let x = s.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }
}
