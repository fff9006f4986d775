//! Deterministic synthetic input frames.
//!
//! Frame bytes come from ChaCha8 seeded by the run seed, with the frame
//! index as the stream number, so frame `i` has the same contents no matter
//! how many frames are generated or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::RawFrame;

pub fn synthetic_frame(seed: u64, frame_id: u64, channels: usize, height: usize, width: usize) -> RawFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_id);
    RawFrame {
        channels,
        height,
        width,
        bytes: (0..channels * height * width).map(|_| rng.gen()).collect(),
    }
}

pub fn synthetic_frames(
    seed: u64,
    count: usize,
    channels: usize,
    height: usize,
    width: usize,
) -> Vec<RawFrame> {
    (0..count as u64)
        .map(|id| synthetic_frame(seed, id, channels, height, width))
        .collect()
}
