//! Fixed-length segmentation: crop long utterances, tile short ones.

use crate::error::{Error, Result};
use rand::Rng;

pub enum SegmentMode<'a, R: Rng> {
    /// Deterministic: crop from the start.
    Eval,
    /// Seeded-random contiguous crop offset.
    Train(&'a mut R),
}

/// Produce exactly `target_len` samples: a contiguous crop when the input is
/// longer, repetition-tiling truncated to length when shorter.
pub fn crop_or_tile<R: Rng>(
    samples: &[f64],
    target_len: usize,
    mode: SegmentMode<'_, R>,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Data("cannot segment an empty waveform".into()));
    }
    if target_len == 0 {
        return Err(Error::Data("segment length must be positive".into()));
    }
    if samples.len() >= target_len {
        let max_off = samples.len() - target_len;
        let off = match mode {
            SegmentMode::Eval => 0,
            SegmentMode::Train(rng) => {
                if max_off == 0 {
                    0
                } else {
                    rng.random_range(0..=max_off)
                }
            }
        };
        Ok(samples[off..off + target_len].to_vec())
    } else {
        let mut out = Vec::with_capacity(target_len);
        while out.len() < target_len {
            let take = (target_len - out.len()).min(samples.len());
            out.extend_from_slice(&samples[..take]);
        }
        Ok(out)
    }
}
