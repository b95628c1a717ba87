//! Named, counter-addressed random streams derived from one master seed.
//!
//! A stream is a ChaCha8 generator keyed by (seed, stream name) and
//! positioned on the ChaCha stream id given by the index, so path k of a
//! run draws the same numbers no matter which thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ForwardPath,
    UpperBound,
    Trial,
    Saa,
    KMeans,
    Dsa,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::ForwardPath => "forward-path",
            Stream::UpperBound => "upper-bound",
            Stream::Trial => "trial",
            Stream::Saa => "saa",
            Stream::KMeans => "k-means",
            Stream::Dsa => "dsa",
        }
    }

    pub const ALL: [Stream; 6] = [
        Stream::ForwardPath,
        Stream::UpperBound,
        Stream::Trial,
        Stream::Saa,
        Stream::KMeans,
        Stream::Dsa,
    ];
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let tag = stream.name().bytes().fold(0u64, |h, b| mix(h ^ b as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed) ^ tag);
    rng.set_stream(index);
    rng
}

/// Inverse-CDF draw over a probability vector (lowest index on the boundary).
pub fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u in the rounding gap below 1.0: last atom with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

pub fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    inverse_cdf(probs, u)
}
