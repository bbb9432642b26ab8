//! Toeplitz-hash randomness extraction.
//!
//! Bits are `u8` values 0/1 at the API boundary. The Toeplitz matrix is
//! `T[i][j] = seed[i − j + n_in − 1]`; for `n_in = 3, n_out = 2` and seed
//! bits `s0 s1 s2 s3`:
//!
//! ```text
//! T = [[s2, s1, s0],
//!      [s3, s2, s1]]
//! ```

mod bits;
mod sanity;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bits::{pack_bits, read_bits, unpack_bits, write_bits, ExtractionManifest};
pub use sanity::{sanity_tests, SanityReport, MIN_SANITY_BITS, SANITY_ALPHA};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_EPSILON_RE: f64 = 1e-10;

/// `floor(n_in·h − 2·log2(1/ε_RE))`, clamped at 0.
pub fn output_length(n_in: u64, hmin_rate: f64, epsilon_re: f64) -> u64 {
    if hmin_rate.is_nan() || hmin_rate <= 0.0 || !(epsilon_re > 0.0 && epsilon_re < 1.0) {
        return 0;
    }
    let raw = n_in as f64 * hmin_rate.min(1.0) - 2.0 * (1.0 / epsilon_re).log2();
    if raw <= 0.0 {
        0
    } else {
        raw.floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub n_in: usize,
    pub n_out: usize,
    pub epsilon_re: f64,
}

impl ExtractorParams {
    /// Parameters with the maximal admissible output length.
    pub fn for_rate(n_in: usize, hmin_rate: f64, epsilon_re: f64) -> Result<Self> {
        let n_out = output_length(n_in as u64, hmin_rate, epsilon_re) as usize;
        if n_out == 0 {
            return Err(Error::InsufficientData(format!(
                "{n_in} raw bits at {hmin_rate} bits/round cannot pay the 2·log2(1/{epsilon_re}) extraction penalty"
            )));
        }
        Ok(Self { n_in, n_out, epsilon_re })
    }

    pub fn seed_bits(&self) -> usize {
        self.n_in + self.n_out - 1
    }

    fn check(&self, raw: &[u8], seed: &[u8]) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 {
            return Err(invalid("extractor sizes must be at least 1"));
        }
        if raw.len() != self.n_in {
            return Err(invalid(format!("raw input has {} bits, expected {}", raw.len(), self.n_in)));
        }
        if seed.len() != self.seed_bits() {
            return Err(invalid(format!("seed has {} bits, expected {}", seed.len(), self.seed_bits())));
        }
        if raw.iter().chain(seed).any(|&b| b > 1) {
            return Err(invalid("bit sequences must contain only 0 and 1"));
        }
        Ok(())
    }
}

fn pack_words(bits: impl Iterator<Item = u8>, len: usize, pad_words: usize) -> Vec<u64> {
    let mut words = vec![0u64; len.div_ceil(64) + pad_words];
    for (i, b) in bits.enumerate() {
        words[i / 64] |= (b as u64) << (i % 64);
    }
    words
}

/// `out_i = ⊕_j T[i][j]·raw[j]`, computed as the parity of the seed window
/// starting at `i` against the reversed input, 64 bits at a time.
pub fn toeplitz_hash(raw: &[u8], seed: &[u8], params: &ExtractorParams) -> Result<Vec<u8>> {
    params.check(raw, seed)?;
    let n_in = params.n_in;
    let rev = pack_words(raw.iter().rev().copied(), n_in, 0);
    let seed_w = pack_words(seed.iter().copied(), seed.len(), 1);
    let out = (0..params.n_out)
        .into_par_iter()
        .map(|i| {
            let (base, shift) = (i / 64, i % 64);
            let mut acc = 0u64;
            for (q, &r) in rev.iter().enumerate() {
                let lo = seed_w[base + q];
                let window = if shift == 0 { lo } else { (lo >> shift) | (seed_w[base + q + 1] << (64 - shift)) };
                acc ^= window & r;
            }
            (acc.count_ones() & 1) as u8
        })
        .collect();
    Ok(out)
}

/// Hashes consecutive `block_bits`-sized blocks of `raw` with the same seed
/// and concatenates the outputs. A trailing partial block is dropped.
pub fn hash_blocks(raw: &[u8], seed: &[u8], params: &ExtractorParams) -> Result<Vec<u8>> {
    let n_blocks = raw.len() / params.n_in;
    if n_blocks == 0 {
        return Err(Error::InsufficientData(format!(
            "{} raw bits do not fill one {}-bit block",
            raw.len(),
            params.n_in
        )));
    }
    let mut out = Vec::with_capacity(n_blocks * params.n_out);
    for block in raw.chunks_exact(params.n_in) {
        out.extend(toeplitz_hash(block, seed, params)?);
    }
    Ok(out)
}
