//! Packed bit streams: bit `i` is bit `i % 8` (least significant first) of byte `i / 8`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n_bits: usize) -> Result<Vec<u8>> {
    if bytes.len() * 8 < n_bits {
        return Err(Error::Format(format!("{} bytes hold fewer than {n_bits} bits", bytes.len())));
    }
    Ok((0..n_bits).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect())
}

pub fn write_bits(bits: &[u8], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, pack_bits(bits))?;
    Ok(())
}

pub fn read_bits(path: impl AsRef<Path>, n_bits: usize) -> Result<Vec<u8>> {
    unpack_bits(&std::fs::read(path)?, n_bits)
}

/// Run record written next to the extracted bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionManifest {
    /// Raw bits per hashed block.
    pub n_in: usize,
    /// Output bits per hashed block.
    pub n_out: usize,
    pub n_blocks: usize,
    pub total_out: usize,
    pub epsilon_re: f64,
    pub hmin_rate: f64,
    pub seed_bits: usize,
    pub certificate_sha256: String,
    pub seed_sha256: String,
    pub output_sha256: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn little_endian_layout() {
        assert_eq!(pack_bits(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 1]), vec![0x01, 0x02]);
        assert_eq!(pack_bits(&[0, 0, 0, 0, 0, 0, 0, 1]), vec![0x80]);
        assert!(unpack_bits(&[0xff], 9).is_err());
    }

    proptest! {
        #[test]
        fn pack_roundtrip(bits in proptest::collection::vec(0u8..2, 0..200)) {
            prop_assert_eq!(unpack_bits(&pack_bits(&bits), bits.len()).unwrap(), bits);
        }
    }
}
