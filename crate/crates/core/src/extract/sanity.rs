//! Frequency (monobit) and runs tests.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SANITY_BITS: usize = 10_000;
pub const SANITY_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub n: usize,
    /// `|Σ(2b − 1)| / √n`.
    pub monobit_z: f64,
    pub monobit_p: f64,
    /// Number of runs `V`.
    pub runs: u64,
    /// Zero when the frequency prerequisite `|π − ½| < 2/√n` fails.
    pub runs_p: f64,
}

impl SanityReport {
    pub fn monobit_pass(&self) -> bool {
        self.monobit_p >= SANITY_ALPHA
    }

    pub fn runs_pass(&self) -> bool {
        self.runs_p >= SANITY_ALPHA
    }

    pub fn passed(&self) -> bool {
        self.monobit_pass() && self.runs_pass()
    }
}

pub fn sanity_tests(bits: &[u8]) -> Result<SanityReport> {
    let n = bits.len();
    if n < MIN_SANITY_BITS {
        return Err(Error::InsufficientData(format!("{n} bits; sanity tests need at least {MIN_SANITY_BITS}")));
    }
    let nf = n as f64;
    let ones = bits.iter().filter(|&&b| b == 1).count() as f64;
    let s = 2.0 * ones - nf;
    let monobit_z = s.abs() / nf.sqrt();
    let monobit_p = erfc(monobit_z / std::f64::consts::SQRT_2);

    let runs = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count() as u64;
    let pi = ones / nf;
    let runs_p = if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        0.0
    } else {
        let v = runs as f64;
        let q = pi * (1.0 - pi);
        erfc((v - 2.0 * nf * q).abs() / (2.0 * (2.0 * nf).sqrt() * q))
    };
    Ok(SanityReport {
        n,
        monobit_z,
        monobit_p,
        runs,
        runs_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_bits_pass() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let bits: Vec<u8> = (0..200_000).map(|_| rng.random_range(0..2u8)).collect();
        let r = sanity_tests(&bits).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn degenerate_streams_fail() {
        let ones = vec![1u8; 20_000];
        assert!(!sanity_tests(&ones).unwrap().monobit_pass());
        let alt: Vec<u8> = (0..20_000).map(|i| (i % 2) as u8).collect();
        let r = sanity_tests(&alt).unwrap();
        assert!(r.monobit_pass());
        assert!(!r.runs_pass());
        assert!(matches!(sanity_tests(&alt[..100]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn runs_count_and_prerequisite() {
        // 1001101011 has 6 transitions; the 1→1 block boundary adds none. π = 0.6.
        let block = [1u8, 0, 0, 1, 1, 0, 1, 0, 1, 1];
        let bits: Vec<u8> = block.iter().cycle().take(10_000).copied().collect();
        let r = sanity_tests(&bits).unwrap();
        assert_eq!(r.runs, 6001);
        assert_eq!(r.runs_p, 0.0);
    }
}
