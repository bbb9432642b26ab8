//! Coherent-state model, detector sampling kernels and closed-form
//! probabilities.
//!
//! # Quadrature convention
//!
//! Phase-space points are expressed in units of the coherent amplitude
//! `α = √μ·e^{iφ}`. A heterodyne outcome for `|α⟩` is distributed according
//! to the Husimi Q-function: an isotropic Gaussian centred on `α` with
//! variance 1/2 per component. A homodyne outcome along the axis at angle `θ`
//! is Gaussian with mean `Re(α·e^{−iθ})` and vacuum variance 1/4. These are
//! the only choices that reproduce both
//! `p(0|0) = ½(1 + erf|α|)` for heterodyne sign classification and
//! `p(0|0) = ½(1 + erf(√2·|α cos θ|))` for homodyne.
//!
//! Inefficient detection with efficiency `η` scales the mean by `√η` and
//! leaves the noise unchanged.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erf;

use crate::error::{invalid, Error, Result};
use crate::probs::ProbTable;
use crate::rng::{derive_seed, domain, stream_rng, BLOCK_LEN};

/// Per-component variance of a heterodyne outcome.
pub const HETERODYNE_VARIANCE: f64 = 0.5;
/// Variance of a homodyne outcome.
pub const HOMODYNE_VARIANCE: f64 = 0.25;

/// Largest mean photon number for which the energy bound implies an overlap bound.
pub const MAX_CERTIFIABLE_MU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePrep {
    pub mu: f64,
    pub phi: f64,
    pub x: u8,
}

impl StatePrep {
    pub fn new(mu: f64, phi: f64, x: u8) -> Result<Self> {
        let prep = Self { mu, phi, x };
        prep.validate()?;
        Ok(prep)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(invalid(format!("mean photon number {} must be finite and >= 0", self.mu)));
        }
        if !self.phi.is_finite() {
            return Err(invalid("phase must be finite"));
        }
        if self.x > 1 {
            return Err(invalid(format!("input bit {} is not 0 or 1", self.x)));
        }
        Ok(())
    }

    /// Prepared amplitude `(−1)^x·√μ·e^{iφ}`.
    pub fn amplitude(&self) -> PhasePoint {
        PhasePoint::polar(self.mu.sqrt(), self.phi) * sign_of_input(self.x)
    }
}

/// `+1` for `x = 0`, `−1` for `x = 1`.
pub fn sign_of_input(x: u8) -> f64 {
    if x == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A point `β = re + i·im` of the `(X, P)` phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub re: f64,
    pub im: f64,
}

impl PhasePoint {
    pub const ORIGIN: PhasePoint = PhasePoint { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn polar(r: f64, angle: f64) -> Self {
        Self {
            re: r * angle.cos(),
            im: r * angle.sin(),
        }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.re * other.re + self.im * other.im
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    /// Multiply by `e^{iδ}`.
    pub fn rotate(self, delta: f64) -> Self {
        let (s, c) = delta.sin_cos();
        Self {
            re: c * self.re - s * self.im,
            im: s * self.re + c * self.im,
        }
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Add for PhasePoint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for PhasePoint {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul<f64> for PhasePoint {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

impl Neg for PhasePoint {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Heterodyne,
    Homodyne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub eta: f64,
    pub kind: DetectorKind,
    /// Measurement axis of a homodyne detector; ignored for heterodyne.
    pub theta: f64,
}

impl DetectorModel {
    pub fn heterodyne(eta: f64) -> Self {
        Self {
            eta,
            kind: DetectorKind::Heterodyne,
            theta: 0.0,
        }
    }

    pub fn homodyne(eta: f64, theta: f64) -> Self {
        Self {
            eta,
            kind: DetectorKind::Homodyne,
            theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 || self.eta > 1.0 {
            return Err(invalid(format!("efficiency {} outside (0, 1]", self.eta)));
        }
        if !self.theta.is_finite() {
            return Err(invalid("homodyne angle must be finite"));
        }
        Ok(())
    }
}

/// Draw one heterodyne outcome around `mean` (variance 1/2 per quadrature).
pub fn heterodyne_outcome<R: Rng + ?Sized>(rng: &mut R, mean: PhasePoint) -> PhasePoint {
    let dx: f64 = rng.sample(StandardNormal);
    let dp: f64 = rng.sample(StandardNormal);
    PhasePoint::new(mean.re + FRAC_1_SQRT_2 * dx, mean.im + FRAC_1_SQRT_2 * dp)
}

fn check_sampling(prep: &StatePrep, det: &DetectorModel, want: DetectorKind, n: usize) -> Result<()> {
    prep.validate()?;
    det.validate()?;
    if det.kind != want {
        return Err(invalid(format!("detector kind {:?} cannot be sampled as {:?}", det.kind, want)));
    }
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    Ok(())
}

/// `n` heterodyne outcomes for a fixed preparation. Deterministic in `rng_seed`.
pub fn sample_heterodyne(prep: &StatePrep, det: &DetectorModel, rng_seed: u64, n: usize) -> Result<Vec<PhasePoint>> {
    check_sampling(prep, det, DetectorKind::Heterodyne, n)?;
    let mean = prep.amplitude() * det.eta.sqrt();
    let seed = derive_seed(rng_seed, domain::NOISE);
    let mut out = vec![PhasePoint::ORIGIN; n];
    out.par_chunks_mut(BLOCK_LEN).enumerate().for_each(|(block, chunk)| {
        let mut rng = stream_rng(seed, block as u64);
        for p in chunk.iter_mut() {
            *p = heterodyne_outcome(&mut rng, mean);
        }
    });
    Ok(out)
}

/// `n` homodyne outcomes along the detector axis `θ`.
pub fn sample_homodyne(prep: &StatePrep, det: &DetectorModel, rng_seed: u64, n: usize) -> Result<Vec<f64>> {
    check_sampling(prep, det, DetectorKind::Homodyne, n)?;
    let mean = det.eta.sqrt() * prep.amplitude().rotate(-det.theta).re;
    let normal = Normal::new(mean, HOMODYNE_VARIANCE.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let seed = derive_seed(rng_seed, domain::HOMODYNE);
    let mut out = vec![0.0; n];
    out.par_chunks_mut(BLOCK_LEN).enumerate().for_each(|(block, chunk)| {
        let mut rng = stream_rng(seed, block as u64);
        for v in chunk.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    });
    Ok(out)
}

fn symmetric_table(e: f64) -> ProbTable {
    let success = 0.5 * (1.0 + e);
    let fail = 0.5 * (1.0 - e);
    ProbTable {
        p_bx: [[success, fail], [fail, success]],
        n_x: None,
    }
}

/// Honest heterodyne probabilities for amplitude `|α|` with the bisector classifier.
pub fn prob_heterodyne(alpha_mag: f64) -> ProbTable {
    symmetric_table(erf(alpha_mag.abs()))
}

/// Honest homodyne probabilities for amplitude `|α|` measured at angle `θ`.
pub fn prob_homodyne(alpha_mag: f64, theta: f64) -> ProbTable {
    symmetric_table(erf(std::f64::consts::SQRT_2 * (alpha_mag * theta.cos()).abs()))
}

fn check_certifiable_mu(mu: f64) -> Result<()> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(invalid(format!("mean photon number {mu} must be finite and >= 0")));
    }
    if mu > MAX_CERTIFIABLE_MU {
        return Err(Error::AssumptionViolated(format!(
            "energy bound mu = {mu} exceeds {MAX_CERTIFIABLE_MU}; the overlap bound does not hold"
        )));
    }
    Ok(())
}

/// Lower bound `1 − 2√(μ − μ²)` on `p(1|0) + p(0|1)` for states of energy at most `μ`.
pub fn discrimination_bound(mu: f64) -> Result<f64> {
    check_certifiable_mu(mu)?;
    Ok(1.0 - 2.0 * (mu - mu * mu).max(0.0).sqrt())
}

/// Overlap lower bound `Λ = 1 − 2μ` implied by the energy bound.
pub fn overlap_from_energy(mu: f64) -> Result<f64> {
    check_certifiable_mu(mu)?;
    Ok(1.0 - 2.0 * mu)
}

/// `|⟨α|−α⟩| = e^{−2|α|²}`, the actual overlap of the two prepared coherent states.
pub fn coherent_overlap(mu: f64) -> f64 {
    (-2.0 * mu).exp()
}
