//! Experiment simulator: pseudo-random inputs, signal/LO phase drift and one
//! heterodyne outcome per round.

mod file;

pub use file::{read_trials, write_trials, write_trials_csv, TRIAL_MAGIC, TRIAL_VERSION};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::phase_space::{heterodyne_outcome, sign_of_input, PhasePoint};
use crate::rng::{derive_seed, domain, stream_rng, BLOCK_LEN};

/// Repetition rate of the source, rounds per second.
pub const DEFAULT_REP_RATE: f64 = 1.25e9;
/// Average signal/LO drift of the free-running interferometer, degrees per second.
pub const DEFAULT_DRIFT_DEG_PER_S: f64 = 32.0;

/// Signal/LO phase as a function of time: a linear drift plus optional
/// Wiener diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// rad/s
    pub rate: f64,
    /// rad/√s
    pub diffusion: f64,
    /// rad
    pub phi0: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            rate: DEFAULT_DRIFT_DEG_PER_S.to_radians(),
            diffusion: 0.0,
            phi0: 0.0,
        }
    }
}

impl DriftModel {
    pub fn none(phi0: f64) -> Self {
        Self {
            rate: 0.0,
            diffusion: 0.0,
            phi0,
        }
    }

    pub fn linear_deg_per_s(deg_per_s: f64) -> Self {
        Self {
            rate: deg_per_s.to_radians(),
            ..Self::none(0.0)
        }
    }

    /// Deterministic part of the phase at round `t`.
    pub fn deterministic_phase(&self, t: u64, rep_rate: f64) -> f64 {
        self.phi0 + self.rate * t as f64 / rep_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mu: f64,
    pub eta: f64,
    pub rep_rate: f64,
    pub n_rounds: u64,
    pub drift: DriftModel,
    pub rng_seed: u64,
}

impl RunConfig {
    pub fn new(mu: f64, eta: f64, n_rounds: u64, rng_seed: u64) -> Self {
        Self {
            mu,
            eta,
            rep_rate: DEFAULT_REP_RATE,
            n_rounds,
            drift: DriftModel::default(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(invalid(format!("mu = {} must be finite and >= 0", self.mu)));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 || self.eta > 1.0 {
            return Err(invalid(format!("eta = {} outside (0, 1]", self.eta)));
        }
        if !self.rep_rate.is_finite() || self.rep_rate <= 0.0 {
            return Err(invalid("repetition rate must be positive"));
        }
        if self.n_rounds == 0 {
            return Err(invalid("a run needs at least one round"));
        }
        let d = &self.drift;
        if !(d.rate.is_finite() && d.phi0.is_finite() && d.diffusion.is_finite()) || d.diffusion < 0.0 {
            return Err(invalid("drift parameters must be finite with diffusion >= 0"));
        }
        Ok(())
    }
}

/// One protocol round. `b` stays `None` until the tracker classifies it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub x: u8,
    pub point: PhasePoint,
    pub b: Option<u8>,
}

/// `n` i.i.d. uniform input bits.
pub fn generate_inputs(n: usize, rng_seed: u64) -> Vec<u8> {
    let seed = derive_seed(rng_seed, domain::INPUTS);
    let mut bits = vec![0u8; n];
    bits.par_chunks_mut(BLOCK_LEN).enumerate().for_each(|(block, chunk)| {
        let mut rng = stream_rng(seed, block as u64);
        for word in chunk.chunks_mut(64) {
            let w: u64 = rng.random();
            for (k, bit) in word.iter_mut().enumerate() {
                *bit = ((w >> k) & 1) as u8;
            }
        }
    });
    bits
}

/// Phase of every round, integrating the Wiener component sequentially.
pub fn phase_trajectory(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.n_rounds as usize;
    let mut phases: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|t| cfg.drift.deterministic_phase(t, cfg.rep_rate))
        .collect();
    if cfg.drift.diffusion > 0.0 {
        let step = cfg.drift.diffusion / cfg.rep_rate.sqrt();
        let mut rng = stream_rng(derive_seed(cfg.rng_seed, domain::DIFFUSION), 0);
        let mut walk = 0.0;
        for phase in phases.iter_mut().skip(1) {
            let z: f64 = rng.sample(StandardNormal);
            walk += step * z;
            *phase += walk;
        }
    }
    phases
}

/// Simulate `cfg.n_rounds` rounds. Records come back ordered by index with
/// outcomes unassigned.
pub fn simulate_run(cfg: &RunConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let n = cfg.n_rounds as usize;
    let inputs = generate_inputs(n, cfg.rng_seed);
    let diffusive = cfg.drift.diffusion > 0.0;
    let phases = if diffusive { phase_trajectory(cfg) } else { Vec::new() };
    let amp = (cfg.eta * cfg.mu).sqrt();
    let noise_seed = derive_seed(cfg.rng_seed, domain::NOISE);

    let mut records = vec![
        TrialRecord {
            index: 0,
            x: 0,
            point: PhasePoint::ORIGIN,
            b: None,
        };
        n
    ];
    records.par_chunks_mut(BLOCK_LEN).enumerate().for_each(|(block, chunk)| {
        let mut rng = stream_rng(noise_seed, block as u64);
        let start = block * BLOCK_LEN;
        for (k, rec) in chunk.iter_mut().enumerate() {
            let t = start + k;
            let phi = if diffusive {
                phases[t]
            } else {
                cfg.drift.deterministic_phase(t as u64, cfg.rep_rate)
            };
            let x = inputs[t];
            let mean = PhasePoint::polar(amp * sign_of_input(x), phi);
            *rec = TrialRecord {
                index: t as u64,
                x,
                point: heterodyne_outcome(&mut rng, mean),
                b: None,
            };
        }
    });
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_balanced_and_reproducible() {
        let bits = generate_inputs(1_000_000, 5);
        let mean = bits.iter().map(|&b| b as f64).sum::<f64>() / bits.len() as f64;
        assert!((0.498..=0.502).contains(&mean), "mean {mean}");
        assert_eq!(bits, generate_inputs(1_000_000, 5));
        assert_ne!(bits[..256], generate_inputs(256, 6)[..]);
        let one = generate_inputs(1, 9);
        assert_eq!(one.len(), 1);
        assert!(one[0] <= 1);
    }

    #[test]
    fn input_bias_within_concentration_bound() {
        for seed in 0..5 {
            let n = 10_000;
            let bits = generate_inputs(n, seed);
            let mean = bits.iter().map(|&b| b as f64).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() <= 4.0 / (2.0 * (n as f64).sqrt()));
        }
    }

    fn lobe_means(recs: &[TrialRecord]) -> [PhasePoint; 2] {
        let mut sum = [PhasePoint::ORIGIN; 2];
        let mut n = [0usize; 2];
        for r in recs {
            sum[r.x as usize] = sum[r.x as usize] + r.point;
            n[r.x as usize] += 1;
        }
        [sum[0] * (1.0 / n[0] as f64), sum[1] * (1.0 / n[1] as f64)]
    }

    #[test]
    fn static_phase_lobes_mirror() {
        let mut cfg = RunConfig::new(0.3, 1.0, 200_000, 1);
        cfg.drift = DriftModel::none(0.7);
        let recs = simulate_run(&cfg).unwrap();
        let [m0, m1] = lobe_means(&recs);
        let expect = PhasePoint::polar(0.3f64.sqrt(), 0.7);
        assert!((m0 - expect).norm() < 0.01);
        assert!((m1 + expect).norm() < 0.01);
        assert!(recs.iter().enumerate().all(|(i, r)| r.index == i as u64 && r.b.is_none()));
    }

    #[test]
    fn vacuum_lobes_coincide() {
        let mut cfg = RunConfig::new(0.0, 1.0, 200_000, 2);
        cfg.drift = DriftModel::none(0.0);
        let [m0, m1] = lobe_means(&simulate_run(&cfg).unwrap());
        assert!((m0 - m1).norm() < 0.012);
    }

    #[test]
    fn default_drift_is_quasi_static_within_chunk() {
        let drift = DriftModel::default();
        assert!((drift.rate - 0.558_505_360_638_185).abs() < 1e-12);
        let spread = drift.deterministic_phase(999, DEFAULT_REP_RATE) - drift.deterministic_phase(0, DEFAULT_REP_RATE);
        assert!(spread < 1e-5);
        let per_1000 = drift.rate * 1000.0 / DEFAULT_REP_RATE;
        assert!((per_1000 - 4.468e-7).abs() < 1e-9);
    }

    #[test]
    fn energy_accounting() {
        let cfg = RunConfig::new(0.4, 0.6, 400_000, 3);
        let recs = simulate_run(&cfg).unwrap();
        let e: Vec<f64> = recs.iter().map(|r| r.point.norm_sqr()).collect();
        let n = e.len() as f64;
        let m = e.iter().sum::<f64>() / n;
        let sd = (e.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = 0.6 * 0.4 + 1.0;
        assert!((m - expected).abs() < 5.0 * sd / n.sqrt(), "{m} vs {expected}");
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = RunConfig::new(0.2, 0.9, 150_000, 77);
        cfg.drift.diffusion = 0.3;
        assert_eq!(simulate_run(&cfg).unwrap(), simulate_run(&cfg).unwrap());
    }

    #[test]
    fn diffusion_phase_variance() {
        let mut cfg = RunConfig::new(0.2, 1.0, 100_000, 8);
        cfg.drift = DriftModel {
            rate: 0.0,
            diffusion: 2000.0,
            phi0: 0.0,
        };
        let traj = phase_trajectory(&cfg);
        assert_eq!(traj[0], 0.0);
        // Var[W(t)] = diffusion²·t; check increments over the whole path.
        let incs: Vec<f64> = traj.windows(2).map(|w| w[1] - w[0]).collect();
        let var = incs.iter().map(|d| d * d).sum::<f64>() / incs.len() as f64;
        let expect = 2000.0f64.powi(2) / cfg.rep_rate;
        assert!((var / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn invalid_configs() {
        assert!(simulate_run(&RunConfig::new(0.2, 1.0, 0, 0)).is_err());
        assert!(simulate_run(&RunConfig::new(-0.2, 1.0, 10, 0)).is_err());
        assert!(simulate_run(&RunConfig::new(0.2, 1.5, 10, 0)).is_err());
        let mut cfg = RunConfig::new(0.2, 1.0, 10, 0);
        cfg.rep_rate = 0.0;
        assert!(simulate_run(&cfg).is_err());
        cfg.rep_rate = 1.0;
        cfg.drift.diffusion = -1.0;
        assert!(simulate_run(&cfg).is_err());
    }
}
