use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdiq::acquisition::{DriftModel, RunConfig, DEFAULT_REP_RATE};
use sdiq::certify::CertifyOptions;
use sdiq::extract::DEFAULT_EPSILON_RE;
use sdiq::tracking::DEFAULT_CHUNK_SIZE;

use crate::error::CliError;

/// Every parameter of every subcommand. Loaded from a JSON file, then
/// overridden by flags; the resolved value is written into each manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub output_dir: PathBuf,

    pub mu: f64,
    pub eta: f64,
    pub rounds: u64,
    pub rep_rate: f64,
    pub drift_deg_s: f64,
    /// Wiener standard deviation, degrees per √second.
    pub diffusion_deg_sqrt_s: f64,
    pub phi0_deg: f64,
    pub trials_csv: bool,

    pub chunk_size: usize,

    pub epsilon: f64,
    pub epsilon_re: f64,
    pub finite_size: bool,
    pub mu_inflation: f64,

    /// Raw bits per Toeplitz block.
    pub block_bits: usize,

    pub sweep_mu: Vec<f64>,
    pub sweep_eta: f64,
    pub sweep_theta_deg: Vec<f64>,

    pub paths: Paths,
}

/// Optional explicit locations; unset ones default to files in `output_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub trials: Option<PathBuf>,
    pub classified: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    pub certificate: Option<PathBuf>,
    pub seed_file: Option<PathBuf>,
}

pub fn default_mu_grid() -> Vec<f64> {
    (2..=100).map(|k| k as f64 * 0.005).collect()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: None,
            output_dir: PathBuf::from("sdiq-out"),
            mu: 0.065,
            eta: 1.0,
            rounds: 1_000_000,
            rep_rate: DEFAULT_REP_RATE,
            drift_deg_s: 32.0,
            diffusion_deg_sqrt_s: 0.0,
            phi0_deg: 0.0,
            trials_csv: false,
            chunk_size: DEFAULT_CHUNK_SIZE,
            epsilon: 1e-10,
            epsilon_re: DEFAULT_EPSILON_RE,
            finite_size: false,
            mu_inflation: 1.0,
            block_bits: 1 << 16,
            sweep_mu: default_mu_grid(),
            sweep_eta: 0.173,
            sweep_theta_deg: vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            paths: Paths::default(),
        }
    }
}

pub const TRIALS_FILE: &str = "trials.sdiq";
pub const SIMULATE_MANIFEST: &str = "simulate.json";
pub const CLASSIFIED_FILE: &str = "classified.sdiq";
pub const CHUNKS_CSV: &str = "chunks.csv";
pub const COUNTS_FILE: &str = "counts.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const EXTRACTED_FILE: &str = "extracted.bin";
pub const SEED_OUT_FILE: &str = "extractor_seed.bin";
pub const EXTRACT_MANIFEST: &str = "extract.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_THETA_CSV: &str = "sweep_theta_max.csv";

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn trials_path(&self) -> PathBuf {
        self.paths.trials.clone().unwrap_or_else(|| self.out(TRIALS_FILE))
    }

    pub fn classified_path(&self) -> PathBuf {
        self.paths.classified.clone().unwrap_or_else(|| self.out(CLASSIFIED_FILE))
    }

    pub fn counts_path(&self) -> PathBuf {
        self.paths.counts.clone().unwrap_or_else(|| self.out(COUNTS_FILE))
    }

    pub fn certificate_path(&self) -> PathBuf {
        self.paths.certificate.clone().unwrap_or_else(|| self.out(CERTIFICATE_FILE))
    }

    pub fn run_config(&self) -> RunConfig {
        let mut rc = RunConfig::new(self.mu, self.eta, self.rounds, self.seed);
        rc.rep_rate = self.rep_rate;
        rc.drift = DriftModel {
            rate: self.drift_deg_s.to_radians(),
            diffusion: self.diffusion_deg_sqrt_s.to_radians(),
            phi0: self.phi0_deg.to_radians(),
        };
        rc
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            epsilon: self.epsilon,
            epsilon_re: self.epsilon_re,
            finite_size: self.finite_size,
            mu_inflation: self.mu_inflation,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::usage(m));
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.chunk_size == 0 {
            return bad("chunk size must be at least 1".into());
        }
        if self.block_bits == 0 {
            return bad("block size must be at least 1 bit".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.sweep_mu.is_empty() || self.sweep_theta_deg.is_empty() {
            return bad("sweep grids must be non-empty".into());
        }
        for (name, v) in [
            ("mu", self.mu),
            ("eta", self.eta),
            ("rep rate", self.rep_rate),
            ("drift", self.drift_deg_s),
            ("diffusion", self.diffusion_deg_sqrt_s),
            ("epsilon", self.epsilon),
            ("epsilon_re", self.epsilon_re),
            ("mu inflation", self.mu_inflation),
            ("sweep eta", self.sweep_eta),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        let mut paths: Vec<PathBuf> = vec![self.trials_path(), self.classified_path(), self.counts_path(), self.certificate_path()];
        if let Some(s) = &self.paths.seed_file {
            paths.push(s.clone());
        }
        paths.extend([EXTRACTED_FILE, SEED_OUT_FILE, EXTRACT_MANIFEST].map(|n| self.out(n)));
        for i in 0..paths.len() {
            for j in 0..i {
                if paths[i] == paths[j] {
                    return bad(format!("path {} is used for two different files", paths[i].display()));
                }
            }
        }
        Ok(())
    }
}

/// Integer count accepting scientific notation (`1e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64) {
        return Err(format!("'{s}' is not a non-negative integer"));
    }
    Ok(f as u64)
}
