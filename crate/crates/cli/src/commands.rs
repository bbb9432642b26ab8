use std::path::Path;

use rand::TryRngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdiq::acquisition::{read_trials, simulate_run, write_trials, write_trials_csv};
use sdiq::certify::{certify, Certificate};
use sdiq::extract::{
    hash_blocks, pack_bits, sanity_tests, unpack_bits, write_bits, ExtractionManifest, ExtractorParams, SanityReport,
    MIN_SANITY_BITS,
};
use sdiq::tracking::{track, write_chunk_csv, ConditionalCounts, UnusableChunk};
use sdiq::ProbTable;

use crate::config::*;
use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn ensure_output_dir(cfg: &PipelineConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.output_dir.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub config: PipelineConfig,
    pub n_records: u64,
    pub trials_sha256: String,
}

pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<SimulateManifest, CliError> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let records = simulate_run(&cfg.run_config())?;
    let path = cfg.trials_path();
    write_trials(&records, &path)?;
    if cfg.trials_csv {
        write_trials_csv(&records, path.with_extension("csv"))?;
    }
    let manifest = SimulateManifest {
        config: cfg.clone(),
        n_records: records.len() as u64,
        trials_sha256: file_digest(&path)?,
    };
    write_json(&manifest, &cfg.out(SIMULATE_MANIFEST))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsDocument {
    pub counts: ConditionalCounts,
    pub table: ProbTable,
    pub chunk_size: usize,
    pub usable_chunks: usize,
    pub unusable_chunks: Vec<UnusableChunk>,
    pub excluded_records: usize,
    pub classified_sha256: String,
}

pub fn cmd_track(cfg: &PipelineConfig) -> Result<CountsDocument, CliError> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let input = cfg.trials_path();
    let mut records = read_trials(&input).map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    if records.is_empty() {
        return Err(CliError::data(format!("{} holds no records", input.display())));
    }
    let report = track(&mut records, cfg.chunk_size)?;
    let out = cfg.classified_path();
    write_trials(&records, &out)?;
    write_chunk_csv(&report.summaries, cfg.out(CHUNKS_CSV))?;
    let doc = CountsDocument {
        counts: report.counts,
        table: report.counts.to_table()?,
        chunk_size: cfg.chunk_size,
        usable_chunks: report.summaries.len(),
        excluded_records: report.excluded_records(),
        unusable_chunks: report.unusable,
        classified_sha256: file_digest(&out)?,
    };
    write_json(&doc, &cfg.counts_path())?;
    Ok(doc)
}

pub fn cmd_certify(cfg: &PipelineConfig) -> Result<Certificate, CliError> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let doc: CountsDocument = read_json(&cfg.counts_path())?;
    let table = doc.counts.to_table()?;
    let cert = certify(&table, cfg.mu, &cfg.certify_options())?;
    write_json(&cert, &cfg.certificate_path())?;
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub manifest: ExtractionManifest,
    pub sanity: Option<SanityReport>,
}

fn extractor_seed(cfg: &PipelineConfig, n_bits: usize) -> Result<Vec<u8>, CliError> {
    let bytes = match &cfg.paths.seed_file {
        Some(path) => std::fs::read(path).map_err(|e| CliError::data(format!("seed file {}: {e}", path.display())))?,
        None => {
            let mut buf = vec![0u8; n_bits.div_ceil(8)];
            rand::rngs::OsRng
                .try_fill_bytes(&mut buf)
                .map_err(|e| CliError::data(format!("platform entropy source: {e}")))?;
            buf
        }
    };
    unpack_bits(&bytes, n_bits).map_err(|_| {
        CliError::data(format!("seed needs {n_bits} bits but only {} bytes are available", bytes.len()))
    })
}

/// Hashes the classified outcome bits. The seed actually used is written to
/// the output directory so the run can be repeated with `seed_file`.
pub fn cmd_extract(cfg: &PipelineConfig) -> Result<ExtractReport, CliError> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let input = cfg.classified_path();
    let records = read_trials(&input).map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    let raw: Vec<u8> = records.iter().filter_map(|r| r.b).collect();
    if raw.is_empty() {
        return Err(CliError::data(format!("{} has no classified outcomes", input.display())));
    }
    let cert_path = cfg.certificate_path();
    let cert: Certificate = read_json(&cert_path)?;

    let n_in = cfg.block_bits.min(raw.len());
    let params = ExtractorParams::for_rate(n_in, cert.hmin_rate, cfg.epsilon_re)?;
    let seed = extractor_seed(cfg, params.seed_bits())?;
    let out = hash_blocks(&raw, &seed, &params)?;

    let packed_seed = pack_bits(&seed);
    std::fs::write(cfg.out(SEED_OUT_FILE), &packed_seed)?;
    write_bits(&out, cfg.out(EXTRACTED_FILE))?;
    let sanity = if out.len() >= MIN_SANITY_BITS { Some(sanity_tests(&out)?) } else { None };
    let manifest = ExtractionManifest {
        n_in: params.n_in,
        n_out: params.n_out,
        n_blocks: raw.len() / params.n_in,
        total_out: out.len(),
        epsilon_re: params.epsilon_re,
        hmin_rate: cert.hmin_rate,
        seed_bits: params.seed_bits(),
        certificate_sha256: file_digest(&cert_path)?,
        seed_sha256: sha256_hex(&packed_seed),
        output_sha256: sha256_hex(&pack_bits(&out)),
    };
    let report = ExtractReport { manifest, sanity };
    write_json(&report, &cfg.out(EXTRACT_MANIFEST))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub simulate: SimulateManifest,
    pub counts: CountsDocument,
    pub certificate: Certificate,
    pub extract: ExtractReport,
}

/// simulate → track → certify → extract with one configuration.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, CliError> {
    Ok(PipelineRun {
        simulate: cmd_simulate(cfg)?,
        counts: cmd_track(cfg)?,
        certificate: cmd_certify(cfg)?,
        extract: cmd_extract(cfg)?,
    })
}
