//! Software phase tracking and outcome assignment.
//!
//! The stream is cut into chunks short enough for the signal/LO phase to be
//! constant. Within a chunk the centroids `C0`, `C1` of the two input lobes
//! are estimated, and every point is assigned `b = 0` when it lies on the
//! `C0` side of the perpendicular bisector of `C0C1`, `b = 1` otherwise.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::TrialRecord;
use crate::error::{invalid, Error, Result};
use crate::phase_space::PhasePoint;
use crate::probs::ProbTable;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkSummary {
    pub chunk_index: usize,
    /// Centroid of the `x = 0` points.
    pub c0: PhasePoint,
    /// Centroid of the `x = 1` points.
    pub c1: PhasePoint,
    /// Phase of the `x = 0` lobe, i.e. `arg((c0 − c1)/2)`.
    pub phi_hat: f64,
    pub n_in_chunk: usize,
}

/// Why a chunk was left out of the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkIssue {
    /// No record with this input value in the chunk.
    MissingInput(u8),
    /// `c0 == c1`, so there is no bisector.
    DegenerateCentroids,
    Empty,
}

/// Centroids and phase estimate of one chunk.
pub fn summarize_chunk(records: &[TrialRecord], chunk_index: usize) -> std::result::Result<ChunkSummary, ChunkIssue> {
    if records.is_empty() {
        return Err(ChunkIssue::Empty);
    }
    let mut sum = [PhasePoint::ORIGIN; 2];
    let mut n = [0usize; 2];
    for r in records {
        let x = r.x as usize;
        sum[x] = sum[x] + r.point;
        n[x] += 1;
    }
    for x in 0..2 {
        if n[x] == 0 {
            return Err(ChunkIssue::MissingInput(x as u8));
        }
    }
    let c0 = sum[0] * (1.0 / n[0] as f64);
    let c1 = sum[1] * (1.0 / n[1] as f64);
    Ok(ChunkSummary {
        chunk_index,
        c0,
        c1,
        phi_hat: ((c0 - c1) * 0.5).arg(),
        n_in_chunk: records.len(),
    })
}

/// Shift each phase by a multiple of 2π so that consecutive differences lie in (−π, π].
pub fn unwrap_phases(mut summaries: Vec<ChunkSummary>) -> Vec<ChunkSummary> {
    for i in 1..summaries.len() {
        let prev = summaries[i - 1].phi_hat;
        let d = summaries[i].phi_hat - prev;
        let turns = ((d - PI) / (2.0 * PI)).ceil();
        summaries[i].phi_hat = prev + d - 2.0 * PI * turns;
    }
    summaries
}

/// Assign outcomes with the bisector of `c0c1`; points on the bisector get `b = 0`.
pub fn classify(records: &mut [TrialRecord], summary: &ChunkSummary) -> std::result::Result<(), ChunkIssue> {
    let axis = summary.c0 - summary.c1;
    if axis.norm_sqr() == 0.0 || !axis.is_finite() {
        return Err(ChunkIssue::DegenerateCentroids);
    }
    let mid = (summary.c0 + summary.c1) * 0.5;
    for r in records.iter_mut() {
        r.b = Some(if (r.point - mid).dot(axis) >= 0.0 { 0 } else { 1 });
    }
    Ok(())
}

/// Ablation classifier: sign of the quadrature along a fixed axis `theta`,
/// as a phase-locked homodyne receiver would see it. No tracking.
pub fn classify_fixed_axis(records: &mut [TrialRecord], theta: f64) {
    for r in records.iter_mut() {
        r.b = Some(if r.point.rotate(-theta).re >= 0.0 { 0 } else { 1 });
    }
}

/// Event counts `n_{b,x}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionalCounts {
    pub n_bx: [[u64; 2]; 2],
}

impl ConditionalCounts {
    pub fn n_x(&self) -> [u64; 2] {
        [self.n_bx[0][0] + self.n_bx[1][0], self.n_bx[0][1] + self.n_bx[1][1]]
    }

    pub fn total(&self) -> u64 {
        self.n_x().iter().sum()
    }

    pub fn add(&mut self, b: u8, x: u8) {
        self.n_bx[b as usize][x as usize] += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for b in 0..2 {
            for x in 0..2 {
                self.n_bx[b][x] += other.n_bx[b][x];
            }
        }
        self
    }

    /// Estimated probabilities `p̃(b|x) = n_{b,x} / n_x`, carrying the sample sizes.
    pub fn to_table(&self) -> Result<ProbTable> {
        let n_x = self.n_x();
        if n_x.contains(&0) {
            return Err(Error::InsufficientData(format!("no events for one input value: n_x = {n_x:?}")));
        }
        let p = |b: usize, x: usize| self.n_bx[b][x] as f64 / n_x[x] as f64;
        Ok(ProbTable {
            p_bx: [[p(0, 0), p(0, 1)], [p(1, 0), p(1, 1)]],
            n_x: Some(n_x),
        })
    }
}

pub fn accumulate(records: &[TrialRecord]) -> Result<ConditionalCounts> {
    let mut counts = ConditionalCounts::default();
    for r in records {
        let b = r.b.ok_or_else(|| invalid(format!("record {} has no outcome", r.index)))?;
        counts.add(b, r.x);
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnusableChunk {
    pub chunk_index: usize,
    pub issue: ChunkIssue,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    /// Summaries of usable chunks, phases unwrapped.
    pub summaries: Vec<ChunkSummary>,
    pub counts: ConditionalCounts,
    pub unusable: Vec<UnusableChunk>,
}

impl TrackReport {
    pub fn excluded_records(&self) -> usize {
        self.unusable.iter().map(|u| u.n_records).sum()
    }
}

/// Track and classify a whole stream in place. Records of unusable chunks
/// keep `b = None` and are excluded from the counts.
pub fn track(records: &mut [TrialRecord], chunk_size: usize) -> Result<TrackReport> {
    if chunk_size == 0 {
        return Err(invalid("chunk size must be at least 1"));
    }
    let per_chunk: Vec<std::result::Result<(ChunkSummary, ConditionalCounts), UnusableChunk>> = records
        .par_chunks_mut(chunk_size)
        .enumerate()
        .map(|(i, chunk)| {
            let n_records = chunk.len();
            let unusable = |issue| UnusableChunk {
                chunk_index: i,
                issue,
                n_records,
            };
            let summary = summarize_chunk(chunk, i).map_err(unusable)?;
            classify(chunk, &summary).map_err(unusable)?;
            let counts = accumulate(chunk).expect("chunk was just classified");
            Ok((summary, counts))
        })
        .collect();

    let mut summaries = Vec::new();
    let mut counts = ConditionalCounts::default();
    let mut unusable = Vec::new();
    for item in per_chunk {
        match item {
            Ok((s, c)) => {
                summaries.push(s);
                counts = counts.merge(&c);
            }
            Err(u) => unusable.push(u),
        }
    }
    Ok(TrackReport {
        summaries: unwrap_phases(summaries),
        counts,
        unusable,
    })
}

/// CSV with header `chunk,phi_hat_rad,c0_re,c0_im,c1_re,c1_im,n`.
pub fn write_chunk_csv(summaries: &[ChunkSummary], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "chunk,phi_hat_rad,c0_re,c0_im,c1_re,c1_im,n")?;
    for s in summaries {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            s.chunk_index, s.phi_hat, s.c0.re, s.c0.im, s.c1.re, s.c1.im, s.n_in_chunk
        )?;
    }
    w.flush()?;
    Ok(())
}
