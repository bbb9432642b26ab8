//! Trial-file format.
//!
//! ```text
//! header  (16 bytes): magic "SDIQ" | version u16 | flags u16 | count u64
//! record  (26 bytes): index u64 | x u8 | b u8 (255 = unassigned) | re f64 | im f64
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::TrialRecord;
use crate::error::{Error, Result};
use crate::phase_space::PhasePoint;

pub const TRIAL_MAGIC: [u8; 4] = *b"SDIQ";
pub const TRIAL_VERSION: u16 = 1;

const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 26;
const UNASSIGNED: u8 = 255;

/// Set when every record carries an outcome.
const FLAG_CLASSIFIED: u16 = 1;

fn encode_record(rec: &TrialRecord, buf: &mut [u8; RECORD_LEN]) {
    buf[0..8].copy_from_slice(&rec.index.to_le_bytes());
    buf[8] = rec.x;
    buf[9] = rec.b.unwrap_or(UNASSIGNED);
    buf[10..18].copy_from_slice(&rec.point.re.to_le_bytes());
    buf[18..26].copy_from_slice(&rec.point.im.to_le_bytes());
}

fn decode_record(buf: &[u8; RECORD_LEN]) -> Result<TrialRecord> {
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let index = u64_at(0);
    let x = buf[8];
    if x > 1 {
        return Err(Error::Format(format!("record {index}: input byte {x} is not 0 or 1")));
    }
    let b = match buf[9] {
        UNASSIGNED => None,
        v @ (0 | 1) => Some(v),
        v => return Err(Error::Format(format!("record {index}: outcome byte {v} is invalid"))),
    };
    Ok(TrialRecord {
        index,
        x,
        point: PhasePoint::new(f64_at(10), f64_at(18)),
        b,
    })
}

pub fn write_trials(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let flags = if !records.is_empty() && records.iter().all(|r| r.b.is_some()) {
        FLAG_CLASSIFIED
    } else {
        0
    };
    w.write_all(&TRIAL_MAGIC)?;
    w.write_all(&TRIAL_VERSION.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut buf = [0u8; RECORD_LEN];
    for rec in records {
        encode_record(rec, &mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 16-byte header".into()))?;
    if header[0..4] != TRIAL_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {:?}", &header[0..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TRIAL_VERSION {
        return Err(Error::Format(format!("unsupported trial-file version {version}")));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let expected = (HEADER_LEN as u64).checked_add(count.checked_mul(RECORD_LEN as u64).ok_or_else(|| {
        Error::Format(format!("record count {count} overflows"))
    })?);
    match expected {
        Some(len) if len == file_len => {}
        Some(len) if len > file_len => {
            return Err(Error::Format(format!(
                "truncated payload: header announces {count} records ({len} bytes) but file has {file_len}"
            )))
        }
        _ => {
            return Err(Error::Format(format!(
                "trailing bytes: header announces {count} records but file has {file_len} bytes"
            )))
        }
    }

    let mut records = Vec::with_capacity(count as usize);
    let mut buf = [0u8; RECORD_LEN];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        records.push(decode_record(&buf)?);
    }
    Ok(records)
}

/// Human-readable export with header `index,x,b,re,im`; unassigned outcomes are left empty.
pub fn write_trials_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,x,b,re,im")?;
    for r in records {
        let b = r.b.map(|b| b.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{:?},{:?}", r.index, r.x, b, r.point.re, r.point.im)?;
    }
    w.flush()?;
    Ok(())
}
