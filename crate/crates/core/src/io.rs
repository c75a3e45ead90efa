//! File formats.
//!
//! QMAT is a small binary container for one quaternion matrix:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "QMAT"
//!      4     2  version, u16 little endian, = 1
//!      6     4  rows m, u32 little endian
//!     10     4  cols n, u32 little endian
//!     14     4  plane order "0123"
//!     18  32mn  planes S0, S1, S2, S3, each m*n f64 little endian, row major
//! ```
//!
//! Real matrices and individual planes use headerless comma separated text.
//! Every writer goes through a temporary file in the target directory that
//! is renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SqmfError};
use crate::quat::QuaternionMatrix;

pub const QMAT_MAGIC: &[u8; 4] = b"QMAT";
pub const QMAT_VERSION: u16 = 1;
pub const QMAT_ORDER: &[u8; 4] = b"0123";
pub const QMAT_HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QmatHeader {
    pub version: u16,
    pub rows: u32,
    pub cols: u32,
}

impl QmatHeader {
    pub fn payload_len(&self) -> u64 {
        4 * 8 * self.rows as u64 * self.cols as u64
    }
}

fn format_err(offset: usize, reason: impl Into<String>) -> SqmfError {
    SqmfError::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn parse_qmat_header(bytes: &[u8]) -> Result<QmatHeader> {
    if bytes.len() < QMAT_HEADER_LEN {
        return Err(format_err(bytes.len(), format!("header needs {QMAT_HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if &bytes[0..4] != QMAT_MAGIC {
        return Err(format_err(0, "bad magic, expected \"QMAT\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != QMAT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes"));
    if &bytes[14..18] != QMAT_ORDER {
        return Err(format_err(14, "bad plane order marker, expected \"0123\""));
    }
    Ok(QmatHeader { version, rows, cols })
}

pub fn decode_qmat(bytes: &[u8]) -> Result<QuaternionMatrix> {
    let header = parse_qmat_header(bytes)?;
    let expected = QMAT_HEADER_LEN as u64 + header.payload_len();
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(format_err(bytes.len(), format!("payload truncated, expected {expected} bytes in total")));
    }
    if actual > expected {
        return Err(format_err(expected as usize, format!("{} trailing bytes after payload", actual - expected)));
    }
    let (m, n) = (header.rows as usize, header.cols as usize);
    let mut values = bytes[QMAT_HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let planes: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::from_row_iterator(m, n, values.by_ref().take(m * n)));
    QuaternionMatrix::from_planes(planes)
}

pub fn encode_qmat(q: &QuaternionMatrix) -> Result<Vec<u8>> {
    let (m, n) = q.shape();
    let rows = u32::try_from(m).map_err(|_| SqmfError::Domain(format!("{m} rows exceed the format limit")))?;
    let cols = u32::try_from(n).map_err(|_| SqmfError::Domain(format!("{n} columns exceed the format limit")))?;
    let mut out = Vec::with_capacity(QMAT_HEADER_LEN + 32 * m * n);
    out.extend_from_slice(QMAT_MAGIC);
    out.extend_from_slice(&QMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(QMAT_ORDER);
    for plane in q.planes() {
        for i in 0..m {
            for j in 0..n {
                out.extend_from_slice(&plane[(i, j)].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_qmat(path: impl AsRef<Path>) -> Result<QuaternionMatrix> {
    decode_qmat(&fs::read(path)?)
}

pub fn write_qmat(path: impl AsRef<Path>, q: &QuaternionMatrix) -> Result<()> {
    write_atomic(path, &encode_qmat(q)?)
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| SqmfError::Io(e.error))?;
    Ok(())
}

/// Parses headerless numeric CSV into a dense matrix.
pub fn parse_real_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(crate::metrics::csv_io)?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(SqmfError::Parse(format!("row {} has {} cells, expected {c}", i + 1, record.len())));
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| SqmfError::Parse(format!("row {}, column {}: '{cell}' is not a number", i + 1, j + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

pub fn read_real_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_real_csv(&fs::read_to_string(path)?)
}

/// Full precision (shortest round-trip representation).
pub fn format_real_csv(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..x.nrows() {
        let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_real_csv(path: impl AsRef<Path>, x: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, format_real_csv(x).as_bytes())
}

/// Four planes from four CSV files; a missing `s3` reads as all zeros.
pub fn read_planes_csv(s0: impl AsRef<Path>, s1: impl AsRef<Path>, s2: impl AsRef<Path>, s3: Option<&Path>) -> Result<QuaternionMatrix> {
    let p0 = read_real_csv(s0)?;
    let p1 = read_real_csv(s1)?;
    let p2 = read_real_csv(s2)?;
    let p3 = match s3 {
        Some(p) => read_real_csv(p)?,
        None => DMatrix::zeros(p0.nrows(), p0.ncols()),
    };
    QuaternionMatrix::from_planes([p0, p1, p2, p3])
}

pub fn write_planes_csv(q: &QuaternionMatrix, paths: [&Path; 4]) -> Result<()> {
    for (plane, path) in q.planes().iter().zip(paths) {
        write_real_csv(path, plane)?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SqmfError::Parse(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SqmfError::Parse(e.to_string()))
}
