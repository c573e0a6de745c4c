//! Binary vorticity snapshots: `"VORT"`, `u32` version, `u32` N, `f64` time,
//! then `N·N` `f64` grid values in row-major order, all little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"VORT";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotFile {
    pub n: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

pub fn encode(snap: &SnapshotFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * snap.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(snap.n as u32).to_le_bytes());
    out.extend_from_slice(&snap.time.to_le_bytes());
    for v in &snap.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn decode(bytes: &[u8]) -> io::Result<SnapshotFile> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(invalid("not a VORT snapshot".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(invalid(format!("unsupported snapshot version {version}")));
    }
    let n = word(8) as usize;
    let time = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[HEADER..];
    if body.len() != 8 * n * n {
        return Err(invalid(format!(
            "snapshot body has {} bytes, expected {} for N = {n}",
            body.len(),
            8 * n * n
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SnapshotFile { n, time, values })
}

pub fn write_snapshot(path: &Path, snap: &SnapshotFile) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(snap))
}

pub fn read_snapshot(path: &Path) -> io::Result<SnapshotFile> {
    decode(&fs::read(path)?)
}
