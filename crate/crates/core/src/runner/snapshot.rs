//! Binary map snapshots.
//!
//! Layout (little-endian): magic `CSM1`, `u32` version, `i32` μ, `u32` N,
//! `f64` L, `f64` t, `f64` s, then `3N²` `f64` values `y₀y₁y₂` in row-major
//! grid order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::manifold::{MapField, TargetManifold};
use crate::spectral::GridSpec;

pub const MAGIC: [u8; 4] = *b"CSM1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;
/// Off-target tolerance accepted on read.
pub const READ_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: MapField,
    pub t: f64,
    pub s: f64,
}

impl Snapshot {
    pub fn new(field: MapField, t: f64, s: f64) -> Self {
        Snapshot { field, t, s }
    }

    pub fn encode(&self) -> Vec<u8> {
        let g = &self.field.grid;
        let mut out = Vec::with_capacity(HEADER_LEN + 24 * g.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.field.target.mu_int().to_le_bytes());
        out.extend_from_slice(&(g.n as u32).to_le_bytes());
        out.extend_from_slice(&g.l.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.s.to_le_bytes());
        for y in &self.field.values {
            for c in y {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(Error::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(Error::BadHeader(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::BadHeader(format!("unsupported version {version}")));
        }
        let mu = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let target = TargetManifold::from_mu(mu).map_err(|_| Error::BadHeader(format!("invalid mu {mu}")))?;
        let n = u32_at(12) as usize;
        let l = f64_at(16);
        let (t, s) = (f64_at(24), f64_at(32));
        if !t.is_finite() || !s.is_finite() {
            return Err(Error::BadHeader("non-finite time stamp".into()));
        }
        let grid = GridSpec::new(n, l).map_err(|e| Error::BadHeader(e.to_string()))?;
        let expected = n
            .checked_mul(n)
            .and_then(|v| v.checked_mul(24))
            .ok_or_else(|| Error::BadHeader(format!("grid size {n} overflows")))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                got: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::BadHeader(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let values = payload
            .chunks_exact(24)
            .map(|c| {
                let v = |i: usize| f64::from_le_bytes(c[8 * i..8 * i + 8].try_into().unwrap());
                [v(0), v(1), v(2)]
            })
            .collect();
        let field = MapField::new(grid, target, values, READ_TOL)?;
        Ok(Snapshot { field, t, s })
    }
}

pub fn write_snapshot(snap: &Snapshot, path: &Path) -> Result<()> {
    std::fs::write(path, snap.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Snapshot::decode(&bytes)
}

/// All `*.csm` files of a directory, sorted by (t, s, file name).
pub fn read_snapshot_dir(dir: &Path) -> Result<Vec<Snapshot>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csm"))
        .collect();
    paths.sort();
    let mut snaps = paths.iter().map(|p| read_snapshot(p)).collect::<Result<Vec<_>>>()?;
    snaps.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.s.total_cmp(&b.s)));
    Ok(snaps)
}
