//! Atomic file writes and the binary state dump.

use std::io::Write;
use std::path::{Path, PathBuf};

use esbgk::{make_grids, DistributionGrid, SchemeParams};

pub const STATE_MAGIC: [u8; 4] = *b"ESBG";
pub const STATE_VERSION: u32 = 1;
pub const STATE_HEADER_LEN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed state dump: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    tmp.write_all(bytes).map_err(io(path))?;
    tmp.as_file().sync_all().map_err(io(path))?;
    tmp.persist(path).map_err(|e| OutputError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Header fields of a state dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateHeader {
    pub n_cells: u32,
    pub j_half: u32,
    pub steps: u64,
    pub dv: f64,
    pub dt: f64,
    pub kappa: f64,
    pub nu: f64,
    pub q: f64,
}

/// 64-byte header (magic, version, `N_x`, `J`, step count, `Δv`, `Δt`, `κ`, `ν`, `q`)
/// followed by the values as little-endian `f64`, cell-major.
pub fn encode_state(f: &DistributionGrid, params: &SchemeParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(STATE_HEADER_LEN + 8 * f.values().len());
    out.extend_from_slice(&STATE_MAGIC);
    out.extend_from_slice(&STATE_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.spatial().n_cells() as u32).to_le_bytes());
    out.extend_from_slice(&(f.velocity().j_half() as u32).to_le_bytes());
    out.extend_from_slice(&(f.time_index() as u64).to_le_bytes());
    for x in [f.velocity().dv(), params.dt, params.kappa, params.nu, params.q_weight] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    debug_assert_eq!(out.len(), STATE_HEADER_LEN);
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_state(path: &Path, bytes: &[u8]) -> Result<(StateHeader, DistributionGrid), OutputError> {
    let bad = |reason: &str| OutputError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < STATE_HEADER_LEN || bytes[..4] != STATE_MAGIC {
        return Err(bad("missing header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(4) != STATE_VERSION {
        return Err(bad("unsupported version"));
    }
    let header = StateHeader {
        n_cells: u32_at(8),
        j_half: u32_at(12),
        steps: u64_at(16),
        dv: f64_at(24),
        dt: f64_at(32),
        kappa: f64_at(40),
        nu: f64_at(48),
        q: f64_at(56),
    };
    let (s, v) = make_grids(header.n_cells as usize, header.j_half as usize, header.dv)
        .map_err(|e| bad(&e.to_string()))?;
    let n = s.n_cells() * v.n_nodes();
    if bytes.len() != STATE_HEADER_LEN + 8 * n {
        return Err(bad("payload length does not match header"));
    }
    let values = bytes[STATE_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let grid = DistributionGrid::from_values(s, v, values, header.steps as usize)
        .map_err(|e| bad(&e.to_string()))?;
    Ok((header, grid))
}
