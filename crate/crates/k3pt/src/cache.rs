//! Disk cache for expanded KY tables.
//!
//! Expansion is the costliest step and is reused by every assembly run, so
//! tables are cached keyed by (h_max, n_max). Cache files carry a content
//! hash; a corrupt or stale file is recomputed and rewritten, never trusted.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::KyFile;
use crate::ky::{ky_expand, KyTable};

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "K3PT_CACHE_DIR";

/// Resolve the cache directory: explicit flag wins, then the environment.
pub fn resolve_cache_dir(flag: Option<&Path>) -> Option<PathBuf> {
    if let Some(dir) = flag {
        return Some(dir.to_path_buf());
    }
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

fn cache_path(dir: &Path, h_max: i64, n_max: i64) -> PathBuf {
    dir.join(format!("ky-h{h_max}-n{n_max}.json"))
}

/// Expand through the cache. `None` skips caching entirely.
pub fn ky_expand_cached(h_max: i64, n_max: i64, dir: Option<&Path>) -> Result<KyTable> {
    let Some(dir) = dir else {
        return ky_expand(h_max, n_max);
    };
    let path = cache_path(dir, h_max, n_max);
    if path.exists() {
        if let Ok(file) = crate::io::read_file::<KyFile>(&path) {
            if file.hmax == h_max && file.nmax == n_max {
                if let Ok(table) = file.to_table() {
                    return Ok(table);
                }
            }
        }
        // Corrupt or mismatched: fall through and recompute.
    }
    let table = ky_expand(h_max, n_max)?;
    std::fs::create_dir_all(dir)
        .map_err(|e| crate::error::Error::Io(format!("{}: {e}", dir.display())))?;
    crate::io::write_file(&path, &KyFile::from_table(&table))?;
    Ok(table)
}
