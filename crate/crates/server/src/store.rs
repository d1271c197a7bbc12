//! On-disk table files: `<data_dir>/<table>.tbl`, each replaced whole by
//! writing a sibling temporary file and renaming it over the original.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hedb_core::data::{parse_table, serialize_table, DataError, EncryptedTable};

pub const TABLE_EXT: &str = "tbl";
const TMP_EXT: &str = "tbl.tmp";

/// Points at which an atomic write can be interrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteStage {
    /// The temporary file is complete and synced; the original is untouched.
    TempWritten,
}

pub fn table_path(dir: &Path, table: &str) -> PathBuf {
    dir.join(format!("{table}.{TABLE_EXT}"))
}

/// Writes `bytes` to `path` so that readers see either the old or the new
/// contents. `hook` runs between the temporary write and the rename; an
/// error from it abandons the write as a crash would.
pub fn write_atomic_with(
    path: &Path,
    bytes: &[u8],
    hook: impl FnOnce(WriteStage) -> io::Result<()>,
) -> io::Result<()> {
    let tmp = path.with_extension(TMP_EXT);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    hook(WriteStage::TempWritten)?;
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        // directory fsync makes the rename durable; not every platform allows it
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    write_atomic_with(path, bytes, |_| Ok(()))
}

pub fn save_table(dir: &Path, t: &EncryptedTable) -> io::Result<()> {
    write_atomic(&table_path(dir, t.schema().table_name()), &serialize_table(t))
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt table file {path}: {source}")]
    Corrupt { path: PathBuf, source: DataError },
    #[error("{path} holds table {found}")]
    NameMismatch { path: PathBuf, found: String },
}

/// Loads every table file in `dir`, dropping leftover temporary files from
/// interrupted writes.
pub fn load_tables(dir: &Path) -> Result<Vec<EncryptedTable>, LoadError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LoadError::Io { path, source }
    };
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(&format!(".{TMP_EXT}")) {
            fs::remove_file(&path).map_err(io_err(&path))?;
            continue;
        }
        if path.extension().and_then(|e| e.to_str()) != Some(TABLE_EXT) {
            continue;
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let t = parse_table(&bytes).map_err(|source| LoadError::Corrupt {
            path: path.clone(),
            source,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if stem != t.schema().table_name() {
            return Err(LoadError::NameMismatch {
                path,
                found: t.schema().table_name().to_string(),
            });
        }
        out.push(t);
    }
    Ok(out)
}
