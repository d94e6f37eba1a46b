//! Filesystem helpers: error mapping and write-to-temp-then-rename.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{read_voxel_file, write_voxel_file, VoxelGrid};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn create_dir_all(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Reads a VXG1 file; content errors keep their kind but gain the path.
pub fn load_grid(path: &Path) -> Result<VoxelGrid> {
    let bytes = read_bytes(path)?;
    read_voxel_file(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_grid(path: &Path, grid: &VoxelGrid) -> Result<()> {
    write_atomic(path, &write_voxel_file(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = read_bytes(Path::new("/nonexistent/x.vxg")).unwrap_err();
        assert!(e.is_io());
        assert!(e.to_string().contains("/nonexistent/x.vxg"));
    }
}
