//! Artifact paths inside the output directory and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::Invalid;

/// `<out>/<stem>_s<seed>.json`.
pub fn seeded(out: &Path, stem: &str, seed: u64) -> PathBuf {
    out.join(format!("{stem}_s{seed}.json"))
}

/// Reads an upstream artifact, naming the command that produces it when it
/// is missing.
pub fn read_upstream(path: &Path, producer: &str) -> anyhow::Result<String> {
    if !path.exists() {
        return Err(Invalid(format!("missing {}; run `{producer}` first", path.display())).into());
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested").join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn missing_upstream_names_the_command() {
        let err = read_upstream(Path::new("/nonexistent/instance_s1.json"), "gen").unwrap_err();
        assert!(err.to_string().contains("run `gen` first"));
    }
}
