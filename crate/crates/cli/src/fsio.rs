//! Atomic output files and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` next to `path` and renames into place, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

/// Files produced by one command, staged in memory and committed together
/// once everything has been computed.
#[derive(Debug, Default)]
pub struct Outputs {
    root: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Outputs { root: root.into(), files: Vec::new() }
    }

    /// Stages a file at `rel` (relative to the output root).
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every staged file, then a manifest listing their checksums.
    pub fn commit(self, manifest: Manifest) -> Result<Vec<PathBuf>> {
        let mut text = manifest.header();
        for (rel, bytes) in &self.files {
            text.push_str(&format!("file {} {}\n", rel.display(), sha256_hex(bytes)));
        }
        let mut written = Vec::new();
        for (rel, bytes) in &self.files {
            let p = self.root.join(rel);
            write_atomic(&p, bytes)?;
            written.push(p);
        }
        let mp = self.root.join(format!("manifest-{}.txt", manifest.command));
        write_atomic(&mp, text.as_bytes())?;
        written.push(mp);
        Ok(written)
    }
}

/// Header of a run manifest: command, config hash and seeds.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub data_seed: u64,
    pub train_seed: u64,
    /// Extra `key = value` lines (e.g. input checksums).
    pub extra: Vec<(String, String)>,
}

impl Manifest {
    fn header(&self) -> String {
        let mut s = format!(
            "command = {}\nconfig_sha256 = {}\ndata_seed = {}\ntrain_seed = {}\n",
            self.command, self.config_sha256, self.data_seed, self.train_seed
        );
        for (k, v) in &self.extra {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"hello").unwrap();
        write_atomic(&p, b"again").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"again");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(dir.path());
        out.add("x.csv", b"1,2\n".to_vec());
        let m = Manifest { command: "demo".into(), config_sha256: "00".into(), data_seed: 1, train_seed: 2, extra: vec![] };
        out.commit(m).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest-demo.txt")).unwrap();
        assert!(text.contains(&format!("file x.csv {}", sha256_hex(b"1,2\n"))));
        assert!(text.contains("data_seed = 1\ntrain_seed = 2\n"));
    }
}
