//! Deterministic artifact writing: CSV tables, a JSON report and a
//! manifest with content hashes. Nothing time-dependent is recorded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub status: Option<String>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Collects the files of one run.
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            rows,
        });
        Ok(())
    }

    /// Floats use the shortest representation that round-trips.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.put(name, text.as_bytes(), rows.len())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes(), 1)
    }

    pub fn finish(self, experiment: &str, config_sha256: String, seed: u64, status: Option<String>) -> Result<Manifest> {
        let manifest = Manifest {
            experiment: experiment.to_string(),
            config_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            status,
            artifacts: self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// CSV cell formatting. Floats round-trip exactly; very large or small
/// magnitudes switch to exponent form.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        let a = self.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            format!("{self}")
        } else {
            format!("{self:e}")
        }
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => { $(impl Cell for $t { fn cell(&self) -> String { self.to_string() } })* };
}
display_cell!(usize, u64, i64, bool, str, String);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

/// `row![a, b, c]` builds one CSV row.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::lab::io::Cell::cell(&$x)),*] };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_and_rows() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(dir.path()).unwrap();
        w.csv("t.csv", &["a", "b"], &[crate::row![1usize, 0.1], crate::row![2usize, 1e-300]]).unwrap();
        let m = w.finish("x", "h".into(), 3, None).unwrap();
        assert_eq!(m.artifacts[0].rows, 2);
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "a,b\n1,0.1\n2,1e-300\n");
        assert_eq!("1.2345678901234567e-7".parse::<f64>().unwrap().cell().parse::<f64>().unwrap(), 1.2345678901234567e-7);
    }
}
