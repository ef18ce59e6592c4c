//! On-disk cache of solved polarization currents.
//!
//! Entries are keyed by a SHA-256 over the scene, the incident mode and the
//! solver tolerance. Each entry is a current dump plus a JSON solve report;
//! both are written to temporary files and renamed into place, and the
//! report is renamed last so a visible report implies a complete dump.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use homfield::scene::DielectricScene;
use homfield::solver::{PlaneWaveMode, PolarizationCurrentField, SolveReport};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

pub struct SolveCache {
    dir: PathBuf,
}

pub fn scene_hash(scene: &DielectricScene) -> String {
    let mut h = Sha256::new();
    for d in scene.dims() {
        h.update((d as u64).to_le_bytes());
    }
    h.update(scene.spacing().to_le_bytes());
    for o in scene.origin() {
        h.update(o.to_le_bytes());
    }
    for e in scene.rel_permittivity() {
        h.update(e.re.to_le_bytes());
        h.update(e.im.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

pub fn solve_key(scene_hash: &str, mode: &PlaneWaveMode, tol: f64) -> String {
    let mut h = Sha256::new();
    h.update(scene_hash.as_bytes());
    for v in mode.direction().iter().chain(&mode.polarization()) {
        h.update(v.to_le_bytes());
    }
    h.update(mode.omega().to_le_bytes());
    h.update(tol.to_le_bytes());
    format!("{:x}", h.finalize())
}

impl SolveCache {
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating cache directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{key}.current")),
            self.dir.join(format!("{key}.json")),
        )
    }

    pub fn load(&self, key: &str) -> Option<(PolarizationCurrentField, SolveReport)> {
        let (bin, json) = self.paths(key);
        let report = std::fs::read_to_string(&json).ok()?;
        let report: SolveReport = match serde_json::from_str(&report) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("ignoring unreadable cache report {}: {e}", json.display());
                return None;
            }
        };
        match PolarizationCurrentField::read_dump(&bin) {
            Ok(field) => Some((field, report)),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", bin.display());
                None
            }
        }
    }

    pub fn store(&self, key: &str, field: &PolarizationCurrentField, report: &SolveReport) -> anyhow::Result<()> {
        let (bin, json) = self.paths(key);
        let tmp = NamedTempFile::new_in(&self.dir)?;
        field.write_dump(tmp.path())?;
        tmp.persist(&bin)?;
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(serde_json::to_string_pretty(report)?.as_bytes())?;
        tmp.persist(&json)?;
        Ok(())
    }
}
