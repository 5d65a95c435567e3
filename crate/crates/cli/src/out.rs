//! Run artifacts: a directory per run, addressed by the hash of the
//! resolved config, holding a manifest and the experiment's CSV files.

use crate::config::ExperimentConfig;
use pairhop::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Display;
use std::path::{Path, PathBuf};

/// One run's artifact directory. The name is `<experiment>-<hash>` where the
/// hash covers the experiment id, the binary version, and the canonical
/// resolved config, so identical runs land in the same place and a rerun
/// overwrites its own files byte for byte.
pub struct RunDir {
    pub path: PathBuf,
    pub hash: String,
}

pub fn prepare(cfg: &ExperimentConfig, experiment: &str) -> Result<RunDir> {
    let mut hasher = Sha256::new();
    for part in [experiment, env!("CARGO_PKG_VERSION"), &cfg.canonical()] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let hash: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let path = Path::new(&cfg.output.dir).join(format!("{experiment}-{hash}"));
    std::fs::create_dir_all(&path)?;
    let run = RunDir { path, hash };
    write_manifest(&run, cfg, experiment)?;
    Ok(run)
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    version: &'a str,
    hash: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn write_manifest(run: &RunDir, cfg: &ExperimentConfig, experiment: &str) -> Result<()> {
    let manifest = Manifest {
        experiment,
        version: env!("CARGO_PKG_VERSION"),
        hash: &run.hash,
        seed: cfg.run.seed,
        config: cfg,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::config("manifest", e.to_string()))?;
    std::fs::write(run.path.join("manifest.toml"), text)?;
    Ok(())
}

/// CSV accumulator: comment lines stating what each column computes, a
/// header row, then data rows. Numbers print through `Display`, which for
/// floats is the shortest round-trip form, so output is deterministic.
pub struct Csv {
    buf: String,
    cols: usize,
}

impl Csv {
    pub fn new(comments: &[&str], header: &[&str]) -> Csv {
        let mut buf = String::new();
        for c in comments {
            buf.push_str("# ");
            buf.push_str(c);
            buf.push('\n');
        }
        buf.push_str(&header.join(","));
        buf.push('\n');
        Csv { buf, cols: header.len() }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.cols, "row width matches the header");
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::write(dir.join(name), &self.buf)?;
        Ok(())
    }
}

pub fn num(x: impl Display) -> String {
    format!("{x}")
}

/// Free-text field: quoted, inner quotes doubled.
pub fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}
