use std::fs;
use std::path::{Path, PathBuf};

use bgcn_core::digest::sha256_hex;
use bgcn_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG: &str = "config.json";

/// What `config.json` in a run directory records.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub digest: String,
    pub dataset: PathBuf,
    pub dataset_name: String,
    pub config: PipelineConfig,
}

/// A run directory keyed by the digest of (pipeline config, bundle manifest).
pub struct RunDir {
    pub root: PathBuf,
    pub digest: String,
    pub force: bool,
}

pub fn run_digest(cfg: &PipelineConfig, manifest_bytes: &[u8]) -> String {
    sha256_hex(format!("{}:{}", cfg.digest(), sha256_hex(manifest_bytes)).as_bytes())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Compute(format!("{}: {e}", path.display()))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    write(path, text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl RunDir {
    /// Opens or creates `root`. An existing directory written under another
    /// digest is refused unless `force` is set.
    pub fn open(root: PathBuf, record: &RunRecord, force: bool) -> Result<Self, CliError> {
        let cfg_path = root.join(CONFIG);
        if cfg_path.exists() {
            let old: RunRecord = read_json(&cfg_path)?;
            if old.digest != record.digest && !force {
                return Err(CliError::Usage(format!(
                    "{} holds results for a different config or dataset (digest {} vs {}); \
                     pass --force to recompute or choose another --out",
                    root.display(),
                    &old.digest[..12],
                    &record.digest[..12]
                )));
            }
        }
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        write_json(&cfg_path, record)?;
        Ok(Self {
            root,
            digest: record.digest.clone(),
            force,
        })
    }

    pub fn seed_dir(&self, seed: u64) -> Result<PathBuf, CliError> {
        let d = self.root.join(format!("seed-{seed}"));
        fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        Ok(d)
    }

    fn marker(&self, seed: u64, stage: &str) -> PathBuf {
        self.root
            .join(format!("seed-{seed}"))
            .join(format!("{stage}.done"))
    }

    /// True when `stage` finished for `seed` under the current digest.
    pub fn is_done(&self, seed: u64, stage: &str) -> bool {
        !self.force
            && fs::read_to_string(self.marker(seed, stage)).is_ok_and(|d| d.trim() == self.digest)
    }

    pub fn mark_done(&self, seed: u64, stage: &str) -> Result<(), CliError> {
        write(&self.marker(seed, stage), format!("{}\n", self.digest))
    }
}
