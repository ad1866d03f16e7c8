//! Run-directory layout, atomic file writes, cleanup on failure, and the
//! run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use hypobench_core::models::Architecture;
use hypobench_core::{Error, Result};

/// Deterministic layout under one output directory.
pub struct RunDirs {
    root: PathBuf,
}

impl RunDirs {
    pub fn new(root: &Path) -> Self {
        RunDirs {
            root: root.to_path_buf(),
        }
    }

    pub fn hindcast_csv(&self) -> PathBuf {
        self.root.join("hindcast.csv")
    }

    pub fn dataset_train(&self) -> PathBuf {
        self.root.join("datasets/train.seq")
    }

    pub fn dataset_test(&self, slug: &str) -> PathBuf {
        self.root.join(format!("datasets/test_{slug}.seq"))
    }

    pub fn checkpoint(&self, arch: Architecture) -> PathBuf {
        self.root.join(format!("models/{arch}.ckpt"))
    }

    pub fn trainlog(&self, arch: Architecture) -> PathBuf {
        self.root.join(format!("logs/{arch}_trainlog.csv"))
    }

    pub fn report_csv(&self, arch: Architecture, slug: &str) -> PathBuf {
        self.root.join(format!("reports/{arch}_{slug}.csv"))
    }

    pub fn report_txt(&self, arch: Architecture, slug: &str) -> PathBuf {
        self.root.join(format!("reports/{arch}_{slug}.txt"))
    }

    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("reports/summary.csv")
    }

    pub fn curve_csv(&self, arch: Architecture, slug: &str, kind: &str) -> PathBuf {
        self.root.join(format!("curves/{arch}_{slug}_{kind}.csv"))
    }

    pub fn curve_svg(&self, arch: Architecture, slug: &str, kind: &str) -> PathBuf {
        self.root.join(format!("curves/{arch}_{slug}_{kind}.svg"))
    }

    pub fn compare_csv(&self, slug: &str) -> PathBuf {
        self.root.join(format!("compare/{slug}_mcnemar.csv"))
    }

    pub fn compare_svg(&self, slug: &str) -> PathBuf {
        self.root.join(format!("compare/{slug}_mcnemar.svg"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }
}

/// Tracks files created during one command so a failure leaves nothing
/// half-written behind. Writes are write-temp-then-rename.
pub struct OutputTracker {
    created: Vec<PathBuf>,
    committed: bool,
}

impl OutputTracker {
    pub fn new() -> Self {
        OutputTracker {
            created: Vec::new(),
            committed: false,
        }
    }

    /// Atomically write `bytes` to `path`, creating parent directories.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("out")
        ));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        self.created.push(path.to_path_buf());
        Ok(())
    }

    /// Record a file created through some other writer (e.g. container
    /// save) so cleanup still covers it.
    pub fn track(&mut self, path: &Path) {
        self.created.push(path.to_path_buf());
    }

    /// Keep everything written so far.
    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputTracker {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in self.created.drain(..) {
            let _ = fs::remove_file(path);
        }
    }
}

/// Write the run manifest: config hash, seed, and versions. Content is a
/// pure function of (config, seed), so reruns are byte-identical.
pub fn write_manifest(
    tracker: &mut OutputTracker,
    dirs: &RunDirs,
    canonical_config: &str,
    seed: u64,
) -> Result<()> {
    let mut hasher = Sha256::new();
    hasher.update(canonical_config.as_bytes());
    let hash = hex_string(&hasher.finalize());
    let manifest = format!(
        "config_sha256 = \"{hash}\"\nseed = {seed}\nversion = \"{}\"\nformat_version = 1\n",
        env!("CARGO_PKG_VERSION"),
    );
    tracker.write(&dirs.manifest(), manifest.as_bytes())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Missing-input error pointing at the producing command (exit class:
/// usage).
pub fn require_file(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing {}; run `{hint}` first",
            path.display()
        )));
    }
    Ok(())
}
