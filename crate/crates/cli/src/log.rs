use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Fails with a message naming the file and the stage that produces it.
pub fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing input file {} ({hint})", path.display());
    }
    Ok(())
}

/// Plain-text record of one stage: resolved config, seed, timing, and
/// SHA-256 of every input read and output written.
pub struct StageLog {
    stage: &'static str,
    started: Instant,
    started_unix: u64,
    config: String,
    seed: u64,
    out_dir: PathBuf,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
    notes: Vec<String>,
}

impl StageLog {
    pub fn start(stage: &'static str, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir)
            .with_context(|| format!("cannot create output directory {}", cfg.out_dir.display()))?;
        Ok(StageLog {
            stage,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: cfg.to_text(),
            seed: cfg.seed,
            out_dir: cfg.out_dir.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs.push((path.display().to_string(), hash));
        Ok(())
    }

    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        let bytes = contents.as_ref();
        std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs
            .push((path.display().to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    /// Adds a line to the log and echoes it to stderr.
    pub fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        eprintln!("[{}] {line}", self.stage);
        self.notes.push(line);
    }

    /// Adds a line to the log without echoing it.
    pub fn record(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn finish(self) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "stage: {}", self.stage);
        let _ = writeln!(s, "version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "started_unix: {}", self.started_unix);
        let _ = writeln!(s, "elapsed_seconds: {:.3}", self.started.elapsed().as_secs_f64());
        s.push_str("\n[config]\n");
        s.push_str(&self.config);
        for (title, files) in [("inputs", &self.inputs), ("outputs", &self.outputs)] {
            let _ = writeln!(s, "\n[{title}]");
            for (path, hash) in files {
                let _ = writeln!(s, "{hash}  {path}");
            }
        }
        s.push_str("\n[notes]\n");
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        let path = self.out_dir.join(format!("{}.log", self.stage));
        std::fs::write(&path, s).with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!(
            "[{}] done in {:.1}s, log at {}",
            self.stage,
            self.started.elapsed().as_secs_f64(),
            path.display()
        );
        Ok(())
    }
}
