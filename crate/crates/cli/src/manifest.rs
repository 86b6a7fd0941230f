use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Provenance block embedded in every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory that records every file it hands out in the manifest.
pub struct Outputs {
    dir: Option<PathBuf>,
    pub manifest: RunManifest,
    /// Skip echoing the summary to stdout.
    pub quiet: bool,
}

impl Outputs {
    pub fn new(dir: Option<&Path>, manifest: RunManifest) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).with_context(|| format!("creating output directory {}", d.display()))?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), manifest, quiet: false })
    }

    /// Path for `name` inside the output directory (none without one).
    pub fn path(&mut self, name: &str) -> Option<PathBuf> {
        let p = self.dir.as_ref()?.join(name);
        self.manifest.outputs.push(p.clone());
        Some(p)
    }

    pub fn csv(&mut self, name: &str, write: impl FnOnce(fs::File) -> sigmak::Result<()>) -> Result<()> {
        if let Some(p) = self.path(name) {
            let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
            write(f)?;
        }
        Ok(())
    }

    /// Writes `summary.json` (when an output directory is set) and prints
    /// the same document to stdout unless quiet.
    pub fn summary<T: Serialize>(&mut self, body: &T) -> Result<()> {
        let target = self.path("summary.json");
        let text = serde_json::to_string_pretty(&Envelope { manifest: &self.manifest, body })?;
        if let Some(p) = target {
            fs::write(&p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
        }
        if !self.quiet {
            print_stdout(&text)?;
        }
        Ok(())
    }
}

/// Prints a line, treating a closed pipe as success.
pub fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}
