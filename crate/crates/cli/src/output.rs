//! Output staging: files are collected in memory and written only once a
//! command has finished without error.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.push((name.into(), content.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s);
        Ok(())
    }

    /// Adds `manifest.json` describing the run and the other outputs.
    pub fn add_manifest<C: Serialize>(&mut self, command: &str, seed: u64, config: &C, fixtures: Value) -> Result<()> {
        let mut names: Vec<&str> = self.files.iter().map(|(n, _)| n.as_str()).collect();
        names.push("manifest.json");
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": seed,
            "config": config,
            "fixtures": fixtures,
            "outputs": names,
        });
        self.add_json("manifest.json", &manifest)
    }

    /// Writes every file under `dir`. Each file goes to a temporary name first
    /// and is renamed into place once all of them are on disk.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let target = dir.join(name);
            let parent = target.parent().unwrap_or(dir);
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            let tmp = dir.join(format!("{name}.partial"));
            fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            staged.push((tmp, target));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            fs::rename(&tmp, &target).with_context(|| format!("moving {} into place", target.display()))?;
            written.push(target);
        }
        Ok(written)
    }
}
