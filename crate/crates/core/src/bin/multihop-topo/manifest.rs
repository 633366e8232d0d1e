use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::GlobalOpts;

#[derive(Serialize)]
struct Input {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a GlobalOpts,
    inputs: Vec<Input>,
    outputs: Vec<String>,
}

/// Collects the files a command reads and writes, then records them with the
/// run configuration in `manifest.json`.
pub struct Run<'a> {
    command: &'a str,
    global: &'a GlobalOpts,
    inputs: Vec<Input>,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'a str, global: &'a GlobalOpts) -> Result<Self> {
        fs::create_dir_all(&global.out)
            .with_context(|| format!("creating {}", global.out.display()))?;
        Ok(Run {
            command,
            global,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(Input {
            path: path.display().to_string(),
            sha256: hex(&Sha256::digest(text.as_bytes())),
        });
        Ok(text)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.global.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn finish(mut self) -> Result<()> {
        self.outputs.sort();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.global,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.global.out.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
