//! CSV tables and the JSON run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Header line plus one row per record; numbers use the shortest
/// representation that round-trips.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                s.push(',');
            }
            first = false;
            push_number(&mut s, v);
        }
        s.push('\n');
    }
    s
}

fn push_number(s: &mut String, v: f64) {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        write!(s, "{v}").unwrap();
    } else {
        write!(s, "{v:e}").unwrap();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Manifest {
    pub command: String,
    pub pass: bool,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

/// Collects artifacts written into one output directory.
pub struct Artifacts {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                ..Manifest::default()
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.manifest.files.push(name.to_string());
        Ok(())
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.manifest.verdicts.push(v);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.manifest
            .summary
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable summary"));
    }

    /// Writes `manifest.json`; the run passes iff every verdict passes.
    pub fn finish(mut self) -> std::io::Result<Manifest> {
        self.manifest.pass = self.manifest.verdicts.iter().all(|v| v.pass);
        self.manifest.files.push("manifest.json".into());
        let json = serde_json::to_string_pretty(&self.manifest).expect("serializable manifest");
        fs::write(self.dir.join("manifest.json"), json + "\n")?;
        Ok(self.manifest)
    }
}
