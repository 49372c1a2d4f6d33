//! Output files: atomic writes with provenance (command, config hash, seed).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub struct OutputDir {
    dir: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn new(dir: PathBuf, provenance: Provenance) -> Self {
        OutputDir { dir, provenance, written: Vec::new() }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn finish(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        atomic_write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    /// CSV with a leading `#` provenance line and a header row.
    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
        let p = &self.provenance;
        let mut buf = format!("# command={} config_sha256={} seed={}\n", p.command, p.config_sha256, p.seed).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let err = |e: csv::Error| CliError::Io { path: name.into(), message: e.to_string() };
            w.write_record(header).map_err(err)?;
            for r in rows {
                w.write_record(r).map_err(err)?;
            }
            w.flush().map_err(|e| CliError::Io { path: name.into(), message: e.to_string() })?;
        }
        self.finish(name, &buf)
    }

    /// JSON object with a `provenance` member prepended.
    pub fn json(&mut self, name: &str, body: Value) -> CliResult<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("provenance".into(), serde_json::to_value(&self.provenance).expect("plain struct"));
        match body {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("serializable");
        text.push('\n');
        self.finish(name, text.as_bytes())
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        self.finish(name, text.as_bytes())
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
