//! Output files. Every CSV starts with a `# config:` line holding the JSON
//! of the configuration that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

pub struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
    config_line: String,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new<C: Serialize>(dir: &Path, formats: &[Format], config: &C) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        let json = serde_json::to_string(config).expect("config serializes");
        Ok(Sink {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            config_line: format!("# config: {json}\n"),
            written: Vec::new(),
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, body: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(self.config_line.clone().into_bytes());
        for r in rows {
            w.serialize(r)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        let body = w
            .into_inner()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(name, &body)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        let config: serde_json::Value =
            serde_json::from_str(self.config_line.trim_start_matches("# config: "))
                .expect("config is json");
        let doc = serde_json::json!({ "config": config, "result": value });
        let mut text = serde_json::to_string_pretty(&doc).expect("result serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, svg: String) -> Result<(), CliError> {
        if !self.wants(Format::Svg) {
            return Ok(());
        }
        self.write(name, svg.as_bytes())
    }
}
