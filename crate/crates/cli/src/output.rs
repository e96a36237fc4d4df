use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bifocus::ValidationReport;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Validation(ValidationReport),
    Compute(bifocus::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Io(_) => "Io",
            CliError::Validation(_) => "Validation",
            CliError::Compute(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Validation(r) => {
                let failed: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
                format!("parameter validation failed: {}", failed.join(", "))
            }
            CliError::Compute(e) => e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a ValidationReport>,
}

/// Writes the error as one line of JSON on stderr.
pub fn report_error(e: &CliError) {
    let validation = match e {
        CliError::Validation(r) => Some(r),
        _ => None,
    };
    let rep = ErrorReport { error: e.kind(), message: e.message(), exit_code: e.exit_code(), validation };
    eprintln!("{}", serde_json::to_string(&rep).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind())));
}

pub fn parse_range(s: &str) -> Result<[i64; 2], String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: i64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: i64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok([a, b])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
    pub command: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

/// Files produced by one command, recorded in `<dir>/manifest.json`.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    written: Vec<ManifestEntry>,
}

impl Outputs {
    pub fn new(dir: &Path, command: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), command, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write<F>(&mut self, name: &str, kind: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        self.written.push(ManifestEntry { path: name.to_string(), kind: kind.to_string(), command: self.command.clone() });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, value: &T) -> Result<(), CliError> {
        self.write(name, kind, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    /// Merges the written files into the manifest, replacing older entries for the same paths.
    pub fn finish(self) -> Result<(), CliError> {
        let path = self.dir.join("manifest.json");
        let mut manifest: Manifest = match std::fs::read_to_string(&path) {
            Ok(s) => serde_json::from_str(&s).unwrap_or_default(),
            Err(_) => Manifest::default(),
        };
        manifest.files.retain(|e| !self.written.iter().any(|w| w.path == e.path));
        manifest.files.extend(self.written);
        manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}
