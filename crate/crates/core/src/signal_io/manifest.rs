use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::SignalError;

pub const MANIFEST_HEADER: &str = "path,patient_id,visit_id,ga_months";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// As written in the manifest; relative paths resolve against `base_dir`.
    pub file_path: String,
    pub patient_id: String,
    pub visit_id: String,
    pub ga_months_lmp: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.file_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, SignalError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SignalError::MissingFile(path.to_path_buf())
        } else {
            SignalError::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    let mut manifest = parse_manifest(&text)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

fn valid_id(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses manifest CSV text. Line numbers in errors are 1-based and count
/// the header.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest, SignalError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == MANIFEST_HEADER => {}
        _ => {
            return Err(SignalError::MalformedRow { line: 1, reason: format!("header must be `{MANIFEST_HEADER}`") })
        }
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(SignalError::MalformedRow { line, reason: format!("expected 4 fields, found {}", fields.len()) });
        }
        let (path, patient, visit, ga) = (fields[0].trim(), fields[1].trim(), fields[2].trim(), fields[3].trim());
        if path.is_empty() {
            return Err(SignalError::MalformedRow { line, reason: "empty path".into() });
        }
        for (name, id) in [("patient_id", patient), ("visit_id", visit)] {
            if !valid_id(id) {
                return Err(SignalError::MalformedRow { line, reason: format!("invalid {name} `{id}`") });
            }
        }
        let value: i64 = ga
            .parse()
            .map_err(|_| SignalError::MalformedRow { line, reason: format!("ga_months `{ga}` is not an integer") })?;
        if !(5..=9).contains(&value) {
            return Err(SignalError::GaOutOfRange { line, value });
        }
        if !seen.insert((patient.to_string(), visit.to_string(), path.to_string())) {
            return Err(SignalError::DuplicateEntry {
                line,
                patient_id: patient.into(),
                visit_id: visit.into(),
                path: path.into(),
            });
        }
        entries.push(ManifestEntry {
            file_path: path.into(),
            patient_id: patient.into(),
            visit_id: visit.into(),
            ga_months_lmp: value as u8,
        });
    }
    Ok(DatasetManifest { entries, base_dir: PathBuf::new() })
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), SignalError> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in &manifest.entries {
        let _ = writeln!(text, "{},{},{},{}", e.file_path, e.patient_id, e.visit_id, e.ga_months_lmp);
    }
    std::fs::write(path, text).map_err(|source| SignalError::Io { path: path.to_path_buf(), source })
}
