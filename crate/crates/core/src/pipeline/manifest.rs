use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance: an id, its audio file and its transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: PathBuf,
    pub text: String,
}

/// A JSON Lines dataset listing. Relative audio paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub split: Option<String>,
    pub entries: Vec<ManifestEntry>,
}

/// Lowercases, drops everything but letters and spaces, and collapses whitespace.
pub fn normalize_transcript(text: &str) -> String {
    let kept: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphabetic() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Manifest {
    /// Parses manifest text without touching the file system.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut e: ManifestEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
                line: i + 1,
                msg: err.to_string(),
            })?;
            if !seen.insert(e.id.clone()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate id {:?}", e.id),
                });
            }
            e.text = normalize_transcript(&e.text);
            entries.push(e);
        }
        Ok(Manifest {
            split: None,
            entries,
        })
    }

    /// Reads a manifest and checks that every referenced audio file exists.
    /// The split label is taken from the file stem (`train.jsonl` → `train`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            if e.audio.is_relative() {
                e.audio = base.join(&e.audio);
            }
            if !e.audio.is_file() {
                return Err(Error::io(
                    &e.audio,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "audio file not found"),
                ));
            }
        }
        m.split = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        Ok(m)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes() {
        let m = Manifest::parse(
            "{\"id\":\"u1\",\"audio\":\"a.wav\",\"text\":\"Bad  Cab!\"}\n\n{\"id\":\"u2\",\"audio\":\"b.wav\",\"text\":\"ace\"}\n",
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].text, "bad cab");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = "{\"id\":\"u1\",\"audio\":\"a.wav\",\"text\":\"x\"}\n";
        let r = Manifest::parse(&format!("{line}{line}"));
        assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn malformed_line_reports_position() {
        assert!(matches!(
            Manifest::parse("{\"id\":\"u1\"}"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_audio_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dev.jsonl");
        std::fs::write(&p, "{\"id\":\"u1\",\"audio\":\"nope.wav\",\"text\":\"x\"}\n").unwrap();
        assert!(matches!(Manifest::load(&p), Err(Error::Io { .. })));
        std::fs::write(dir.path().join("nope.wav"), b"").unwrap();
        let m = Manifest::load(&p).unwrap();
        assert_eq!(m.split.as_deref(), Some("dev"));
        assert_eq!(m.entries[0].audio, dir.path().join("nope.wav"));
    }
}
