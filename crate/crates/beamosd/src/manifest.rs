//! JSON-lines dataset manifests, one object per segment:
//! `{"id", "label", "wav", "azimuths", "duration_s", "split"}`.
//! `wav` is relative to the manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u8,
    pub wav: String,
    /// Source azimuths in degrees.
    pub azimuths: Vec<f64>,
    pub duration_s: f64,
    pub split: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilter {
    Train,
    Test,
    All,
}

impl SplitFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitFilter::Train => "train",
            SplitFilter::Test => "test",
            SplitFilter::All => "all",
        }
    }

    pub fn accepts(self, split: &str) -> bool {
        self == SplitFilter::All || self.as_str() == split
    }
}

impl fmt::Display for SplitFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitFilter::Train),
            "test" => Ok(SplitFilter::Test),
            "all" => Ok(SplitFilter::All),
            _ => Err(Error::usage(format!("unknown split {s:?} (train, test, all)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory `wav` paths resolve against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn wav_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.wav)
    }

    pub fn select(&self, split: SplitFilter) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| split.accepts(&e.split)).collect()
    }

    /// Accepts either the manifest file or the dataset directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let entries = parse(&text).map_err(|e| match e {
            Error::Data(msg) => Error::data(format!("{}: {msg}", file.display())),
            other => other,
        })?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }
}

pub fn to_jsonl(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry =
            serde_json::from_str(line).map_err(|err| Error::data(format!("line {}: {err}", i + 1)))?;
        if e.label > 1 {
            return Err(Error::data(format!("line {}: label must be 0 or 1, got {}", i + 1, e.label)));
        }
        if e.split != "train" && e.split != "test" {
            return Err(Error::data(format!("line {}: unknown split {:?}", i + 1, e.split)));
        }
        out.push(e);
    }
    if out.is_empty() {
        return Err(Error::data("manifest has no entries"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry() -> ManifestEntry {
        ManifestEntry {
            id: "seg000003".into(),
            label: 1,
            wav: "wav/seg000003.wav".into(),
            azimuths: vec![12.5, 250.125],
            duration_s: 1.0,
            split: "test".into(),
        }
    }

    #[test]
    fn line_format() {
        assert_eq!(
            to_jsonl(&[entry()]),
            "{\"id\":\"seg000003\",\"label\":1,\"wav\":\"wav/seg000003.wav\",\
             \"azimuths\":[12.5,250.125],\"duration_s\":1.0,\"split\":\"test\"}\n"
        );
        assert_eq!(parse(&to_jsonl(&[entry()])).unwrap(), vec![entry()]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse("").is_err());
        assert!(parse("{\"id\":1}").is_err());
        let bad_label = to_jsonl(&[ManifestEntry { label: 2, ..entry() }]);
        assert!(parse(&bad_label).is_err());
        let bad_split = to_jsonl(&[ManifestEntry { split: "dev".into(), ..entry() }]);
        assert!(parse(&bad_split).is_err());
        let extra = "{\"id\":\"a\",\"label\":0,\"wav\":\"a.wav\",\"azimuths\":[],\"duration_s\":1.0,\"split\":\"train\",\"x\":1}";
        let err = parse(extra).unwrap_err().to_string();
        assert!(err.contains("`x`"), "{err}");
    }

    #[test]
    fn split_filter() {
        assert!(SplitFilter::All.accepts("train"));
        assert!(SplitFilter::Test.accepts("test") && !SplitFilter::Test.accepts("train"));
        assert!("dev".parse::<SplitFilter>().is_err());
    }
}
