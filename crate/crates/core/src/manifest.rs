//! Dataset manifests: a named task plus the ordered slide inventory.
//!
//! Stored as a line-oriented text file:
//!
//! ```text
//! # sabench manifest v1
//! task = breast_demo
//! dim = 384
//! source = synthgen:a1b2c3d4
//! slide slide_0001 1 bags/slide_0001.sagb
//! slide slide_0002 0 bags/slide_0002.sagb
//! ```
//!
//! Slide order in the file is preserved on load; it defines the default
//! iteration order that split generation depends on.

use std::fmt::Write as _;
use std::path::Path;

use crate::{CoreError, Result};

const HEADER_LINE: &str = "# sabench manifest v1";

/// One slide entry: id, binary label, and the bag file path relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideRecord {
    pub slide_id: String,
    pub label: u8,
    pub path: String,
}

/// A named task: embedding dimension, provenance tag, and the slide list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    task_name: String,
    embedding_dim: usize,
    source_tag: String,
    slides: Vec<SlideRecord>,
}

impl DatasetManifest {
    pub fn new(
        task_name: impl Into<String>,
        embedding_dim: usize,
        source_tag: impl Into<String>,
        slides: Vec<SlideRecord>,
    ) -> Result<Self> {
        let task_name = task_name.into();
        let source_tag = source_tag.into();
        if task_name.is_empty() || task_name.contains(['\n', '\r']) {
            return Err(CoreError::Validation("task name must be a non-empty single line".into()));
        }
        if embedding_dim == 0 {
            return Err(CoreError::Validation("embedding_dim must be >= 1".into()));
        }
        if source_tag.contains(['\n', '\r']) {
            return Err(CoreError::Validation("source tag must be a single line".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut class_counts = [0usize; 2];
        for s in &slides {
            if s.slide_id.is_empty() || s.slide_id.contains(char::is_whitespace) {
                return Err(CoreError::Validation(format!(
                    "slide id '{}' must be non-empty and contain no whitespace",
                    s.slide_id
                )));
            }
            if !seen.insert(s.slide_id.clone()) {
                return Err(CoreError::Validation(format!(
                    "duplicate slide_id '{}'",
                    s.slide_id
                )));
            }
            if s.label > 1 {
                return Err(CoreError::Validation(format!(
                    "slide '{}': unknown label value {}",
                    s.slide_id, s.label
                )));
            }
            if s.path.is_empty() || s.path.contains(char::is_whitespace) {
                return Err(CoreError::Validation(format!(
                    "slide '{}': missing or whitespace-containing file path",
                    s.slide_id
                )));
            }
            class_counts[s.label as usize] += 1;
        }
        if class_counts[0] < 2 || class_counts[1] < 2 {
            return Err(CoreError::Validation(format!(
                "need at least 2 slides per class, got {} negative / {} positive",
                class_counts[0], class_counts[1]
            )));
        }
        Ok(Self {
            task_name,
            embedding_dim,
            source_tag,
            slides,
        })
    }

    pub fn task_name(&self) -> &str {
        &self.task_name
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    /// Slides in file order.
    pub fn slides(&self) -> &[SlideRecord] {
        &self.slides
    }

    pub fn len(&self) -> usize {
        self.slides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slides.is_empty()
    }

    /// (negatives, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.slides.iter().filter(|s| s.label == 1).count();
        (self.slides.len() - pos, pos)
    }

    pub fn label_of(&self, slide_id: &str) -> Option<u8> {
        self.slides
            .iter()
            .find(|s| s.slide_id == slide_id)
            .map(|s| s.label)
    }

    fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER_LINE}");
        let _ = writeln!(out, "task = {}", self.task_name);
        let _ = writeln!(out, "dim = {}", self.embedding_dim);
        let _ = writeln!(out, "source = {}", self.source_tag);
        for s in &self.slides {
            let _ = writeln!(out, "slide {} {} {}", s.slide_id, s.label, s.path);
        }
        out
    }
}

/// Writes `manifest` to `path` in the text format above.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest.render())?;
    Ok(())
}

/// Loads a manifest, validating ids, labels and paths. Errors name the
/// offending record.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text).map_err(|e| match e {
        CoreError::Validation(msg) => CoreError::Validation(format!("{}: {msg}", path.display())),
        CoreError::Format(msg) => CoreError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == HEADER_LINE => {}
        other => {
            return Err(CoreError::Format(format!(
                "expected header '{HEADER_LINE}', got {:?}",
                other.unwrap_or("")
            )))
        }
    }

    let mut task = None;
    let mut dim = None;
    let mut source = None;
    let mut slides = Vec::new();

    for (lineno, raw) in lines.enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("slide ") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(CoreError::Validation(format!(
                    "line {}: slide record needs '<id> <label> <path>', got '{rest}'",
                    lineno + 2
                )));
            }
            let label: u8 = fields[1].parse().map_err(|_| {
                CoreError::Validation(format!(
                    "slide '{}': unknown label value '{}'",
                    fields[0], fields[1]
                ))
            })?;
            slides.push(SlideRecord {
                slide_id: fields[0].to_string(),
                label,
                path: fields[2].to_string(),
            });
        } else if let Some((key, value)) = line.split_once('=') {
            let key = key.trim();
            let value = value.trim().to_string();
            match key {
                "task" => task = Some(value),
                "dim" => {
                    dim = Some(value.parse::<usize>().map_err(|_| {
                        CoreError::Validation(format!("dim must be a positive integer, got '{value}'"))
                    })?)
                }
                "source" => source = Some(value),
                other => {
                    return Err(CoreError::Validation(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 2
                    )))
                }
            }
        } else {
            return Err(CoreError::Validation(format!(
                "line {}: unrecognized line '{line}'",
                lineno + 2
            )));
        }
    }

    let task = task.ok_or_else(|| CoreError::Validation("missing 'task' field".into()))?;
    let dim = dim.ok_or_else(|| CoreError::Validation("missing 'dim' field".into()))?;
    let source = source.unwrap_or_default();
    DatasetManifest::new(task, dim, source, slides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(labels: &[u8]) -> Vec<SlideRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| SlideRecord {
                slide_id: format!("s{i:03}"),
                label: l,
                path: format!("bags/s{i:03}.sagb"),
            })
            .collect()
    }

    #[test]
    fn four_slide_manifest_loads_with_class_counts() {
        let m = DatasetManifest::new("demo", 8, "test", records(&[0, 0, 1, 1])).unwrap();
        assert_eq!(m.class_counts(), (2, 2));
        let text = m.render();
        let back = parse_manifest(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicate_id_names_offender() {
        let mut rs = records(&[0, 0, 1, 1]);
        rs[3].slide_id = rs[0].slide_id.clone();
        let err = DatasetManifest::new("demo", 8, "t", rs).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s000"), "error should name the id: {msg}");
    }

    #[test]
    fn unknown_label_names_offender() {
        let text = "# sabench manifest v1\ntask = t\ndim = 4\nsource = x\nslide a 2 p/a\n";
        let err = parse_manifest(text).unwrap_err();
        assert!(err.to_string().contains('a'));
    }

    #[test]
    fn order_is_preserved() {
        let m = DatasetManifest::new("demo", 8, "t", records(&[1, 0, 1, 0, 1, 0])).unwrap();
        let back = parse_manifest(&m.render()).unwrap();
        let ids: Vec<_> = back.slides().iter().map(|s| s.slide_id.as_str()).collect();
        assert_eq!(ids, vec!["s000", "s001", "s002", "s003", "s004", "s005"]);
    }
}
