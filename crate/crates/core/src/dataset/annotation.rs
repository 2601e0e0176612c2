//! Clip annotations and their append-only JSON-lines log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabelSet, Result};

/// A labeled time region of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub recording_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
    pub author: String,
    #[serde(with = "iso8601")]
    pub created_at: DateTime<Utc>,
}

impl Annotation {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn validate(&self, labels: Option<&LabelSet>) -> Result<()> {
        if !(self.start_s >= 0.0) || !(self.end_s > self.start_s) || !self.end_s.is_finite() {
            return Err(DatasetError::InvalidInterval {
                start_s: self.start_s,
                end_s: self.end_s,
            });
        }
        if let Some(labels) = labels {
            if labels.index_of(&self.label).is_none() {
                return Err(DatasetError::UnknownLabel(self.label.clone()));
            }
        }
        Ok(())
    }
}

pub(crate) mod iso8601 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Deletion marker appended in place of removing a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tombstone {
    pub deleted_id: String,
    #[serde(with = "iso8601")]
    pub deleted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Tombstone(Tombstone),
    Annotation(Annotation),
}

/// Append-only annotation store. The in-memory view is the replay of every
/// record in the file; a single `AnnotationLog` owns the write handle.
#[derive(Debug)]
pub struct AnnotationLog {
    path: PathBuf,
    file: File,
    live: IndexMap<String, Annotation>,
}

impl AnnotationLog {
    /// Opens (creating if needed) and replays the log.
    pub fn open(path: &Path) -> Result<Self> {
        let io = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut live = IndexMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: LogRecord =
                    serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                        path: path.to_path_buf(),
                        line: n + 1,
                        reason: e.to_string(),
                    })?;
                apply(&mut live, record);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            live,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_record(&mut self, record: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("log records serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| DatasetError::Io {
                path: self.path.clone(),
                source,
            })
    }

    /// Appends an annotation. Re-appending an identical record under an
    /// existing id is a no-op; a different record under a live id is
    /// rejected.
    pub fn append(&mut self, annotation: Annotation) -> Result<Annotation> {
        annotation.validate(None)?;
        if let Some(existing) = self.live.get(&annotation.id) {
            if *existing == annotation {
                return Ok(annotation);
            }
            return Err(DatasetError::DuplicateId(annotation.id));
        }
        let record = LogRecord::Annotation(annotation.clone());
        self.write_record(&record)?;
        apply(&mut self.live, record);
        Ok(annotation)
    }

    /// Marks an annotation deleted. Returns `None` for unknown ids.
    pub fn delete(&mut self, id: &str) -> Result<Option<Tombstone>> {
        if !self.live.contains_key(id) {
            return Ok(None);
        }
        let tomb = Tombstone {
            deleted_id: id.to_string(),
            deleted_at: Utc::now(),
        };
        let record = LogRecord::Tombstone(tomb.clone());
        self.write_record(&record)?;
        apply(&mut self.live, record);
        Ok(Some(tomb))
    }

    pub fn get(&self, id: &str) -> Option<&Annotation> {
        self.live.get(id)
    }

    /// Live annotations in insertion order, optionally for one recording.
    pub fn list(&self, recording_id: Option<&str>) -> Vec<Annotation> {
        self.live
            .values()
            .filter(|a| recording_id.is_none_or(|r| a.recording_id == r))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }
}

fn apply(live: &mut IndexMap<String, Annotation>, record: LogRecord) {
    match record {
        LogRecord::Annotation(a) => {
            live.insert(a.id.clone(), a);
        }
        LogRecord::Tombstone(t) => {
            live.shift_remove(&t.deleted_id);
        }
    }
}

/// Reads every live annotation from a log without keeping it open.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    if !path.exists() {
        return Err(DatasetError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "annotation log not found"),
        });
    }
    Ok(AnnotationLog::open(path)?.list(None))
}

/// Writes a fresh log containing exactly `annotations`.
pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&serde_json::to_string(&LogRecord::Annotation(a.clone())).expect("serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(id: &str, rec: &str, start: f64, end: f64, label: &str) -> Annotation {
        Annotation {
            id: id.into(),
            recording_id: rec.into(),
            start_s: start,
            end_s: end,
            label: label.into(),
            author: "tester".into(),
            created_at: DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
        }
    }

    #[test]
    fn log_survives_reopen_with_tombstones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        let before = {
            let mut log = AnnotationLog::open(&path).unwrap();
            log.append(ann("a", "r1", 0.0, 1.0, "orca")).unwrap();
            log.append(ann("b", "r1", 1.0, 2.5, "voice")).unwrap();
            log.append(ann("c", "r2", 0.5, 0.7, "background")).unwrap();
            assert!(log.delete("b").unwrap().is_some());
            assert!(log.delete("zzz").unwrap().is_none());
            log.list(None)
        };
        let reopened = AnnotationLog::open(&path).unwrap();
        assert_eq!(reopened.list(None), before);
        assert_eq!(reopened.list(Some("r2")).len(), 1);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().contains("\"deleted_id\":\"b\""));
    }

    #[test]
    fn annotation_lines_carry_exactly_the_annotation_fields() {
        let line = serde_json::to_string(&LogRecord::Annotation(ann("a", "r", 0.0, 1.0, "orca"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["author", "created_at", "end_s", "id", "label", "recording_id", "start_s"]
        );
        assert_eq!(v["created_at"], "2024-05-01T12:00:00.000Z");
    }

    #[test]
    fn append_is_idempotent_per_id() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = AnnotationLog::open(&dir.path().join("l.jsonl")).unwrap();
        log.append(ann("a", "r", 0.0, 1.0, "orca")).unwrap();
        log.append(ann("a", "r", 0.0, 1.0, "orca")).unwrap();
        assert_eq!(log.len(), 1);
        assert!(matches!(
            log.append(ann("a", "r", 0.0, 2.0, "orca")),
            Err(DatasetError::DuplicateId(_))
        ));
    }

    #[test]
    fn validation() {
        let labels = LabelSet::new(["orca", "background"]).unwrap();
        assert!(ann("a", "r", 1.0, 1.0, "orca").validate(Some(&labels)).is_err());
        assert!(ann("a", "r", -1.0, 1.0, "orca").validate(Some(&labels)).is_err());
        assert!(matches!(
            ann("a", "r", 0.0, 1.0, "voice").validate(Some(&labels)),
            Err(DatasetError::UnknownLabel(_))
        ));
        assert!(ann("a", "r", 0.0, 1.0, "orca").validate(Some(&labels)).is_ok());
    }
}
