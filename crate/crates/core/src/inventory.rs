//! Labeled instance inventories: parsing, validation and serialization.
//!
//! Two line-oriented input formats are accepted. The delimited format is
//! `id,action,object[,media_ref]` with an optional header line matching that
//! text exactly. The record-lines format carries one JSON object per line with
//! the same field names.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const HEADER: &str = "id,action,object";
const HEADER_MEDIA: &str = "id,action,object,media_ref";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub action: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        action: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Instance {
            id: id.into(),
            action: action.into(),
            object: object.into(),
            media_ref: None,
        }
    }
}

/// An ordered collection of instances plus the label vocabularies they use.
///
/// Vocabularies list distinct labels in first-occurrence order; the position of a
/// label is its canonical row/column index in every matrix built downstream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Inventory {
    pub instances: Vec<Instance>,
    pub action_vocab: Vec<String>,
    pub object_vocab: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InventoryError {
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("line {line}: empty field `{field}`")]
    EmptyField { line: usize, field: &'static str },
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("input is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("unknown inventory format `{0}` (expected `delimited` or `record-lines`)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InventoryFormat {
    Delimited,
    RecordLines,
}

impl FromStr for InventoryFormat {
    type Err = InventoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delimited" => Ok(InventoryFormat::Delimited),
            "record-lines" => Ok(InventoryFormat::RecordLines),
            other => Err(InventoryError::UnknownFormat(other.to_string())),
        }
    }
}

impl InventoryFormat {
    /// Guess the format from a file name: `.jsonl`/`.ndjson` are record-lines.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => InventoryFormat::RecordLines,
            _ => InventoryFormat::Delimited,
        }
    }
}

impl Inventory {
    /// Build an inventory, rejecting empty fields and duplicate ids.
    pub fn from_instances(instances: Vec<Instance>) -> Result<Self, InventoryError> {
        let mut seen = HashSet::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            for (field, value) in [
                ("id", &inst.id),
                ("action", &inst.action),
                ("object", &inst.object),
            ] {
                if value.is_empty() {
                    return Err(InventoryError::EmptyField { line: i + 1, field });
                }
            }
            if !seen.insert(inst.id.as_str()) {
                return Err(InventoryError::DuplicateId(inst.id.clone()));
            }
        }
        let action_vocab = first_occurrence(instances.iter().map(|i| i.action.as_str()));
        let object_vocab = first_occurrence(instances.iter().map(|i| i.object.as_str()));
        Ok(Inventory {
            instances,
            action_vocab,
            object_vocab,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Map from instance id to its position in `instances`.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.id.as_str(), i))
            .collect()
    }

    /// Canonical delimited serialization (header included when `header` is set).
    pub fn to_delimited(&self, header: bool) -> String {
        let with_media = self.instances.iter().any(|i| i.media_ref.is_some());
        let mut out = String::new();
        if header {
            out.push_str(if with_media { HEADER_MEDIA } else { HEADER });
            out.push('\n');
        }
        for inst in &self.instances {
            out.push_str(&inst.id);
            out.push(',');
            out.push_str(&inst.action);
            out.push(',');
            out.push_str(&inst.object);
            if let Some(m) = &inst.media_ref {
                out.push(',');
                out.push_str(m);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_record_lines(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            // Instance serialization cannot fail: plain strings only.
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 hex digest of the header-less delimited serialization.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_delimited(false).as_bytes());
        hex::encode(hasher.finalize())
    }
}

fn first_occurrence<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for l in labels {
        if seen.insert(l) {
            out.push(l.to_string());
        }
    }
    out
}

pub fn parse_inventory(
    source: &[u8],
    format: InventoryFormat,
) -> Result<Inventory, InventoryError> {
    let text = std::str::from_utf8(source).map_err(|e| InventoryError::Encoding(e.to_string()))?;
    let instances = match format {
        InventoryFormat::Delimited => parse_delimited(text)?,
        InventoryFormat::RecordLines => parse_record_lines(text)?,
    };
    Inventory::from_instances(instances).map_err(|e| match e {
        // from_instances counts records; report the source line instead.
        InventoryError::EmptyField { line, field } => InventoryError::EmptyField {
            line: source_line(text, format, line),
            field,
        },
        other => other,
    })
}

// Translate a 1-based record number back to a 1-based line number.
fn source_line(text: &str, format: InventoryFormat, record: usize) -> usize {
    let mut count = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if format == InventoryFormat::Delimited && n == 0 && is_header(line) {
            continue;
        }
        count += 1;
        if count == record {
            return n + 1;
        }
    }
    record
}

fn is_header(line: &str) -> bool {
    line == HEADER || line == HEADER_MEDIA
}

fn parse_delimited(text: &str) -> Result<Vec<Instance>, InventoryError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || (n == 0 && is_header(line)) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(InventoryError::MalformedRow {
                line: line_no,
                message: format!(
                    "expected 3 or 4 comma-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        for (name, value) in ["id", "action", "object"].iter().zip(&fields) {
            if value.is_empty() {
                return Err(InventoryError::EmptyField {
                    line: line_no,
                    field: name,
                });
            }
        }
        let media_ref = match fields.get(3) {
            Some(&"") => {
                return Err(InventoryError::EmptyField {
                    line: line_no,
                    field: "media_ref",
                })
            }
            Some(m) => Some(m.to_string()),
            None => None,
        };
        out.push(Instance {
            id: fields[0].to_string(),
            action: fields[1].to_string(),
            object: fields[2].to_string(),
            media_ref,
        });
    }
    Ok(out)
}

fn parse_record_lines(text: &str) -> Result<Vec<Instance>, InventoryError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance =
            serde_json::from_str(line).map_err(|e| InventoryError::MalformedRow {
                line: n + 1,
                message: e.to_string(),
            })?;
        out.push(inst);
    }
    Ok(out)
}

/// One broken invariant found by [`validate_inventory`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyField {
        id: String,
        field: &'static str,
    },
    DuplicateId(String),
    MissingActionLabel {
        id: String,
        label: String,
    },
    MissingObjectLabel {
        id: String,
        label: String,
    },
    VocabMismatch {
        vocab: &'static str,
        expected: Vec<String>,
        found: Vec<String>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyField { id, field } => write!(f, "instance `{id}`: empty {field}"),
            Violation::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            Violation::MissingActionLabel { id, label } => {
                write!(
                    f,
                    "instance `{id}`: action `{label}` missing from action vocab"
                )
            }
            Violation::MissingObjectLabel { id, label } => {
                write!(
                    f,
                    "instance `{id}`: object `{label}` missing from object vocab"
                )
            }
            Violation::VocabMismatch {
                vocab,
                expected,
                found,
            } => {
                write!(f, "{vocab} vocab is {found:?}, expected {expected:?}")
            }
        }
    }
}

/// Check every inventory invariant; an empty report means the value is sound.
pub fn validate_inventory(inv: &Inventory) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut seen = HashSet::new();
    let actions: HashSet<&str> = inv.action_vocab.iter().map(String::as_str).collect();
    let objects: HashSet<&str> = inv.object_vocab.iter().map(String::as_str).collect();
    let mut missing_label = false;

    for inst in &inv.instances {
        if inst.id.is_empty() {
            report.push(Violation::EmptyField {
                id: inst.id.clone(),
                field: "id",
            });
        }
        if inst.action.is_empty() {
            report.push(Violation::EmptyField {
                id: inst.id.clone(),
                field: "action",
            });
        }
        if inst.object.is_empty() {
            report.push(Violation::EmptyField {
                id: inst.id.clone(),
                field: "object",
            });
        }
        if !seen.insert(inst.id.as_str()) {
            report.push(Violation::DuplicateId(inst.id.clone()));
        }
        if !inst.action.is_empty() && !actions.contains(inst.action.as_str()) {
            missing_label = true;
            report.push(Violation::MissingActionLabel {
                id: inst.id.clone(),
                label: inst.action.clone(),
            });
        }
        if !inst.object.is_empty() && !objects.contains(inst.object.as_str()) {
            missing_label = true;
            report.push(Violation::MissingObjectLabel {
                id: inst.id.clone(),
                label: inst.object.clone(),
            });
        }
    }

    // A missing label already explains the mismatch; only report order/extra problems otherwise.
    if !missing_label {
        let expected_actions = first_occurrence(
            inv.instances
                .iter()
                .map(|i| i.action.as_str())
                .filter(|l| !l.is_empty()),
        );
        if expected_actions != inv.action_vocab {
            report.push(Violation::VocabMismatch {
                vocab: "action",
                expected: expected_actions,
                found: inv.action_vocab.clone(),
            });
        }
        let expected_objects = first_occurrence(
            inv.instances
                .iter()
                .map(|i| i.object.as_str())
                .filter(|l| !l.is_empty()),
        );
        if expected_objects != inv.object_vocab {
            report.push(Violation::VocabMismatch {
                vocab: "object",
                expected: expected_objects,
                found: inv.object_vocab.clone(),
            });
        }
    }
    report
}
