// SPDX-License-Identifier: Apache-2.0

//! Representation dump interchange format.
//!
//! A dump is a directory holding three files:
//!
//! * `manifest.json`: a [`DumpManifest`] object, keys in declaration order.
//! * `records.jsonl`: one [`ExampleRecord`] per line. Line order is the
//!   canonical example order.
//! * `hidden.f32`: row-major little-endian binary32 matrix with
//!   `hidden_dim` columns and no header. The row count is implied by the
//!   file length.
//!
//! Reading goes through the same checker as [`validate_dump`], so a dump
//! that reads successfully is exactly a dump with no violations. Writing
//! serializes all three files in memory and runs the checker on those bytes
//! before anything touches the filesystem.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;
pub const NUM_CANDIDATES: usize = 2;
pub const DTYPE_F32LE: &str = "f32le";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const HIDDEN_FILE: &str = "hidden.f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpManifest {
    pub format_version: u64,
    pub model_id: String,
    pub dataset_id: String,
    pub hidden_dim: usize,
    pub num_examples: usize,
    pub num_candidates: usize,
    pub dtype: String,
    pub prompt_template: String,
    pub split_counts: BTreeMap<Split, usize>,
}

impl DumpManifest {
    /// Manifest with the fixed format fields filled in and `num_examples`
    /// derived from the split counts.
    pub fn new(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        hidden_dim: usize,
        prompt_template: impl Into<String>,
        split_counts: BTreeMap<Split, usize>,
    ) -> Self {
        DumpManifest {
            format_version: FORMAT_VERSION,
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            hidden_dim,
            num_examples: split_counts.values().sum(),
            num_candidates: NUM_CANDIDATES,
            dtype: DTYPE_F32LE.to_string(),
            prompt_template: prompt_template.into(),
            split_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub split: Split,
    pub question: String,
    pub candidates: [String; 2],
    pub gold_index: usize,
    /// Raw (unnormalized) natural-log scores of each candidate.
    pub query_logprobs: [f64; 2],
    pub hidden_rows: [usize; 2],
}

impl ExampleRecord {
    pub fn distractor_index(&self) -> usize {
        1 - self.gold_index
    }
}

/// Row-major matrix of hidden vectors, `dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl HiddenMatrix {
    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("hidden_dim must be at least 1"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(HiddenMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// A validated, immutable dump.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationDump {
    manifest: DumpManifest,
    records: Vec<ExampleRecord>,
    hidden: HiddenMatrix,
}

impl RepresentationDump {
    /// Assemble and validate a dump from in-memory parts.
    pub fn new(
        manifest: DumpManifest,
        records: Vec<ExampleRecord>,
        vectors: &[Vec<f32>],
    ) -> Result<Self> {
        let hidden = HiddenMatrix::from_rows(manifest.hidden_dim.max(1), vectors)?;
        let files = DumpBytes::encode(&manifest, &records, &hidden)?;
        into_result(files.check())?;
        Ok(RepresentationDump {
            manifest,
            records,
            hidden,
        })
    }

    pub fn manifest(&self) -> &DumpManifest {
        &self.manifest
    }

    pub fn records(&self) -> &[ExampleRecord] {
        &self.records
    }

    pub fn hidden(&self) -> &HiddenMatrix {
        &self.hidden
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.dim()
    }

    pub fn examples(&self, split: Split) -> impl Iterator<Item = &ExampleRecord> + '_ {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.examples(split).count()
    }

    /// Hidden vector of candidate `candidate` (0 or 1) of `record`.
    pub fn candidate_vector(&self, record: &ExampleRecord, candidate: usize) -> &[f32] {
        self.hidden.row(record.hidden_rows[candidate])
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        DumpBytes::encode(&self.manifest, &self.records, &self.hidden)?.write(out_dir)
    }
}

/// Serialize and write a dump. Fails without touching `out_dir` if the
/// inputs violate any dump invariant.
pub fn write_dump(
    manifest: &DumpManifest,
    records: &[ExampleRecord],
    vectors: &[Vec<f32>],
    out_dir: &Path,
) -> Result<()> {
    let hidden = HiddenMatrix::from_rows(manifest.hidden_dim.max(1), vectors)?;
    let files = DumpBytes::encode(manifest, records, &hidden)?;
    into_result(files.check())?;
    files.write(out_dir)
}

pub fn read_dump(dir: &Path) -> Result<RepresentationDump> {
    let files = DumpBytes::load(dir);
    let (dump, violations) = files.check();
    match dump {
        Some(dump) if violations.is_empty() => Ok(dump),
        _ => Err(classify(violations)),
    }
}

/// Every violated invariant. Empty iff [`read_dump`] succeeds.
pub fn validate_dump(dir: &Path) -> ValidationReport {
    let (_, violations) = DumpBytes::load(dir).check();
    ValidationReport { violations }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingFile,
    MalformedManifest,
    MalformedRecord,
    UnsupportedVersion,
    ManifestInvariant,
    SplitCountMismatch,
    ExampleCountMismatch,
    DuplicateId,
    BadGoldIndex,
    NonFiniteLogprob,
    RowsNotDistinct,
    RowOutOfRange,
    TensorLength,
    NonFiniteTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Category {
    Validation,
    Data,
    Format,
    Version,
}

impl ViolationKind {
    fn category(self) -> Category {
        use ViolationKind::*;
        match self {
            UnsupportedVersion => Category::Version,
            MissingFile | MalformedManifest | MalformedRecord | TensorLength => Category::Format,
            NonFiniteLogprob | NonFiniteTensor => Category::Data,
            ManifestInvariant | SplitCountMismatch | ExampleCountMismatch | DuplicateId
            | BadGoldIndex | RowsNotDistinct | RowOutOfRange => Category::Validation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending record id, when the violation is attached to one record.
    pub record_id: Option<String>,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            record_id: None,
            detail: detail.into(),
        }
    }

    fn for_record(kind: ViolationKind, id: &str, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            record_id: Some(id.to_string()),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        match &self.record_id {
            Some(id) => write!(f, "[{kind}] record `{id}`: {}", self.detail),
            None => write!(f, "[{kind}] {}", self.detail),
        }
    }
}

fn classify(violations: Vec<Violation>) -> Error {
    let worst = violations
        .iter()
        .map(|v| v.kind.category())
        .max()
        .unwrap_or(Category::Format);
    if worst == Category::Version {
        let found = violations
            .iter()
            .find(|v| v.kind == ViolationKind::UnsupportedVersion)
            .and_then(|v| v.detail.split_whitespace().last()?.parse().ok())
            .unwrap_or(0);
        return Error::Version {
            found,
            expected: FORMAT_VERSION,
        };
    }
    let selected: Vec<_> = violations
        .into_iter()
        .filter(|v| v.kind.category() == worst)
        .collect();
    match worst {
        Category::Format => Error::Format(selected),
        Category::Data => Error::Data(selected),
        _ => Error::Validation(selected),
    }
}

fn into_result((dump, violations): (Option<RepresentationDump>, Vec<Violation>)) -> Result<()> {
    match dump {
        Some(_) if violations.is_empty() => Ok(()),
        _ => Err(classify(violations)),
    }
}

/// Raw file contents of a dump, possibly missing.
struct DumpBytes {
    manifest: std::result::Result<Vec<u8>, String>,
    records: std::result::Result<Vec<u8>, String>,
    hidden: std::result::Result<Vec<u8>, String>,
}

impl DumpBytes {
    fn encode(
        manifest: &DumpManifest,
        records: &[ExampleRecord],
        hidden: &HiddenMatrix,
    ) -> Result<Self> {
        let mut manifest_bytes =
            serde_json::to_vec_pretty(manifest).map_err(|e| Error::json(MANIFEST_FILE, e))?;
        manifest_bytes.push(b'\n');
        let mut record_bytes = Vec::new();
        for record in records {
            serde_json::to_writer(&mut record_bytes, record)
                .map_err(|e| Error::json(RECORDS_FILE, e))?;
            record_bytes.push(b'\n');
        }
        Ok(DumpBytes {
            manifest: Ok(manifest_bytes),
            records: Ok(record_bytes),
            hidden: Ok(hidden.to_le_bytes()),
        })
    }

    fn load(dir: &Path) -> Self {
        let read = |name: &str| fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
        DumpBytes {
            manifest: read(MANIFEST_FILE),
            records: read(RECORDS_FILE),
            hidden: read(HIDDEN_FILE),
        }
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        for (name, bytes) in [
            (MANIFEST_FILE, &self.manifest),
            (RECORDS_FILE, &self.records),
            (HIDDEN_FILE, &self.hidden),
        ] {
            let bytes = bytes.as_ref().map_err(|e| Error::invalid(e.clone()))?;
            let path = out_dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Check every invariant. Returns the decoded dump when decoding got far
    /// enough to build one; callers must still treat a nonempty violation
    /// list as failure.
    fn check(&self) -> (Option<RepresentationDump>, Vec<Violation>) {
        let mut violations = Vec::new();

        let manifest = match &self.manifest {
            Ok(bytes) => parse_manifest(bytes, &mut violations),
            Err(e) => {
                violations.push(Violation::new(ViolationKind::MissingFile, e.clone()));
                None
            }
        };
        // Without a trustworthy hidden_dim nothing downstream can be checked.
        if let Some(Fatal::Version) = manifest.as_ref().and_then(|m| m.as_ref().err()) {
            return (None, violations);
        }
        let manifest = manifest.and_then(|m| m.ok());

        let records = match &self.records {
            Ok(bytes) => parse_records(bytes, &mut violations),
            Err(e) => {
                violations.push(Violation::new(ViolationKind::MissingFile, e.clone()));
                None
            }
        };

        let hidden = match (&self.hidden, &manifest) {
            (Err(e), _) => {
                violations.push(Violation::new(ViolationKind::MissingFile, e.clone()));
                None
            }
            (Ok(bytes), Some(m)) if m.hidden_dim >= 1 => {
                decode_tensor(bytes, m.hidden_dim, &mut violations)
            }
            _ => None,
        };

        if let (Some(m), Some(recs)) = (&manifest, &records) {
            check_counts(m, recs, &mut violations);
        }
        if let Some(recs) = &records {
            check_records(
                recs,
                hidden.as_ref().map(HiddenMatrix::rows),
                &mut violations,
            );
        }

        match (manifest, records, hidden) {
            (Some(manifest), Some(records), Some(hidden)) if violations.is_empty() => (
                Some(RepresentationDump {
                    manifest,
                    records: records.into_iter().map(ExampleRecord::from).collect(),
                    hidden,
                }),
                violations,
            ),
            _ => (None, violations),
        }
    }
}

enum Fatal {
    Version,
    Other,
}

fn parse_manifest(
    bytes: &[u8],
    violations: &mut Vec<Violation>,
) -> Option<std::result::Result<DumpManifest, Fatal>> {
    let value: serde_json::Value = match serde_json::from_slice(bytes) {
        Ok(v) => v,
        Err(e) => {
            violations.push(Violation::new(
                ViolationKind::MalformedManifest,
                format!("not valid JSON: {e}"),
            ));
            return Some(Err(Fatal::Other));
        }
    };
    if value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        != Some(FORMAT_VERSION)
    {
        // A missing or non-integer version is still a version problem.
        let shown = value
            .get("format_version")
            .map(|v| v.to_string())
            .unwrap_or_else(|| "missing".into());
        violations.push(Violation::new(
            ViolationKind::UnsupportedVersion,
            format!("format_version {shown}"),
        ));
        return Some(Err(Fatal::Version));
    }
    let manifest: DumpManifest = match serde_json::from_value(value) {
        Ok(m) => m,
        Err(e) => {
            violations.push(Violation::new(
                ViolationKind::MalformedManifest,
                e.to_string(),
            ));
            return Some(Err(Fatal::Other));
        }
    };

    let mut bad = |detail: String| {
        violations.push(Violation::new(ViolationKind::ManifestInvariant, detail));
    };
    if manifest.num_candidates != NUM_CANDIDATES {
        bad(format!(
            "num_candidates is {}, must be {NUM_CANDIDATES}",
            manifest.num_candidates
        ));
    }
    if manifest.dtype != DTYPE_F32LE {
        bad(format!(
            "dtype is `{}`, must be `{DTYPE_F32LE}`",
            manifest.dtype
        ));
    }
    if manifest.hidden_dim == 0 {
        bad("hidden_dim must be at least 1".into());
    }
    if manifest.num_examples == 0 {
        bad("num_examples must be at least 1".into());
    }
    let total: usize = manifest.split_counts.values().sum();
    if total != manifest.num_examples {
        bad(format!(
            "split_counts sum to {total} but num_examples is {}",
            manifest.num_examples
        ));
    }
    Some(Ok(manifest))
}

/// Accepts a JSON number, `null` (read as NaN) or a string such as
/// `"NaN"`/`"Infinity"`, so non-finite values surface as data violations
/// rather than parse failures.
fn lenient_f64<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        Number(f64),
        Text(String),
        Null(()),
    }
    match Num::deserialize(de)? {
        Num::Number(v) => Ok(v),
        Num::Null(()) => Ok(f64::NAN),
        Num::Text(s) => s
            .trim()
            .trim_start_matches('+')
            .parse::<f64>()
            .map_err(|_| serde::de::Error::custom(format!("not a number: `{s}`"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    split: Split,
    question: String,
    candidates: [String; 2],
    gold_index: i64,
    query_logprobs: [LenientF64; 2],
    hidden_rows: [i64; 2],
}

#[derive(Deserialize)]
#[serde(transparent)]
struct LenientF64(#[serde(deserialize_with = "lenient_f64")] f64);

/// Intermediate record: typed fields, integer fields not yet range-checked.
struct CheckedRecord {
    record: ExampleRecord,
    gold_index: i64,
    hidden_rows: [i64; 2],
}

fn parse_records(bytes: &[u8], violations: &mut Vec<Violation>) -> Option<Vec<CheckedRecord>> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            violations.push(Violation::new(
                ViolationKind::MalformedRecord,
                format!("{RECORDS_FILE} is not UTF-8: {e}"),
            ));
            return None;
        }
    };
    let mut out = Vec::new();
    let mut ok = true;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line = quote_nonfinite_literals(line);
        match serde_json::from_str::<RawRecord>(&line) {
            Ok(raw) => {
                let clamp = |v: i64| usize::try_from(v).unwrap_or(usize::MAX);
                out.push(CheckedRecord {
                    record: ExampleRecord {
                        id: raw.id,
                        split: raw.split,
                        question: raw.question,
                        candidates: raw.candidates,
                        gold_index: clamp(raw.gold_index),
                        query_logprobs: [raw.query_logprobs[0].0, raw.query_logprobs[1].0],
                        hidden_rows: [clamp(raw.hidden_rows[0]), clamp(raw.hidden_rows[1])],
                    },
                    gold_index: raw.gold_index,
                    hidden_rows: raw.hidden_rows,
                });
            }
            Err(e) => {
                ok = false;
                violations.push(Violation::new(
                    ViolationKind::MalformedRecord,
                    format!("line {}: {e}", lineno + 1),
                ));
            }
        }
    }
    ok.then_some(out)
}

/// Python's `json` module writes bare `NaN`, `Infinity` and `-Infinity`.
/// Quote those tokens (outside of strings) so they reach [`lenient_f64`].
fn quote_nonfinite_literals(line: &str) -> std::borrow::Cow<'_, str> {
    if !line.contains("NaN") && !line.contains("Infinity") {
        return line.into();
    }
    let mut out = String::with_capacity(line.len() + 8);
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            rest = &rest[1..];
            continue;
        }
        let token = ["-Infinity", "+Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        match token {
            Some(t) => {
                out.push('"');
                out.push_str(t);
                out.push('"');
                rest = &rest[t.len()..];
            }
            None => {
                out.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    out.into()
}

fn decode_tensor(
    bytes: &[u8],
    dim: usize,
    violations: &mut Vec<Violation>,
) -> Option<HiddenMatrix> {
    let row_bytes = dim * 4;
    if !bytes.len().is_multiple_of(row_bytes) {
        violations.push(Violation::new(
            ViolationKind::TensorLength,
            format!(
                "{HIDDEN_FILE} has {} bytes, not a multiple of hidden_dim x 4 = {row_bytes}",
                bytes.len()
            ),
        ));
        return None;
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let bad_rows: Vec<usize> = data
        .chunks_exact(dim)
        .enumerate()
        .filter(|(_, row)| row.iter().any(|v| !v.is_finite()))
        .map(|(i, _)| i)
        .collect();
    if let Some(first) = bad_rows.first() {
        violations.push(Violation::new(
            ViolationKind::NonFiniteTensor,
            format!(
                "{} row(s) contain NaN or Inf, first is row {first}",
                bad_rows.len()
            ),
        ));
    }
    Some(HiddenMatrix { dim, data })
}

fn check_counts(
    manifest: &DumpManifest,
    records: &[CheckedRecord],
    violations: &mut Vec<Violation>,
) {
    if records.len() != manifest.num_examples {
        violations.push(Violation::new(
            ViolationKind::ExampleCountMismatch,
            format!(
                "{RECORDS_FILE} has {} records, manifest num_examples is {}",
                records.len(),
                manifest.num_examples
            ),
        ));
        return;
    }
    let total: usize = manifest.split_counts.values().sum();
    if total != manifest.num_examples {
        // Already reported as a manifest invariant.
        return;
    }
    for split in Split::ALL {
        let expected = manifest.split_counts.get(&split).copied().unwrap_or(0);
        let found = records.iter().filter(|r| r.record.split == split).count();
        if expected != found {
            violations.push(Violation::new(
                ViolationKind::SplitCountMismatch,
                format!("split `{split}`: manifest says {expected}, records have {found}"),
            ));
        }
    }
}

fn check_records(records: &[CheckedRecord], rows: Option<usize>, violations: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for checked in records {
        let r = &checked.record;
        if !seen.insert(r.id.as_str()) {
            violations.push(Violation::for_record(
                ViolationKind::DuplicateId,
                &r.id,
                "id appears more than once",
            ));
        }
        if !(0..=1).contains(&checked.gold_index) {
            violations.push(Violation::for_record(
                ViolationKind::BadGoldIndex,
                &r.id,
                format!("gold_index {} is not 0 or 1", checked.gold_index),
            ));
        }
        if r.query_logprobs.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::for_record(
                ViolationKind::NonFiniteLogprob,
                &r.id,
                format!("query_logprobs {:?} must be finite", r.query_logprobs),
            ));
        }
        let [a, b] = checked.hidden_rows;
        if a == b {
            violations.push(Violation::for_record(
                ViolationKind::RowsNotDistinct,
                &r.id,
                format!("both candidates point at hidden row {a}"),
            ));
        }
        let in_range = |row: i64| row >= 0 && rows.is_none_or(|n| (row as u64) < n as u64);
        if let Some(bad) = [a, b].into_iter().find(|&row| !in_range(row)) {
            violations.push(Violation::for_record(
                ViolationKind::RowOutOfRange,
                &r.id,
                format!(
                    "hidden row {bad} out of range (tensor has {} rows)",
                    rows.map_or("?".to_string(), |n| n.to_string())
                ),
            ));
        }
    }
}

impl From<CheckedRecord> for ExampleRecord {
    fn from(c: CheckedRecord) -> Self {
        c.record
    }
}
