//! Example-based method documentation.
//!
//! Each closed activation becomes a [`MethodCallRecord`]. Records are
//! classified through a small decision table into a [`TemplateKind`] and
//! rendered as one sentence, e.g. `When called on (5..8), the method
//! returned OPEN.`

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Payload, TraceStore};

pub const DEFAULT_CONSTRUCTOR_MARKER: &str = "<init>";
pub const DEFAULT_MAX_SENTENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocError {
    #[error("sentence cap must be at least 1")]
    ZeroCap,
    #[error("no source available for method '{0}'")]
    MissingSource(String),
    #[error("source map: {0}")]
    SourceMap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordArg {
    pub name: String,
    pub repr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCallRecord {
    pub method: String,
    pub args: Vec<RecordArg>,
    pub recv_before: Option<String>,
    pub recv_after: Option<String>,
    pub ret: Option<String>,
    pub exc_type: Option<String>,
    pub act: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateKind {
    Threw,
    ReturnedAndChanged,
    ChangedOnly,
    ReturnedOnly,
    NoEffect,
    Constructed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    pub method: String,
    pub sentences: Vec<String>,
    pub example_count: usize,
    pub distinct_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocConfig {
    /// Final method-name segment that identifies constructors.
    pub constructor_marker: String,
    /// Maximum number of sentences kept per method.
    pub max_sentences: usize,
}

impl Default for DocConfig {
    fn default() -> Self {
        Self {
            constructor_marker: DEFAULT_CONSTRUCTOR_MARKER.to_string(),
            max_sentences: DEFAULT_MAX_SENTENCES,
        }
    }
}

impl DocConfig {
    /// Defaults, with the constructor marker taken from the trace header if declared.
    pub fn for_store(store: &TraceStore) -> Self {
        let mut cfg = Self::default();
        if let Some(marker) = store.constructor_marker() {
            cfg.constructor_marker = marker.to_string();
        }
        cfg
    }

    fn is_constructor(&self, method: &str) -> bool {
        let last = method.rsplit('.').next().unwrap_or(method);
        last == self.constructor_marker
    }
}

/// One record per activation closed by a return or an exception, in call order.
pub fn collect_records(store: &TraceStore) -> Vec<MethodCallRecord> {
    let mut out = Vec::new();
    for act in store.activations() {
        let Some(close_seq) = act.close_seq else {
            continue;
        };
        let Some(Payload::Call { args, recv_before }) = store.event(act.call_seq).map(|e| &e.payload) else {
            continue;
        };
        let mut record = MethodCallRecord {
            method: act.method.clone(),
            args: args
                .iter()
                .map(|a| RecordArg {
                    name: a.name.clone(),
                    repr: a.repr.clone(),
                })
                .collect(),
            recv_before: recv_before.clone(),
            recv_after: None,
            ret: None,
            exc_type: None,
            act: act.act,
        };
        match store.event(close_seq).map(|e| &e.payload) {
            Some(Payload::Return { ret, recv_after }) => {
                record.ret = ret.as_ref().map(|r| r.repr.clone());
                record.recv_after = recv_after.clone();
            }
            Some(Payload::Exception { exc_type, .. }) => {
                record.exc_type = Some(exc_type.clone());
            }
            _ => continue,
        }
        out.push(record);
    }
    out
}

pub fn classify(record: &MethodCallRecord, config: &DocConfig) -> TemplateKind {
    if record.exc_type.is_some() {
        return TemplateKind::Threw;
    }
    if config.is_constructor(&record.method) {
        return TemplateKind::Constructed;
    }
    let changed = match (&record.recv_before, &record.recv_after) {
        (Some(before), Some(after)) => before != after,
        _ => false,
    };
    match (changed, record.ret.is_some()) {
        (true, true) => TemplateKind::ReturnedAndChanged,
        (true, false) => TemplateKind::ChangedOnly,
        (false, true) => TemplateKind::ReturnedOnly,
        (false, false) => TemplateKind::NoEffect,
    }
}

fn args_clause(record: &MethodCallRecord) -> String {
    if record.args.is_empty() {
        return String::new();
    }
    let joined: Vec<&str> = record.args.iter().map(|a| a.repr.as_str()).collect();
    format!(" with arguments ({})", joined.join(", "))
}

pub fn render_sentence(record: &MethodCallRecord, config: &DocConfig) -> String {
    let kind = classify(record, config);
    let args = args_clause(record);
    if kind == TemplateKind::Constructed {
        return match &record.recv_after {
            Some(after) => format!("When constructed{args}, the object became {after}."),
            None => format!("When constructed{args}, the object was created."),
        };
    }
    let recv = record
        .recv_before
        .as_ref()
        .map(|r| format!(" on {r}"))
        .unwrap_or_default();
    let ret = record.ret.as_deref().unwrap_or_default();
    let after = record.recv_after.as_deref().unwrap_or_default();
    let effect = match kind {
        TemplateKind::Threw => format!("the method threw {}", record.exc_type.as_deref().unwrap_or_default()),
        TemplateKind::ReturnedAndChanged => {
            format!("the method returned {ret} and the object changed to {after}")
        }
        TemplateKind::ChangedOnly => format!("the object changed to {after}"),
        TemplateKind::ReturnedOnly => format!("the method returned {ret}"),
        TemplateKind::NoEffect => "the method completed with no observable effect".to_string(),
        TemplateKind::Constructed => unreachable!(),
    };
    format!("When called{recv}{args}, {effect}.")
}

/// Keeps at most `cap` sentences: first one sentence per template kind (in
/// first-occurrence order), then further sentences in first-occurrence
/// order. The result preserves first-occurrence order.
fn select(distinct: &[(String, TemplateKind)], cap: usize) -> Vec<String> {
    let mut chosen = vec![false; distinct.len()];
    let mut count = 0;
    let mut kinds_seen = HashSet::new();
    for (i, (_, kind)) in distinct.iter().enumerate() {
        if count == cap {
            break;
        }
        if kinds_seen.insert(*kind) {
            chosen[i] = true;
            count += 1;
        }
    }
    for flag in chosen.iter_mut() {
        if count == cap {
            break;
        }
        if !*flag {
            *flag = true;
            count += 1;
        }
    }
    distinct
        .iter()
        .zip(chosen)
        .filter(|(_, keep)| *keep)
        .map(|((s, _), _)| s.clone())
        .collect()
}

/// Documentation for every recorded method whose name starts with `prefix`,
/// sorted by method name.
pub fn generate_docs(store: &TraceStore, prefix: Option<&str>, config: &DocConfig) -> Result<Vec<DocEntry>, DocError> {
    if config.max_sentences == 0 {
        return Err(DocError::ZeroCap);
    }
    let mut grouped: BTreeMap<String, Vec<MethodCallRecord>> = BTreeMap::new();
    for record in collect_records(store) {
        if prefix.is_some_and(|p| !record.method.starts_with(p)) {
            continue;
        }
        grouped.entry(record.method.clone()).or_default().push(record);
    }
    Ok(grouped
        .into_iter()
        .map(|(method, records)| {
            let mut seen = HashSet::new();
            let mut distinct = Vec::new();
            for r in &records {
                let sentence = render_sentence(r, config);
                if seen.insert(sentence.clone()) {
                    distinct.push((sentence, classify(r, config)));
                }
            }
            DocEntry {
                method,
                sentences: select(&distinct, config.max_sentences),
                example_count: records.len(),
                distinct_count: distinct.len(),
            }
        })
        .collect())
}

/// Plain-text rendering: one block per method.
pub fn render_text(entries: &[DocEntry]) -> String {
    let mut out = String::new();
    for entry in entries {
        let calls = if entry.example_count == 1 { "call" } else { "calls" };
        let _ = writeln!(
            out,
            "{} ({} {calls}, {} distinct)",
            entry.method, entry.example_count, entry.distinct_count
        );
        for s in &entry.sentences {
            let _ = writeln!(out, "  {s}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpan {
    pub file: String,
    pub start: u32,
    pub end: u32,
}

/// Method name to source span, loaded from a JSON object
/// `{"Qualified.name": {"file": "...", "start": 1, "end": 9}, ...}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceMap {
    pub methods: BTreeMap<String, MethodSpan>,
}

impl SourceMap {
    pub fn from_json(text: &str) -> Result<Self, DocError> {
        let map: SourceMap = serde_json::from_str(text).map_err(|e| DocError::SourceMap(e.to_string()))?;
        for (name, span) in &map.methods {
            if span.start == 0 || span.end < span.start {
                return Err(DocError::SourceMap(format!(
                    "method '{name}': invalid line range {}..{}",
                    span.start, span.end
                )));
            }
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DocError> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| DocError::SourceMap(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// Anything that can produce the text of a source file by trace path.
pub trait SourceText {
    fn source(&self, file: &str) -> Option<String>;
}

/// Sources read from disk under a root directory.
#[derive(Debug, Clone)]
pub struct SourceRoot(pub PathBuf);

impl SourceText for SourceRoot {
    fn source(&self, file: &str) -> Option<String> {
        fs::read_to_string(self.0.join(file)).ok()
    }
}

impl SourceText for BTreeMap<String, String> {
    fn source(&self, file: &str) -> Option<String> {
        self.get(file).cloned()
    }
}

/// Character count after collapsing every whitespace run to one space and trimming.
fn normalized_len(text: &str) -> usize {
    let mut len = 0;
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = len > 0;
        } else {
            if pending_space {
                len += 1;
                pending_space = false;
            }
            len += 1;
        }
    }
    len
}

/// Mean sentence length over whitespace-normalized method source length.
pub fn succinctness(entry: &DocEntry, map: &SourceMap, sources: &dyn SourceText) -> Result<f64, DocError> {
    let missing = || DocError::MissingSource(entry.method.clone());
    let span = map.methods.get(&entry.method).ok_or_else(missing)?;
    let text = sources.source(&span.file).ok_or_else(missing)?;
    let lines: Vec<&str> = text.lines().collect();
    if span.end as usize > lines.len() {
        return Err(missing());
    }
    let body = lines[span.start as usize - 1..span.end as usize].join("\n");
    let body_len = normalized_len(&body);
    if body_len == 0 {
        return Err(missing());
    }
    if entry.sentences.is_empty() {
        return Ok(0.0);
    }
    let total: usize = entry.sentences.iter().map(|s| s.chars().count()).sum();
    let mean = total as f64 / entry.sentences.len() as f64;
    Ok(mean / body_len as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccinctnessRow {
    pub method: String,
    /// `None` when the method's source is unavailable.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccinctnessReport {
    pub rows: Vec<SuccinctnessRow>,
    /// Mean over methods with a ratio.
    pub mean: Option<f64>,
}

pub fn succinctness_report(entries: &[DocEntry], map: &SourceMap, sources: &dyn SourceText) -> SuccinctnessReport {
    let rows: Vec<SuccinctnessRow> = entries
        .iter()
        .map(|e| SuccinctnessRow {
            method: e.method.clone(),
            ratio: succinctness(e, map, sources).ok(),
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let mean = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    SuccinctnessReport { rows, mean }
}

impl SuccinctnessReport {
    pub fn render_text(&self) -> String {
        let mut out = String::from("succinctness (sentence length / method length)\n");
        for row in &self.rows {
            match row.ratio {
                Some(r) => {
                    let _ = writeln!(out, "  {:<40} {r:.4}", row.method);
                }
                None => {
                    let _ = writeln!(out, "  {:<40} missing source", row.method);
                }
            }
        }
        match self.mean {
            Some(m) => {
                let _ = writeln!(out, "corpus mean: {m:.4}");
            }
            None => out.push_str("corpus mean: n/a\n"),
        }
        out
    }
}
