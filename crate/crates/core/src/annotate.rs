//! Per-line sample values for source files.
//!
//! An activation's line events are cut into iterations: maximal runs with
//! strictly increasing line numbers. The iteration shown for a file is the
//! earliest one covering the cursor line; lines it does not cover fall back
//! to the earliest iteration that does cover them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::trace::{Access, Activation, Payload, SourceLoc, TraceStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("trace is stale: sources changed since it was recorded")]
    StaleTrace,
    #[error("cursor line must be at least 1")]
    InvalidCursor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Iteration {
    pub act: u64,
    /// 1-based position within the activation.
    pub index: usize,
    pub line_events: Vec<u64>,
    pub covered_lines: BTreeSet<u32>,
    pub first_seq: u64,
    /// Own bind events between this iteration's first line event and the next iteration's.
    pub bind_events: Vec<u64>,
}

impl Iteration {
    pub fn id(&self) -> IterationRef {
        IterationRef {
            act: self.act,
            index: self.index,
        }
    }

    pub fn covers(&self, line: u32) -> bool {
        self.covered_lines.contains(&line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IterationRef {
    pub act: u64,
    pub index: usize,
}

/// Splits an activation's own line events wherever the line number does not increase.
pub fn segment_iterations(store: &TraceStore, activation: &Activation) -> Vec<Iteration> {
    let mut out: Vec<Iteration> = Vec::new();
    let mut prev_line: Option<u32> = None;
    for &seq in &activation.own_events {
        let Some(ev) = store.event(seq) else { continue };
        match ev.payload {
            Payload::Line => {
                let line = ev.loc.line;
                if out.is_empty() || prev_line.is_some_and(|p| line <= p) {
                    out.push(Iteration {
                        act: activation.act,
                        index: out.len() + 1,
                        line_events: Vec::new(),
                        covered_lines: BTreeSet::new(),
                        first_seq: seq,
                        bind_events: Vec::new(),
                    });
                }
                let it = out.last_mut().expect("pushed above");
                it.line_events.push(seq);
                it.covered_lines.insert(line);
                prev_line = Some(line);
            }
            Payload::Bind { .. } => {
                if let Some(it) = out.last_mut() {
                    it.bind_events.push(seq);
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CursorContext {
    pub file: String,
    pub cursor_line: u32,
}

impl CursorContext {
    pub fn new(file: impl Into<String>, cursor_line: u32) -> Result<Self, AnnotateError> {
        if cursor_line == 0 {
            return Err(AnnotateError::InvalidCursor);
        }
        Ok(Self {
            file: file.into(),
            cursor_line,
        })
    }
}

/// Every iteration of every activation executing in `file`.
pub fn file_iterations(store: &TraceStore, file: &str) -> Vec<Iteration> {
    store
        .activations_for_file(file)
        .into_iter()
        .flat_map(|a| segment_iterations(store, a))
        .collect()
}

fn check_fresh(store: &TraceStore, allow_stale: bool) -> Result<(), AnnotateError> {
    if store.is_stale() && !allow_stale {
        Err(AnnotateError::StaleTrace)
    } else {
        Ok(())
    }
}

/// The earliest iteration in the cursor's file covering the cursor line.
pub fn select_iteration(
    store: &TraceStore,
    ctx: &CursorContext,
    allow_stale: bool,
) -> Result<Option<Iteration>, AnnotateError> {
    check_fresh(store, allow_stale)?;
    Ok(file_iterations(store, &ctx.file)
        .into_iter()
        .filter(|it| it.covers(ctx.cursor_line))
        .min_by_key(|it| it.first_seq))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotationEntry {
    pub var: String,
    pub repr: String,
    pub access: Access,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineAnnotation {
    #[serde(flatten)]
    pub loc: SourceLoc,
    pub iteration: IterationRef,
    pub entries: Vec<AnnotationEntry>,
}

/// One entry per variable bound on `line` within `it`: the value of its last
/// bind there, marked as a write if any bind on the line wrote it.
fn entries_for_line(store: &TraceStore, it: &Iteration, file: &str, line: u32) -> Vec<AnnotationEntry> {
    let mut entries: Vec<AnnotationEntry> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for &seq in &it.bind_events {
        let Some(ev) = store.event(seq) else { continue };
        if ev.loc.line != line || ev.loc.file != file {
            continue;
        }
        let Payload::Bind { var, repr, access, .. } = &ev.payload else {
            continue;
        };
        match slot.get(var.as_str()) {
            Some(&i) => {
                entries[i].repr = repr.clone();
                if *access == Access::Write {
                    entries[i].access = Access::Write;
                }
            }
            None => {
                slot.insert(var, entries.len());
                entries.push(AnnotationEntry {
                    var: var.clone(),
                    repr: repr.clone(),
                    access: *access,
                });
            }
        }
    }
    entries
}

/// Drops a read entry whose (var, repr) pair was already shown on an earlier
/// line of the same iteration. Writes are always kept. Input order is kept.
pub fn redundancy_filter(annotations: Vec<LineAnnotation>) -> Vec<LineAnnotation> {
    let mut order: Vec<usize> = (0..annotations.len()).collect();
    order.sort_by_key(|&i| (annotations[i].iteration, annotations[i].loc.line));
    let mut shown: HashMap<IterationRef, HashSet<(String, String)>> = HashMap::new();
    let mut keep: Vec<Vec<bool>> = annotations.iter().map(|a| vec![true; a.entries.len()]).collect();
    for i in order {
        let ann = &annotations[i];
        let seen = shown.entry(ann.iteration).or_default();
        for (j, e) in ann.entries.iter().enumerate() {
            let key = (e.var.clone(), e.repr.clone());
            if e.access == Access::Read && seen.contains(&key) {
                keep[i][j] = false;
            } else {
                seen.insert(key);
            }
        }
    }
    annotations
        .into_iter()
        .zip(keep)
        .map(|(mut ann, flags)| {
            let mut flags = flags.into_iter();
            ann.entries.retain(|_| flags.next().unwrap_or(true));
            ann
        })
        .collect()
}

/// Sample values for every executed line of the cursor's file, sorted by line.
pub fn annotate_file(
    store: &TraceStore,
    ctx: &CursorContext,
    allow_stale: bool,
) -> Result<Vec<LineAnnotation>, AnnotateError> {
    check_fresh(store, allow_stale)?;
    let iterations = file_iterations(store, &ctx.file);
    let primary = iterations
        .iter()
        .filter(|it| it.covers(ctx.cursor_line))
        .min_by_key(|it| it.first_seq);

    let mut earliest: BTreeMap<u32, &Iteration> = BTreeMap::new();
    for it in &iterations {
        for &line in &it.covered_lines {
            earliest
                .entry(line)
                .and_modify(|cur| {
                    if it.first_seq < cur.first_seq {
                        *cur = it;
                    }
                })
                .or_insert(it);
        }
    }

    let annotations = earliest
        .into_iter()
        .map(|(line, fallback)| {
            let it = match primary {
                Some(p) if p.covers(line) => p,
                _ => fallback,
            };
            LineAnnotation {
                loc: SourceLoc::new(ctx.file.clone(), line),
                iteration: it.id(),
                entries: entries_for_line(store, it, &ctx.file, line),
            }
        })
        .collect();
    Ok(redundancy_filter(annotations))
}

/// Reacts to a source edit. Invalidation is store-wide whatever the file.
pub fn on_edit(store: &TraceStore, _file: &str) {
    store.mark_stale();
}

pub fn annotations_to_json(annotations: &[LineAnnotation]) -> String {
    serde_json::to_string_pretty(annotations).expect("annotations serialize")
}

/// Source text with `  // var = repr` suffixes on annotated lines.
pub fn render_annotated_source(source: &str, annotations: &[LineAnnotation]) -> String {
    let by_line: HashMap<u32, &LineAnnotation> = annotations.iter().map(|a| (a.loc.line, a)).collect();
    let mut out = String::new();
    for (i, text) in source.lines().enumerate() {
        out.push_str(text);
        if let Some(ann) = by_line.get(&(i as u32 + 1)).filter(|a| !a.entries.is_empty()) {
            let parts: Vec<String> = ann.entries.iter().map(|e| format!("{} = {}", e.var, e.repr)).collect();
            let _ = write!(out, "  // {}", parts.join(", "));
        }
        out.push('\n');
    }
    out
}
