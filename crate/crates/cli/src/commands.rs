//! Implementations of the one-shot subcommands. Each returns a process exit code.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use tracelens_core::annotate::{annotate_file, annotations_to_json, on_edit, render_annotated_source, CursorContext};
use tracelens_core::docs::{generate_docs, render_text, succinctness_report, DocConfig, SourceMap, SourceRoot};
use tracelens_core::search::{open_session, SearchMatch, SearchQuery, SearchScope};
use tracelens_core::trace::{IngestError, TraceStore};

use crate::cli::{AnnotateArgs, DocsArgs, Format, SearchArgs, ValidateArgs};
use crate::repl;

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const MALFORMED: i32 = 2;
    pub const NO_MATCHES: i32 = 3;
    pub const STALE: i32 = 4;
}

pub fn load_trace(path: &Path, err: &mut dyn Write) -> Result<TraceStore, i32> {
    TraceStore::load(path).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        match e {
            IngestError::Io(_) => exit::FAILURE,
            _ => exit::MALFORMED,
        }
    })
}

/// Marks the store stale when any traced source under `root` was modified
/// after the trace file. Returns the first such file.
pub fn mark_if_sources_changed(store: &TraceStore, trace_path: &Path, root: &Path) -> Option<String> {
    let recorded = fs::metadata(trace_path).and_then(|m| m.modified()).ok()?;
    let changed = store.files().find(|file| {
        fs::metadata(root.join(file))
            .and_then(|m| m.modified())
            .is_ok_and(|t| t > recorded)
    })?;
    let changed = changed.to_string();
    on_edit(store, &changed);
    Some(changed)
}

/// `seq<TAB>origin<TAB>method<TAB>file:line<TAB>"text"`
pub fn format_match_line(m: &SearchMatch) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}",
        m.candidate.seq,
        m.candidate.origin,
        m.method,
        m.loc,
        serde_json::to_string(&m.candidate.text).expect("string serializes")
    )
}

pub fn build_scope(prefixes: &[String], globs: &[String]) -> Result<SearchScope, String> {
    SearchScope::new(prefixes.iter().cloned(), globs.iter()).map_err(|e| e.to_string())
}

pub fn run_search(args: &SearchArgs, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let store = match load_trace(&args.trace, err) {
        Ok(s) => Arc::new(s),
        Err(code) => return code,
    };
    let scope = match build_scope(&args.method_prefixes, &args.file_globs) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::FAILURE;
        }
    };
    let mut query = SearchQuery::new(args.needle.clone());
    query.case_sensitive = !args.ignore_case;
    let session = match open_session(store, query, scope) {
        Ok(s) => s.with_exception_text(!args.no_exception_text),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::FAILURE;
        }
    };
    if args.interactive {
        return repl::run(session, input, out);
    }
    let mut count = 0;
    for m in session {
        count += 1;
        let line = match args.format {
            Format::Text => format_match_line(&m),
            Format::Json => serde_json::to_string(&m).expect("match serializes"),
        };
        let _ = writeln!(out, "{line}");
    }
    if count == 0 {
        let _ = writeln!(out, "no matches");
        exit::NO_MATCHES
    } else {
        exit::OK
    }
}

pub fn run_docs(args: &DocsArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let store = match load_trace(&args.trace, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut config = DocConfig::for_store(&store);
    config.max_sentences = args.k;
    if let Some(marker) = &args.constructor_marker {
        config.constructor_marker = marker.clone();
    }
    let entries = match generate_docs(&store, args.prefix.as_deref(), &config) {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::FAILURE;
        }
    };
    let mut rendered = match args.format {
        Format::Text => render_text(&entries),
        Format::Json => serde_json::to_string_pretty(&entries).expect("docs serialize") + "\n",
    };
    if let Some(map_path) = &args.source_map {
        let map = match SourceMap::load(map_path) {
            Ok(m) => m,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return exit::FAILURE;
            }
        };
        let report = succinctness_report(&entries, &map, &SourceRoot(args.source_root.clone())).render_text();
        match args.format {
            Format::Text => rendered.push_str(&report),
            Format::Json => {
                let _ = write!(err, "{report}");
            }
        }
    }
    match &args.out {
        Some(path) => {
            if let Err(e) = fs::write(path, rendered) {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return exit::FAILURE;
            }
        }
        None => {
            let _ = out.write_all(rendered.as_bytes());
        }
    }
    exit::OK
}

pub fn run_annotate(args: &AnnotateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let store = match load_trace(&args.trace, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(changed) = mark_if_sources_changed(&store, &args.trace, &args.source_root) {
        let _ = writeln!(err, "note: {changed} changed after the trace was recorded");
    }
    let ctx = match CursorContext::new(args.file.clone(), args.cursor) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::FAILURE;
        }
    };
    let annotations = match annotate_file(&store, &ctx, args.allow_stale) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e} (re-record the trace or pass --allow-stale)");
            return exit::STALE;
        }
    };
    match args.format {
        Format::Json => {
            let _ = writeln!(out, "{}", annotations_to_json(&annotations));
        }
        Format::Text => {
            let path = args.source_root.join(&args.file);
            let source = match fs::read_to_string(&path) {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", path.display());
                    return exit::FAILURE;
                }
            };
            let _ = out.write_all(render_annotated_source(&source, &annotations).as_bytes());
        }
    }
    exit::OK
}

pub fn run_validate(args: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let store = match load_trace(&args.trace, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let activations = store.activations().count();
    let truncated = store.activations().filter(|a| a.is_truncated()).count();
    let _ = writeln!(
        out,
        "ok: {} events, {activations} activations ({truncated} truncated), {} files, digest {}",
        store.events().len(),
        store.files().count(),
        store.digest()
    );
    exit::OK
}
