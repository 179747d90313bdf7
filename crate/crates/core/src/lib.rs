//! Recorded-execution analysis: runtime string search, example-based method
//! documentation, and per-line sample value annotations over a JSONL trace.

pub mod annotate;
pub mod docs;
pub mod search;
pub mod synth;
pub mod trace;

pub use annotate::{
    annotate_file, on_edit, redundancy_filter, segment_iterations, select_iteration, AnnotateError, CursorContext,
    Iteration, LineAnnotation,
};
pub use docs::{
    classify, collect_records, generate_docs, render_sentence, succinctness, DocConfig, DocEntry, DocError,
    MethodCallRecord, SourceMap, TemplateKind,
};
pub use search::{
    candidates_of, frame_locals_at, open_session, Candidate, Origin, SearchError, SearchMatch, SearchQuery,
    SearchScope, SearchSession,
};
pub use trace::{
    ingest, ingest_reader, ingest_str, parse_event, Activation, IngestError, MalformedRecord, SourceLoc, TraceEvent,
    TraceStore,
};
