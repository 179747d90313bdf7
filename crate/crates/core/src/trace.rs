//! Event vocabulary, the JSONL trace format, and the indexed trace store.
//!
//! A trace is a sequence of [`TraceEvent`]s ordered by `seq`. Ingestion
//! groups them into [`Activation`]s (one per method invocation) using a
//! per-thread stack, so every `Line`/`Bind` event ends up in the own-event
//! list of exactly one activation: the innermost one open at that point.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Header key naming the constructor method token used by the tracer.
pub const HEADER_CONSTRUCTOR: &str = "constructor";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceLoc {
    pub file: String,
    pub line: u32,
}

impl SourceLoc {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        Self {
            file: file.into(),
            line,
        }
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
}

impl Access {
    pub fn as_str(self) -> &'static str {
        match self {
            Access::Read => "read",
            Access::Write => "write",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Call,
    Return,
    Exception,
    Line,
    Bind,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Call => "call",
            EventKind::Return => "return",
            EventKind::Exception => "exception",
            EventKind::Line => "line",
            EventKind::Bind => "bind",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "call" => EventKind::Call,
            "return" => EventKind::Return,
            "exception" => EventKind::Exception,
            "line" => EventKind::Line,
            "bind" => EventKind::Bind,
            _ => return None,
        })
    }
}

/// One argument as observed at call time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arg {
    pub name: String,
    pub repr: String,
    pub is_string: bool,
}

/// A captured value: its string representation and whether it was a string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Captured {
    pub repr: String,
    pub is_string: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Call {
        args: Vec<Arg>,
        recv_before: Option<String>,
    },
    Return {
        ret: Option<Captured>,
        recv_after: Option<String>,
    },
    Exception {
        exc_type: String,
        msg: String,
    },
    Line,
    Bind {
        var: String,
        repr: String,
        is_string: bool,
        access: Access,
    },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::Call { .. } => EventKind::Call,
            Payload::Return { .. } => EventKind::Return,
            Payload::Exception { .. } => EventKind::Exception,
            Payload::Line => EventKind::Line,
            Payload::Bind { .. } => EventKind::Bind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub thread: String,
    pub act: u64,
    pub loc: SourceLoc,
    pub method: Option<String>,
    pub payload: Payload,
}

impl TraceEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    /// Encodes the event as one trace record (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("seq".into(), json!(self.seq));
        obj.insert("kind".into(), json!(self.kind().as_str()));
        obj.insert("thread".into(), json!(self.thread));
        obj.insert("act".into(), json!(self.act));
        obj.insert("loc".into(), json!({"file": self.loc.file, "line": self.loc.line}));
        if let Some(method) = &self.method {
            obj.insert("method".into(), json!(method));
        }
        match &self.payload {
            Payload::Call { args, recv_before } => {
                obj.insert("args".into(), json!(args));
                obj.insert("recv_before".into(), json!(recv_before));
            }
            Payload::Return { ret, recv_after } => {
                obj.insert("ret".into(), json!(ret));
                obj.insert("recv_after".into(), json!(recv_after));
            }
            Payload::Exception { exc_type, msg } => {
                obj.insert("exc_type".into(), json!(exc_type));
                obj.insert("msg".into(), json!(msg));
            }
            Payload::Line => {}
            Payload::Bind {
                var,
                repr,
                is_string,
                access,
            } => {
                obj.insert("var".into(), json!(var));
                obj.insert("repr".into(), json!(repr));
                obj.insert("is_string".into(), json!(is_string));
                obj.insert("access".into(), json!(access.as_str()));
            }
        }
        Value::Object(obj).to_string()
    }
}

/// A record that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedRecord {
    /// Byte offset within the record where the problem was detected.
    pub offset: usize,
    pub field: Option<String>,
    pub reason: String,
}

impl fmt::Display for MalformedRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "byte {}: field '{field}': {}", self.offset, self.reason),
            None => write!(f, "byte {}: {}", self.offset, self.reason),
        }
    }
}

impl std::error::Error for MalformedRecord {}

impl MalformedRecord {
    fn field(raw: &str, field: &str, reason: impl Into<String>) -> Self {
        let key = field.rsplit('.').next().unwrap_or(field);
        Self {
            offset: key_offset(raw, key).unwrap_or(0),
            field: Some(field.to_string()),
            reason: reason.into(),
        }
    }
}

/// Position of `"key"` used as an object key in `raw`, if any.
fn key_offset(raw: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = raw[from..].find(&needle) {
        let at = from + pos;
        let rest = raw[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(at);
        }
        from = at + needle.len();
    }
    None
}

/// Converts a 1-based line/column pair from the JSON parser into a byte offset.
fn json_error_offset(raw: &str, err: &serde_json::Error) -> usize {
    let line = err.line().max(1);
    let column = err.column();
    let line_start: usize = raw.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(raw.len())
}

struct Record<'a> {
    raw: &'a str,
    obj: &'a Map<String, Value>,
    prefix: &'static str,
}

impl<'a> Record<'a> {
    fn name(&self, field: &str) -> String {
        format!("{}{}", self.prefix, field)
    }

    fn get(&self, field: &str) -> Result<&'a Value, MalformedRecord> {
        self.obj
            .get(field)
            .ok_or_else(|| MalformedRecord::field(self.raw, &self.name(field), "missing"))
    }

    fn wrong(&self, field: &str, expected: &str) -> MalformedRecord {
        MalformedRecord::field(self.raw, &self.name(field), format!("expected {expected}"))
    }

    fn positive(&self, field: &str) -> Result<u64, MalformedRecord> {
        match self.get(field)?.as_u64() {
            Some(0) => Err(MalformedRecord::field(self.raw, &self.name(field), "must be positive")),
            Some(n) => Ok(n),
            None => Err(self.wrong(field, "positive integer")),
        }
    }

    fn string(&self, field: &str) -> Result<String, MalformedRecord> {
        self.get(field)?
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| self.wrong(field, "string"))
    }

    fn opt_string(&self, field: &str) -> Result<Option<String>, MalformedRecord> {
        match self.obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.wrong(field, "string or null")),
        }
    }

    fn boolean(&self, field: &str) -> Result<bool, MalformedRecord> {
        self.get(field)?.as_bool().ok_or_else(|| self.wrong(field, "boolean"))
    }

    fn nested(&self, value: &'a Value, field: &str, prefix: &'static str) -> Result<Record<'a>, MalformedRecord> {
        match value {
            Value::Object(obj) => Ok(Record {
                raw: self.raw,
                obj,
                prefix,
            }),
            _ => Err(self.wrong(field, "object")),
        }
    }
}

/// Decodes one trace record.
pub fn parse_event(line: &str) -> Result<TraceEvent, MalformedRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| MalformedRecord {
        offset: json_error_offset(line, &e),
        field: None,
        reason: format!("invalid JSON: {e}"),
    })?;
    let Value::Object(obj) = &value else {
        return Err(MalformedRecord {
            offset: 0,
            field: None,
            reason: "record must be a JSON object".into(),
        });
    };
    let rec = Record {
        raw: line,
        obj,
        prefix: "",
    };

    let seq = rec.positive("seq")?;
    let kind_name = rec.string("kind")?;
    let kind = EventKind::parse(&kind_name)
        .ok_or_else(|| MalformedRecord::field(line, "kind", format!("unknown kind '{kind_name}'")))?;
    let thread = rec.string("thread")?;
    let act = rec.positive("act")?;

    let loc_rec = rec.nested(rec.get("loc")?, "loc", "loc.")?;
    let file = loc_rec.string("file")?;
    if file.is_empty() {
        return Err(MalformedRecord::field(line, "loc.file", "must be non-empty"));
    }
    if file.contains('\\') {
        return Err(MalformedRecord::field(line, "loc.file", "must use forward slashes"));
    }
    let loc_line = loc_rec.positive("line")?;
    let loc_line = u32::try_from(loc_line).map_err(|_| loc_rec.wrong("line", "32-bit line number"))?;
    let loc = SourceLoc { file, line: loc_line };

    let method = match kind {
        EventKind::Call | EventKind::Return | EventKind::Exception => Some(rec.string("method")?),
        _ => rec.opt_string("method")?,
    };

    let payload = match kind {
        EventKind::Call => {
            let Value::Array(items) = rec.get("args")? else {
                return Err(rec.wrong("args", "array"));
            };
            let mut args = Vec::with_capacity(items.len());
            for item in items {
                let a = rec.nested(item, "args", "args[].")?;
                args.push(Arg {
                    name: a.string("name")?,
                    repr: a.string("repr")?,
                    is_string: a.boolean("is_string")?,
                });
            }
            Payload::Call {
                args,
                recv_before: rec.opt_string("recv_before")?,
            }
        }
        EventKind::Return => {
            let ret = match rec.obj.get("ret") {
                None | Some(Value::Null) => None,
                Some(v) => {
                    let r = rec.nested(v, "ret", "ret.")?;
                    Some(Captured {
                        repr: r.string("repr")?,
                        is_string: r.boolean("is_string")?,
                    })
                }
            };
            Payload::Return {
                ret,
                recv_after: rec.opt_string("recv_after")?,
            }
        }
        EventKind::Exception => Payload::Exception {
            exc_type: rec.string("exc_type")?,
            msg: rec.string("msg")?,
        },
        EventKind::Line => Payload::Line,
        EventKind::Bind => {
            let access = match rec.string("access")?.as_str() {
                "read" => Access::Read,
                "write" => Access::Write,
                other => {
                    return Err(MalformedRecord::field(
                        line,
                        "access",
                        format!("expected \"read\" or \"write\", got '{other}'"),
                    ))
                }
            };
            Payload::Bind {
                var: rec.string("var")?,
                repr: rec.string("repr")?,
                is_string: rec.boolean("is_string")?,
                access,
            }
        }
    };

    Ok(TraceEvent {
        seq,
        thread,
        act,
        loc,
        method,
        payload,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("read failure: {0}")]
    Io(String),
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: MalformedRecord,
    },
    #[error("line {line}: seq {seq} does not follow {prev}")]
    NonMonotonicSeq { line: usize, prev: u64, seq: u64 },
    #[error("line {line}: event seq {seq} refers to activation {act} which is not open")]
    OrphanEvent { line: usize, seq: u64, act: u64 },
    #[error("line {line}: activation {act} called twice (seq {seq})")]
    DuplicateActivation { line: usize, seq: u64, act: u64 },
    #[error(
        "line {line}: event seq {seq} for activation {act} but innermost open activation on thread is {innermost:?}"
    )]
    BadNesting {
        line: usize,
        seq: u64,
        act: u64,
        innermost: Option<u64>,
    },
    #[error("line {line}: line event seq {seq} in {found} but activation {act} runs in {expected}")]
    FileMismatch {
        line: usize,
        seq: u64,
        act: u64,
        expected: String,
        found: String,
    },
}

impl IngestError {
    /// 1-based input line the error refers to, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Io(_) => None,
            IngestError::Malformed { line, .. }
            | IngestError::NonMonotonicSeq { line, .. }
            | IngestError::OrphanEvent { line, .. }
            | IngestError::DuplicateActivation { line, .. }
            | IngestError::BadNesting { line, .. }
            | IngestError::FileMismatch { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Activation {
    pub act: u64,
    pub method: String,
    pub thread: String,
    pub file: String,
    pub call_seq: u64,
    /// Seq of the closing return or exception event; `None` when truncated.
    pub close_seq: Option<u64>,
    pub closed_by: Option<EventKind>,
    /// Own `Line` and `Bind` event seqs, excluding nested activations.
    pub own_events: Vec<u64>,
}

impl Activation {
    pub fn is_truncated(&self) -> bool {
        self.close_seq.is_none()
    }
}

/// Immutable indexed trace. Only the stale flag changes after construction.
#[derive(Debug)]
pub struct TraceStore {
    events: Vec<TraceEvent>,
    activations: BTreeMap<u64, Activation>,
    /// Activation ids ordered by call seq.
    call_order: Vec<u64>,
    /// Per file: activations with own line events there, in call order.
    file_acts: BTreeMap<String, Vec<u64>>,
    /// Per file: every line with at least one line event.
    file_lines: BTreeMap<String, BTreeSet<u32>>,
    header: BTreeMap<String, String>,
    stale: AtomicBool,
}

impl TraceStore {
    pub fn empty() -> Self {
        Self::from_events(Vec::new(), BTreeMap::new()).expect("empty trace is valid")
    }

    /// Builds the store from already decoded events. Errors report the
    /// 1-based position of the event in `events` as the line.
    pub fn from_events(events: Vec<TraceEvent>, header: BTreeMap<String, String>) -> Result<Self, IngestError> {
        let lines: Vec<usize> = (1..=events.len()).collect();
        Self::build(events, &lines, header)
    }

    fn build(events: Vec<TraceEvent>, lines: &[usize], header: BTreeMap<String, String>) -> Result<Self, IngestError> {
        let mut activations: BTreeMap<u64, Activation> = BTreeMap::new();
        let mut call_order = Vec::new();
        let mut stacks: HashMap<&str, Vec<u64>> = HashMap::new();
        let mut file_lines: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
        let mut prev_seq = 0u64;

        for (ev, &line) in events.iter().zip(lines) {
            if ev.seq <= prev_seq {
                return Err(IngestError::NonMonotonicSeq {
                    line,
                    prev: prev_seq,
                    seq: ev.seq,
                });
            }
            prev_seq = ev.seq;
            let stack = stacks.entry(ev.thread.as_str()).or_default();

            if let Payload::Call { .. } = ev.payload {
                if activations.contains_key(&ev.act) {
                    return Err(IngestError::DuplicateActivation {
                        line,
                        seq: ev.seq,
                        act: ev.act,
                    });
                }
                activations.insert(
                    ev.act,
                    Activation {
                        act: ev.act,
                        method: ev.method.clone().unwrap_or_default(),
                        thread: ev.thread.clone(),
                        file: ev.loc.file.clone(),
                        call_seq: ev.seq,
                        close_seq: None,
                        closed_by: None,
                        own_events: Vec::new(),
                    },
                );
                call_order.push(ev.act);
                stack.push(ev.act);
                continue;
            }

            let open = activations.get(&ev.act).is_some_and(|a| a.close_seq.is_none());
            if !open {
                return Err(IngestError::OrphanEvent {
                    line,
                    seq: ev.seq,
                    act: ev.act,
                });
            }
            let innermost = stack.last().copied();
            if innermost != Some(ev.act) {
                return Err(IngestError::BadNesting {
                    line,
                    seq: ev.seq,
                    act: ev.act,
                    innermost,
                });
            }
            let activation = activations.get_mut(&ev.act).expect("checked above");
            match ev.payload {
                Payload::Line => {
                    if ev.loc.file != activation.file {
                        return Err(IngestError::FileMismatch {
                            line,
                            seq: ev.seq,
                            act: ev.act,
                            expected: activation.file.clone(),
                            found: ev.loc.file.clone(),
                        });
                    }
                    activation.own_events.push(ev.seq);
                    file_lines.entry(ev.loc.file.clone()).or_default().insert(ev.loc.line);
                }
                Payload::Bind { .. } => activation.own_events.push(ev.seq),
                Payload::Return { .. } | Payload::Exception { .. } => {
                    activation.close_seq = Some(ev.seq);
                    activation.closed_by = Some(ev.kind());
                    stack.pop();
                }
                Payload::Call { .. } => unreachable!(),
            }
        }

        let mut store = Self {
            events,
            activations,
            call_order,
            file_acts: BTreeMap::new(),
            file_lines,
            header,
            stale: AtomicBool::new(false),
        };
        let mut file_acts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for &act in &store.call_order {
            let a = &store.activations[&act];
            let has_line = a
                .own_events
                .iter()
                .any(|&s| matches!(store.event(s).map(|e| &e.payload), Some(Payload::Line)));
            if has_line {
                file_acts.entry(a.file.clone()).or_default().push(act);
            }
        }
        store.file_acts = file_acts;
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let file =
            File::open(path.as_ref()).map_err(|e| IngestError::Io(format!("{}: {e}", path.as_ref().display())))?;
        ingest_reader(BufReader::new(file))
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn event(&self, seq: u64) -> Option<&TraceEvent> {
        self.events
            .binary_search_by_key(&seq, |e| e.seq)
            .ok()
            .map(|i| &self.events[i])
    }

    pub fn activation(&self, act: u64) -> Option<&Activation> {
        self.activations.get(&act)
    }

    /// All activations in call order.
    pub fn activations(&self) -> impl Iterator<Item = &Activation> {
        self.call_order.iter().map(|a| &self.activations[a])
    }

    /// Activations whose own line events touch `file`, ordered by call seq.
    pub fn activations_for_file(&self, file: &str) -> Vec<&Activation> {
        self.file_acts
            .get(file)
            .map(|acts| acts.iter().map(|a| &self.activations[a]).collect())
            .unwrap_or_default()
    }

    /// Files with at least one executed line.
    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.file_lines.keys().map(String::as_str)
    }

    pub fn executed_lines(&self, file: &str) -> Option<&BTreeSet<u32>> {
        self.file_lines.get(file)
    }

    pub fn header(&self) -> &BTreeMap<String, String> {
        &self.header
    }

    pub fn constructor_marker(&self) -> Option<&str> {
        self.header.get(HEADER_CONSTRUCTOR).map(String::as_str)
    }

    pub fn is_stale(&self) -> bool {
        self.stale.load(Ordering::Acquire)
    }

    /// Marks every derived result as invalid. Idempotent; never reverts.
    pub fn mark_stale(&self) {
        self.stale.store(true, Ordering::Release);
    }

    /// Method name of the activation an event belongs to.
    pub fn method_of<'a>(&'a self, ev: &'a TraceEvent) -> Option<&'a str> {
        ev.method
            .as_deref()
            .or_else(|| self.activations.get(&ev.act).map(|a| a.method.as_str()))
    }

    /// SHA-256 over the header and the canonical encoding of every event.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in &self.header {
            hasher.update(format!("# {k}={v}\n"));
        }
        for ev in &self.events {
            hasher.update(ev.to_json_line());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Rebuilds every index from the event list and compares.
    pub fn indexes_consistent(&self) -> bool {
        match Self::from_events(self.events.clone(), self.header.clone()) {
            Ok(fresh) => {
                fresh.activations == self.activations
                    && fresh.call_order == self.call_order
                    && fresh.file_acts == self.file_acts
                    && fresh.file_lines == self.file_lines
            }
            Err(_) => false,
        }
    }
}

/// Parses a header line (`# key=value key2=value2`) into `header`.
fn parse_header(line: &str, header: &mut BTreeMap<String, String>) {
    for token in line.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = token.split_once('=') {
            header.insert(k.to_string(), v.to_string());
        }
    }
}

/// Builds a store from trace lines. Blank lines are skipped; lines starting
/// with `#` are header directives.
pub fn ingest<I, S>(lines: I) -> Result<TraceStore, IngestError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut events = Vec::new();
    let mut line_numbers = Vec::new();
    let mut header = BTreeMap::new();
    for (idx, raw) in lines.into_iter().enumerate() {
        let raw = raw.as_ref();
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        if raw.starts_with('#') {
            parse_header(raw, &mut header);
            continue;
        }
        let ev = parse_event(raw).map_err(|source| IngestError::Malformed { line: idx + 1, source })?;
        events.push(ev);
        line_numbers.push(idx + 1);
    }
    TraceStore::build(events, &line_numbers, header)
}

pub fn ingest_reader(reader: impl BufRead) -> Result<TraceStore, IngestError> {
    let lines: Vec<String> = reader
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| IngestError::Io(e.to_string()))?;
    ingest(lines)
}

pub fn ingest_str(text: &str) -> Result<TraceStore, IngestError> {
    ingest(text.lines())
}

/// Serializes events (and an optional header) in the trace file format.
pub fn to_jsonl(header: &BTreeMap<String, String>, events: &[TraceEvent]) -> String {
    let mut out = String::new();
    if !header.is_empty() {
        out.push('#');
        for (k, v) in header {
            out.push_str(&format!(" {k}={v}"));
        }
        out.push('\n');
    }
    for ev in events {
        out.push_str(&ev.to_json_line());
        out.push('\n');
    }
    out
}
