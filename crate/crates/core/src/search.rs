//! Runtime string search over a recorded trace.
//!
//! Every string-valued runtime expression the tracer saw (string variables,
//! string arguments, string return values, exception messages) is a
//! [`Candidate`]. A [`SearchSession`] walks candidates in trace order and
//! stops at each one containing the needle, the replay analogue of pausing
//! the program at a match.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Payload, SourceLoc, TraceEvent, TraceStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search needle must not be empty")]
    EmptyNeedle,
    #[error("unknown activation {0}")]
    UnknownActivation(u64),
    #[error("invalid file glob '{glob}': {reason}")]
    BadGlob { glob: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    BindVar,
    CallArg,
    ReturnValue,
    ExceptionMessage,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::BindVar => "bind_var",
            Origin::CallArg => "call_arg",
            Origin::ReturnValue => "return_value",
            Origin::ExceptionMessage => "exception_message",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One searchable string value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub seq: u64,
    /// Position among the candidates of the same event.
    pub index: usize,
    pub origin: Origin,
    /// Variable name, argument name, method name, or exception type.
    pub label: String,
    pub text: String,
}

/// Extracts the searchable string values of one event, in within-event order.
pub fn candidates_of(ev: &TraceEvent) -> Vec<Candidate> {
    let mk = |index, origin, label: &str, text: &str| Candidate {
        seq: ev.seq,
        index,
        origin,
        label: label.to_string(),
        text: text.to_string(),
    };
    match &ev.payload {
        Payload::Call { args, .. } => args
            .iter()
            .filter(|a| a.is_string)
            .enumerate()
            .map(|(i, a)| mk(i, Origin::CallArg, &a.name, &a.repr))
            .collect(),
        Payload::Return { ret: Some(ret), .. } if ret.is_string => {
            vec![mk(
                0,
                Origin::ReturnValue,
                ev.method.as_deref().unwrap_or(""),
                &ret.repr,
            )]
        }
        Payload::Exception { exc_type, msg } => {
            vec![mk(0, Origin::ExceptionMessage, exc_type, msg)]
        }
        Payload::Bind {
            var,
            repr,
            is_string: true,
            ..
        } => vec![mk(0, Origin::BindVar, var, repr)],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub needle: String,
    #[serde(default = "default_case_sensitive")]
    pub case_sensitive: bool,
}

fn default_case_sensitive() -> bool {
    true
}

impl SearchQuery {
    pub fn new(needle: impl Into<String>) -> Self {
        Self {
            needle: needle.into(),
            case_sensitive: true,
        }
    }

    pub fn case_insensitive(mut self) -> Self {
        self.case_sensitive = false;
        self
    }

    pub fn matches(&self, text: &str) -> bool {
        if self.case_sensitive {
            text.contains(&self.needle)
        } else {
            text.to_lowercase().contains(&self.needle.to_lowercase())
        }
    }
}

/// Restricts a search to some methods and files. Empty lists match everything.
#[derive(Debug, Clone, Default)]
pub struct SearchScope {
    method_prefixes: Vec<String>,
    file_globs: Vec<glob::Pattern>,
}

impl SearchScope {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn new<P, G>(method_prefixes: P, file_globs: G) -> Result<Self, SearchError>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        G: IntoIterator,
        G::Item: AsRef<str>,
    {
        let file_globs = file_globs
            .into_iter()
            .map(|g| {
                glob::Pattern::new(g.as_ref()).map_err(|e| SearchError::BadGlob {
                    glob: g.as_ref().to_string(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            method_prefixes: method_prefixes.into_iter().map(Into::into).collect(),
            file_globs,
        })
    }

    pub fn method_prefixes(&self) -> &[String] {
        &self.method_prefixes
    }

    pub fn file_globs(&self) -> Vec<&str> {
        self.file_globs.iter().map(glob::Pattern::as_str).collect()
    }

    pub fn contains(&self, method: &str, file: &str) -> bool {
        let method_ok =
            self.method_prefixes.is_empty() || self.method_prefixes.iter().any(|p| method.starts_with(p.as_str()));
        let file_ok = self.file_globs.is_empty() || self.file_globs.iter().any(|g| g.matches(file));
        method_ok && file_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Local {
    pub var: String,
    pub repr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchMatch {
    pub candidate: Candidate,
    pub loc: SourceLoc,
    pub method: String,
    pub act: u64,
    pub frame_locals: Vec<Local>,
    /// The trace was invalidated before this match was produced.
    pub stale: bool,
}

/// Latest value of every variable bound in `act` up to and including `seq`,
/// sorted by variable name.
pub fn frame_locals_at(store: &TraceStore, act: u64, seq: u64) -> Result<Vec<Local>, SearchError> {
    let activation = store.activation(act).ok_or(SearchError::UnknownActivation(act))?;
    let mut latest: BTreeMap<&str, &str> = BTreeMap::new();
    for &s in activation.own_events.iter().take_while(|&&s| s <= seq) {
        if let Some(Payload::Bind { var, repr, .. }) = store.event(s).map(|e| &e.payload) {
            latest.insert(var, repr);
        }
    }
    Ok(latest
        .into_iter()
        .map(|(var, repr)| Local {
            var: var.to_string(),
            repr: repr.to_string(),
        })
        .collect())
}

/// Position of the last match returned: `(seq, index within event)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Cursor {
    pub seq: u64,
    pub index: usize,
}

/// A query plus a cursor over one trace.
#[derive(Debug, Clone)]
pub struct SearchSession {
    store: Arc<TraceStore>,
    query: SearchQuery,
    scope: SearchScope,
    exception_text: bool,
    cursor: Option<Cursor>,
}

pub fn open_session(
    store: Arc<TraceStore>,
    query: SearchQuery,
    scope: SearchScope,
) -> Result<SearchSession, SearchError> {
    if query.needle.is_empty() {
        return Err(SearchError::EmptyNeedle);
    }
    Ok(SearchSession {
        store,
        query,
        scope,
        exception_text: true,
        cursor: None,
    })
}

impl SearchSession {
    /// Whether exception messages are searched (on by default).
    pub fn with_exception_text(mut self, enabled: bool) -> Self {
        self.exception_text = enabled;
        self
    }

    pub fn query(&self) -> &SearchQuery {
        &self.query
    }

    pub fn scope(&self) -> &SearchScope {
        &self.scope
    }

    /// Replaces the scope; the cursor stays where it is.
    pub fn set_scope(&mut self, scope: SearchScope) {
        self.scope = scope;
    }

    pub fn cursor(&self) -> Cursor {
        self.cursor.unwrap_or_default()
    }

    pub fn store(&self) -> &Arc<TraceStore> {
        &self.store
    }

    pub fn is_stale(&self) -> bool {
        self.store.is_stale()
    }

    /// Advances to the next matching candidate. `None` once exhausted.
    pub fn find_next(&mut self) -> Option<SearchMatch> {
        let store = Arc::clone(&self.store);
        let events = store.events();
        let after = self.cursor;
        let start = match after {
            Some(c) => events.partition_point(|e| e.seq < c.seq),
            None => 0,
        };
        for ev in &events[start..] {
            if !self.exception_text && matches!(ev.payload, Payload::Exception { .. }) {
                continue;
            }
            let method = store.method_of(ev).unwrap_or("");
            if !self.scope.contains(method, &ev.loc.file) {
                continue;
            }
            for cand in candidates_of(ev) {
                let pos = Cursor {
                    seq: cand.seq,
                    index: cand.index,
                };
                if after.is_some_and(|c| pos <= c) || !self.query.matches(&cand.text) {
                    continue;
                }
                self.cursor = Some(pos);
                let frame_locals = frame_locals_at(&store, ev.act, ev.seq).unwrap_or_default();
                return Some(SearchMatch {
                    loc: ev.loc.clone(),
                    method: method.to_string(),
                    act: ev.act,
                    frame_locals,
                    stale: store.is_stale(),
                    candidate: cand,
                });
            }
        }
        None
    }
}

impl Iterator for SearchSession {
    type Item = SearchMatch;

    fn next(&mut self) -> Option<SearchMatch> {
        self.find_next()
    }
}
