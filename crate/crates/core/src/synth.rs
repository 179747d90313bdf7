//! Seeded generator of well-formed synthetic traces.
//!
//! Used by property tests, the acceptance suite and benchmarks. Traces mix
//! nested calls, loops (backward line jumps), string and non-string values,
//! exceptions and, optionally, activations left open at the end.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::{Access, Arg, Captured, Payload, SourceLoc, TraceEvent};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Generation stops once at least this many events exist and all stacks unwound.
    pub min_events: usize,
    pub threads: usize,
    pub max_depth: usize,
    /// Leave every activation still open when the budget is reached.
    pub truncate: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_events: 1_000,
            threads: 2,
            max_depth: 5,
            truncate: false,
        }
    }
}

struct Method {
    name: &'static str,
    file: &'static str,
    start: u32,
    end: u32,
}

const METHODS: &[Method] = &[
    Method {
        name: "gui.Panel.show",
        file: "gui/panel.py",
        start: 10,
        end: 24,
    },
    Method {
        name: "gui.Panel.title",
        file: "gui/panel.py",
        start: 30,
        end: 36,
    },
    Method {
        name: "core.State.name",
        file: "core/state.py",
        start: 5,
        end: 12,
    },
    Method {
        name: "core.Url.build",
        file: "core/url.py",
        start: 1,
        end: 14,
    },
    Method {
        name: "io.Reader.read",
        file: "io/reader.py",
        start: 20,
        end: 40,
    },
    Method {
        name: "io.Reader.<init>",
        file: "io/reader.py",
        start: 3,
        end: 8,
    },
    Method {
        name: "Range.lowerBoundType",
        file: "Range.java",
        start: 100,
        end: 106,
    },
];

const STRINGS: &[&str] = &[
    "OPEN",
    "CLOSED",
    "open",
    "https://example.org/a",
    "http://example.org",
    "XyZzY123",
    "prefix-XyZzY123-suffix",
    "hello world",
    "",
    "Open sesame",
    "(5..8)",
];

const VARS: &[&str] = &["i", "s", "x", "name", "url", "buf", "items[i]"];
const ARG_NAMES: &[&str] = &["a", "b", "text", "n"];
const EXCEPTIONS: &[&str] = &["ValueError", "IndexError", "KeyError"];

struct Frame {
    act: u64,
    method: usize,
    last_line: Option<u32>,
}

struct Gen {
    rng: ChaCha8Rng,
    seq: u64,
    next_act: u64,
    events: Vec<TraceEvent>,
}

impl Gen {
    fn value(&mut self) -> (String, bool) {
        if self.rng.gen_bool(0.6) {
            let s = STRINGS.choose(&mut self.rng).expect("non-empty");
            (s.to_string(), true)
        } else {
            (self.rng.gen_range(-5..100).to_string(), false)
        }
    }

    fn emit(&mut self, thread: usize, act: u64, loc: SourceLoc, method: Option<&str>, payload: Payload) {
        self.seq += self.rng.gen_range(1..=2);
        self.events.push(TraceEvent {
            seq: self.seq,
            thread: format!("t{thread}"),
            act,
            loc,
            method: method.map(str::to_owned),
            payload,
        });
    }

    fn call(&mut self, thread: usize, stack: &mut Vec<Frame>) {
        let mi = self.rng.gen_range(0..METHODS.len());
        let m = &METHODS[mi];
        let act = self.next_act;
        self.next_act += 1;
        let args = (0..self.rng.gen_range(0..=3))
            .map(|i| {
                let (repr, is_string) = self.value();
                Arg {
                    name: ARG_NAMES[i % ARG_NAMES.len()].to_string(),
                    repr,
                    is_string,
                }
            })
            .collect();
        let recv_before = self
            .rng
            .gen_bool(0.5)
            .then(|| format!("[{}..{})", self.rng.gen_range(0..9), self.rng.gen_range(9..20)));
        self.emit(
            thread,
            act,
            SourceLoc::new(m.file, m.start),
            Some(m.name),
            Payload::Call { args, recv_before },
        );
        stack.push(Frame {
            act,
            method: mi,
            last_line: None,
        });
    }

    fn line(&mut self, thread: usize, frame: &mut Frame) {
        let m = &METHODS[frame.method];
        let line = match frame.last_line {
            Some(last) if last < m.end && self.rng.gen_bool(0.75) => (last + self.rng.gen_range(1..=3)).min(m.end),
            Some(last) => self.rng.gen_range(m.start + 1..=last.max(m.start + 1)),
            None => m.start + 1,
        };
        frame.last_line = Some(line);
        self.emit(thread, frame.act, SourceLoc::new(m.file, line), None, Payload::Line);
        for _ in 0..self.rng.gen_range(0..=3) {
            let var = VARS.choose(&mut self.rng).expect("non-empty").to_string();
            let (repr, is_string) = self.value();
            let access = if self.rng.gen_bool(0.5) {
                Access::Read
            } else {
                Access::Write
            };
            self.emit(
                thread,
                frame.act,
                SourceLoc::new(m.file, line),
                None,
                Payload::Bind {
                    var,
                    repr,
                    is_string,
                    access,
                },
            );
        }
    }

    fn close(&mut self, thread: usize, frame: Frame) {
        let m = &METHODS[frame.method];
        let loc = SourceLoc::new(m.file, frame.last_line.unwrap_or(m.start));
        let payload = if self.rng.gen_bool(0.1) {
            Payload::Exception {
                exc_type: EXCEPTIONS.choose(&mut self.rng).expect("non-empty").to_string(),
                msg: STRINGS.choose(&mut self.rng).expect("non-empty").to_string(),
            }
        } else {
            let ret = self.rng.gen_bool(0.7).then(|| {
                let (repr, is_string) = self.value();
                Captured { repr, is_string }
            });
            let recv_after = self
                .rng
                .gen_bool(0.5)
                .then(|| format!("[{}..9)", self.rng.gen_range(0..9)));
            Payload::Return { ret, recv_after }
        };
        self.emit(thread, frame.act, loc, Some(m.name), payload);
    }
}

/// Generates a valid trace; identical `(seed, config)` gives identical events.
pub fn synth_trace(seed: u64, config: &SynthConfig) -> Vec<TraceEvent> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        seq: 0,
        next_act: 1,
        events: Vec::new(),
    };
    let threads = config.threads.max(1);
    let mut stacks: Vec<Vec<Frame>> = (0..threads).map(|_| Vec::new()).collect();
    loop {
        let budget_reached = g.events.len() >= config.min_events;
        if budget_reached && (config.truncate || stacks.iter().all(Vec::is_empty)) {
            break;
        }
        let t = g.rng.gen_range(0..threads);
        let stack = &mut stacks[t];
        if stack.is_empty() {
            if !budget_reached {
                g.call(t, stack);
            }
            continue;
        }
        let roll: f64 = g.rng.gen();
        let depth = stack.len();
        if budget_reached || roll < 0.12 {
            let frame = stack.pop().expect("non-empty");
            g.close(t, frame);
        } else if roll < 0.25 && depth < config.max_depth {
            g.call(t, stack);
        } else {
            let frame = stack.last_mut().expect("non-empty");
            g.line(t, frame);
        }
    }
    g.events
}
