//! Independent oracles. These read the raw JSONL records with serde_json and
//! never call into the library's parsing or indexing code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde_json::Value;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn records(jsonl: &str) -> Vec<Value> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| serde_json::from_str(l).expect("valid JSON"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleCandidate {
    pub seq: u64,
    pub index: usize,
    pub origin: &'static str,
    pub label: String,
    pub text: String,
    pub method: String,
    pub file: String,
}

/// Every searchable string in file order, following the record format directly.
pub fn oracle_candidates(jsonl: &str) -> Vec<OracleCandidate> {
    let mut method_of_act: HashMap<u64, String> = HashMap::new();
    let mut out = Vec::new();
    for r in records(jsonl) {
        let seq = r["seq"].as_u64().unwrap();
        let act = r["act"].as_u64().unwrap();
        let file = r["loc"]["file"].as_str().unwrap().to_string();
        if r["kind"] == "call" {
            method_of_act.insert(act, r["method"].as_str().unwrap().to_string());
        }
        let method = r
            .get("method")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| method_of_act[&act].clone());
        let mut push = |index: usize, origin: &'static str, label: &str, text: &str| {
            out.push(OracleCandidate {
                seq,
                index,
                origin,
                label: label.to_string(),
                text: text.to_string(),
                method: method.clone(),
                file: file.clone(),
            })
        };
        match r["kind"].as_str().unwrap() {
            "call" => {
                let mut idx = 0;
                for a in r["args"].as_array().unwrap() {
                    if a["is_string"] == true {
                        push(
                            idx,
                            "call_arg",
                            a["name"].as_str().unwrap(),
                            a["repr"].as_str().unwrap(),
                        );
                        idx += 1;
                    }
                }
            }
            "return" => {
                if r["ret"].is_object() && r["ret"]["is_string"] == true {
                    push(
                        0,
                        "return_value",
                        r["method"].as_str().unwrap(),
                        r["ret"]["repr"].as_str().unwrap(),
                    );
                }
            }
            "exception" => push(
                0,
                "exception_message",
                r["exc_type"].as_str().unwrap(),
                r["msg"].as_str().unwrap(),
            ),
            "bind" if r["is_string"] == true => {
                push(0, "bind_var", r["var"].as_str().unwrap(), r["repr"].as_str().unwrap());
            }
            _ => {}
        }
    }
    out
}

/// Assigns every line/bind record to the innermost open activation on its
/// thread by replaying a call stack.
pub fn oracle_own_events(jsonl: &str) -> BTreeMap<u64, Vec<u64>> {
    let mut stacks: HashMap<String, Vec<u64>> = HashMap::new();
    let mut own: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for r in records(jsonl) {
        let thread = r["thread"].as_str().unwrap().to_string();
        let act = r["act"].as_u64().unwrap();
        let seq = r["seq"].as_u64().unwrap();
        let stack = stacks.entry(thread).or_default();
        match r["kind"].as_str().unwrap() {
            "call" => {
                stack.push(act);
                own.entry(act).or_default();
            }
            "return" | "exception" => {
                stack.pop();
            }
            _ => own.entry(*stack.last().unwrap()).or_default().push(seq),
        }
    }
    own
}

/// Splits a sequence of line numbers at every non-increase.
pub fn oracle_split(lines: &[u32]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    for (i, &l) in lines.iter().enumerate() {
        if i == 0 || l <= lines[i - 1] {
            out.push(Vec::new());
        }
        out.last_mut().unwrap().push(l);
    }
    out
}

/// Number of activations closed by a return or exception record.
pub fn oracle_closed_count(jsonl: &str) -> usize {
    records(jsonl)
        .iter()
        .filter(|r| r["kind"] == "return" || r["kind"] == "exception")
        .count()
}
