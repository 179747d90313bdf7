mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use serde_json::Value;
use tracelens_core::docs::{
    classify, collect_records, generate_docs, render_sentence, succinctness_report, DocConfig, DocEntry,
    MethodCallRecord, RecordArg, SourceMap, SourceRoot, TemplateKind,
};
use tracelens_core::trace::{ingest_str, TraceStore};

use common::{fixtures_dir, oracle_closed_count};

fn guava() -> TraceStore {
    TraceStore::load(fixtures_dir().join("guava/trace.jsonl")).unwrap()
}

#[test]
fn guava_listing_sentences() {
    let store = guava();
    let docs = generate_docs(&store, Some("Range."), &DocConfig::for_store(&store)).unwrap();
    let lbt = docs.iter().find(|d| d.method == "Range.lowerBoundType").unwrap();
    assert_eq!(
        lbt.sentences,
        vec![
            "When called on (5..8), the method returned OPEN.",
            "When called on [5..8), the method returned CLOSED.",
        ]
    );
    assert_eq!((lbt.example_count, lbt.distinct_count), (3, 2));
    let names: Vec<_> = docs.iter().map(|d| d.method.as_str()).collect();
    assert_eq!(
        names,
        vec![
            "Range.closedOpen",
            "Range.contains",
            "Range.lowerBoundType",
            "Range.open"
        ]
    );
    let contains = &docs[1];
    assert_eq!(
        contains.sentences,
        vec![
            "When called on [5..8) with arguments (null), the method threw NullPointerException.",
            "When called on [5..8) with arguments (6), the method returned true.",
        ]
    );
}

#[test]
fn records_lift_receiver_and_exception() {
    let records = collect_records(&guava());
    let first_lbt = records.iter().find(|r| r.method == "Range.lowerBoundType").unwrap();
    assert_eq!(first_lbt.recv_before.as_deref(), Some("(5..8)"));
    assert_eq!(first_lbt.ret.as_deref(), Some("OPEN"));
    let threw = records.iter().find(|r| r.exc_type.is_some()).unwrap();
    assert_eq!(threw.exc_type.as_deref(), Some("NullPointerException"));
    assert_eq!(threw.ret, None);
}

#[test]
fn truncated_activations_skipped() {
    let mut lines = Vec::new();
    let mut seq = 0;
    let mut push = |body: String| {
        seq += 1;
        lines.push(format!(r#"{{"seq":{seq},"thread":"t0",{body}}}"#));
    };
    for act in 1..=93u64 {
        push(format!(
            r#""kind":"call","act":{act},"loc":{{"file":"m.x","line":1}},"method":"M.f{}","args":[],"recv_before":null"#,
            act % 4
        ));
        push(format!(r#""kind":"line","act":{act},"loc":{{"file":"m.x","line":2}}"#));
        if act % 10 == 0 {
            push(format!(
                r#""kind":"exception","act":{act},"loc":{{"file":"m.x","line":2}},"method":"M.f{}","exc_type":"E","msg":"m""#,
                act % 4
            ));
        } else {
            push(format!(
                r#""kind":"return","act":{act},"loc":{{"file":"m.x","line":2}},"method":"M.f{}","ret":null,"recv_after":null"#,
                act % 4
            ));
        }
    }
    for act in 94..=100u64 {
        push(format!(
            r#""kind":"call","act":{act},"loc":{{"file":"m.x","line":1}},"method":"M.g","args":[],"recv_before":null"#
        ));
    }
    let text = lines.join("\n");
    let store = ingest_str(&text).unwrap();
    assert_eq!(store.activations().count(), 100);
    assert_eq!(store.activations().filter(|a| a.is_truncated()).count(), 7);
    let records = collect_records(&store);
    assert_eq!(records.len(), oracle_closed_count(&text));
    assert_eq!(records.len(), 93);
}

fn single_call(method: &str, seq0: u64, act: u64, ret: &str) -> String {
    format!(
        "{{\"seq\":{},\"kind\":\"call\",\"thread\":\"t0\",\"act\":{act},\"loc\":{{\"file\":\"m.x\",\"line\":1}},\"method\":\"{method}\",\"args\":[],\"recv_before\":null}}\n\
         {{\"seq\":{},\"kind\":\"return\",\"thread\":\"t0\",\"act\":{act},\"loc\":{{\"file\":\"m.x\",\"line\":1}},\"method\":\"{method}\",\"ret\":{{\"repr\":\"{ret}\",\"is_string\":false}},\"recv_after\":null}}\n",
        seq0,
        seq0 + 1
    )
}

#[test]
fn identical_calls_deduplicated() {
    let text = single_call("A.f", 1, 1, "1") + &single_call("A.f", 3, 2, "1");
    let docs = generate_docs(&ingest_str(&text).unwrap(), None, &DocConfig::default()).unwrap();
    assert_eq!(docs.len(), 1);
    assert_eq!(docs[0].sentences, vec!["When called, the method returned 1."]);
    assert_eq!((docs[0].example_count, docs[0].distinct_count), (2, 1));
}

#[test]
fn prefix_filter() {
    let mut text = String::new();
    let names = [
        "Range.open",
        "Range.closed",
        "Range.span",
        "Lists.of",
        "Maps.of",
        "Sets.union",
        "Ranges.x",
        "A.b",
        "Range.isEmpty",
        "Z.z",
    ];
    for (i, m) in names.iter().enumerate() {
        text += &single_call(m, 2 * i as u64 + 1, i as u64 + 1, "v");
    }
    let store = ingest_str(&text).unwrap();
    assert_eq!(generate_docs(&store, None, &DocConfig::default()).unwrap().len(), 10);
    let filtered = generate_docs(&store, Some("Range."), &DocConfig::default()).unwrap();
    let got: Vec<_> = filtered.iter().map(|d| d.method.as_str()).collect();
    assert_eq!(got, vec!["Range.closed", "Range.isEmpty", "Range.open", "Range.span"]);
}

#[test]
fn kind_coverage_before_variants() {
    let mut text = String::new();
    for (i, r) in ["a", "b", "c"].iter().enumerate() {
        text += &single_call("A.f", 2 * i as u64 + 1, i as u64 + 1, r);
    }
    text += "{\"seq\":7,\"kind\":\"call\",\"thread\":\"t0\",\"act\":4,\"loc\":{\"file\":\"m.x\",\"line\":1},\"method\":\"A.f\",\"args\":[],\"recv_before\":null}\n";
    text += "{\"seq\":8,\"kind\":\"exception\",\"thread\":\"t0\",\"act\":4,\"loc\":{\"file\":\"m.x\",\"line\":1},\"method\":\"A.f\",\"exc_type\":\"Boom\",\"msg\":\"\"}\n";
    let cfg = DocConfig {
        max_sentences: 2,
        ..DocConfig::default()
    };
    let docs = generate_docs(&ingest_str(&text).unwrap(), None, &cfg).unwrap();
    assert_eq!(
        docs[0].sentences,
        vec![
            "When called, the method returned a.",
            "When called, the method threw Boom."
        ]
    );
    assert_eq!(docs[0].distinct_count, 4);
}

fn token(prefix: &'static str) -> impl Strategy<Value = String> {
    "[0-9]{1,3}".prop_map(move |s| format!("{prefix}{s}"))
}

fn arb_record() -> impl Strategy<Value = MethodCallRecord> {
    (
        prop_oneof![
            Just("A.f".to_string()),
            Just("A.<init>".to_string()),
            Just("B.g".to_string())
        ],
        prop::collection::vec(token("arg"), 0..3),
        prop::option::of(token("recv")),
        prop::option::of(prop_oneof![token("recv"), token("after")]),
        prop::option::of(token("ret")),
        prop::option::of(token("Exc")),
    )
        .prop_map(
            |(method, args, recv_before, recv_after, ret, exc_type)| MethodCallRecord {
                method,
                args: args
                    .into_iter()
                    .map(|repr| RecordArg { name: "p".into(), repr })
                    .collect(),
                recv_before,
                recv_after,
                ret: if exc_type.is_some() { None } else { ret },
                exc_type,
                act: 1,
            },
        )
}

proptest! {
    #[test]
    fn classification_is_total_and_rendering_reflects_it(r in arb_record()) {
        let cfg = DocConfig::default();
        let kind = classify(&r, &cfg);
        let s = render_sentence(&r, &cfg);
        prop_assert!(s.ends_with('.'));
        if let Some(ret) = &r.ret {
            prop_assert_eq!(
                s.contains(ret.as_str()),
                matches!(kind, TemplateKind::ReturnedOnly | TemplateKind::ReturnedAndChanged)
            );
        }
        if let Some(exc) = &r.exc_type {
            prop_assert_eq!(kind, TemplateKind::Threw);
            prop_assert!(s.contains(exc.as_str()));
        } else {
            prop_assert!(!s.contains("threw"));
        }
        prop_assert_eq!(s.contains(" with arguments ("), !r.args.is_empty());
        if kind != TemplateKind::Constructed {
            prop_assert_eq!(s.contains(" on "), r.recv_before.is_some());
        }
    }

    #[test]
    fn docs_are_deduplicated_capped_and_sound(
        records in prop::collection::vec(arb_record(), 1..30),
        cap in 1usize..5,
    ) {
        let mut lines = Vec::new();
        let mut seq = 0u64;
        for (i, r) in records.iter().enumerate() {
            let act = i as u64 + 1;
            let args: Vec<Value> = r.args.iter().map(|a| serde_json::json!({"name": a.name, "repr": a.repr, "is_string": false})).collect();
            seq += 1;
            lines.push(serde_json::json!({"seq": seq, "kind": "call", "thread": "t0", "act": act, "loc": {"file": "m.x", "line": 1}, "method": r.method, "args": args, "recv_before": r.recv_before}).to_string());
            seq += 1;
            lines.push(match &r.exc_type {
                Some(e) => serde_json::json!({"seq": seq, "kind": "exception", "thread": "t0", "act": act, "loc": {"file": "m.x", "line": 1}, "method": r.method, "exc_type": e, "msg": ""}),
                None => serde_json::json!({"seq": seq, "kind": "return", "thread": "t0", "act": act, "loc": {"file": "m.x", "line": 1}, "method": r.method, "ret": r.ret.as_ref().map(|v| serde_json::json!({"repr": v, "is_string": false})), "recv_after": r.recv_after}),
            }.to_string());
        }
        let text = lines.join("\n");
        let store = ingest_str(&text).unwrap();
        let cfg = DocConfig { max_sentences: cap, ..DocConfig::default() };
        let docs = generate_docs(&store, None, &cfg).unwrap();
        let again = generate_docs(&ingest_str(&text).unwrap(), None, &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&docs).unwrap(), serde_json::to_string(&again).unwrap());

        let mut total = 0;
        for entry in &docs {
            let rendered: Vec<String> = records.iter().filter(|r| r.method == entry.method).map(|r| render_sentence(r, &cfg)).collect();
            let distinct: HashSet<&String> = rendered.iter().collect();
            prop_assert_eq!(entry.example_count, rendered.len());
            prop_assert_eq!(entry.distinct_count, distinct.len());
            prop_assert_eq!(entry.sentences.len(), distinct.len().min(cap));
            let unique: HashSet<&String> = entry.sentences.iter().collect();
            prop_assert_eq!(unique.len(), entry.sentences.len());
            prop_assert!(entry.sentences.iter().all(|s| distinct.contains(s)));
            total += entry.example_count;
        }
        prop_assert_eq!(total, records.len());
    }
}

/// Recomputes each ratio from the raw source map JSON and source files.
fn oracle_ratios(entries: &[DocEntry], map_path: &std::path::Path, root: &std::path::Path) -> BTreeMap<String, f64> {
    let map: Value = serde_json::from_str(&std::fs::read_to_string(map_path).unwrap()).unwrap();
    let mut out = BTreeMap::new();
    for e in entries {
        let Some(span) = map.get(&e.method) else { continue };
        let src = std::fs::read_to_string(root.join(span["file"].as_str().unwrap())).unwrap();
        let start = span["start"].as_u64().unwrap() as usize;
        let end = span["end"].as_u64().unwrap() as usize;
        let body: Vec<&str> = src.lines().skip(start - 1).take(end - start + 1).collect();
        let words: Vec<&str> = body.iter().flat_map(|l| l.split_whitespace()).collect();
        let body_len = words.join(" ").chars().count();
        let lens: Vec<usize> = e.sentences.iter().map(|s| s.chars().count()).collect();
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        out.insert(e.method.clone(), mean / body_len as f64);
    }
    out
}

#[test]
fn demo_succinctness_matches_recomputation() {
    let dir = fixtures_dir().join("demo");
    let store = TraceStore::load(dir.join("trace.jsonl")).unwrap();
    let docs = generate_docs(&store, None, &DocConfig::for_store(&store)).unwrap();
    let map = SourceMap::load(dir.join("sourcemap.json")).unwrap();
    let report = succinctness_report(&docs, &map, &SourceRoot(dir.join("src")));
    let oracle = oracle_ratios(&docs, &dir.join("sourcemap.json"), &dir.join("src"));
    assert_eq!(report.rows.len(), 6);
    for row in &report.rows {
        let got = row.ratio.expect("every demo method is mapped");
        assert!(
            (got - oracle[&row.method]).abs() < 1e-9,
            "{}: {got} vs {}",
            row.method,
            oracle[&row.method]
        );
    }
    let oracle_mean = oracle.values().sum::<f64>() / oracle.len() as f64;
    assert!((report.mean.unwrap() - oracle_mean).abs() < 1e-9);
    assert!(report.render_text().contains("corpus mean:"));
}

#[test]
fn demo_docs_cover_exception_path() {
    let store = TraceStore::load(fixtures_dir().join("demo/trace.jsonl")).unwrap();
    let docs = generate_docs(&store, Some("app.input."), &DocConfig::for_store(&store)).unwrap();
    let parse = docs.iter().find(|d| d.method == "app.input.parse_limit").unwrap();
    assert_eq!(
        parse.sentences,
        vec!["When called with arguments (ten), the method threw ValueError."]
    );
}
