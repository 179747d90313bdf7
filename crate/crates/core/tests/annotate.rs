mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use tracelens_core::annotate::{
    annotate_file, file_iterations, segment_iterations, select_iteration, AnnotationEntry, CursorContext, IterationRef,
};
use tracelens_core::synth::{synth_trace, SynthConfig};
use tracelens_core::trace::{ingest_str, to_jsonl, Access, TraceStore};

use common::{fixtures_dir, oracle_split, records};

fn activation_from_lines(lines: &[u32]) -> String {
    let mut out = vec![
        r#"{"seq":1,"kind":"call","thread":"t0","act":1,"loc":{"file":"f.x","line":1},"method":"m","args":[],"recv_before":null}"#
            .to_string(),
    ];
    for (i, l) in lines.iter().enumerate() {
        out.push(format!(
            r#"{{"seq":{},"kind":"line","thread":"t0","act":1,"loc":{{"file":"f.x","line":{l}}}}}"#,
            i + 2
        ));
    }
    out.join("\n")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn segmentation_equals_split_oracle(lines in prop::collection::vec(1u32..12, 1..60)) {
        let store = ingest_str(&activation_from_lines(&lines)).unwrap();
        let act = store.activation(1).unwrap();
        let its = segment_iterations(&store, act);
        let got: Vec<Vec<u32>> = its
            .iter()
            .map(|it| it.line_events.iter().map(|&s| store.event(s).unwrap().loc.line).collect())
            .collect();
        prop_assert_eq!(&got, &oracle_split(&lines));

        let concat: Vec<u64> = its.iter().flat_map(|it| it.line_events.clone()).collect();
        prop_assert_eq!(concat, act.own_events.clone());
        for (i, it) in its.iter().enumerate() {
            prop_assert_eq!(it.index, i + 1);
            prop_assert_eq!(it.first_seq, it.line_events[0]);
            let ls: Vec<u32> = it.line_events.iter().map(|&s| store.event(s).unwrap().loc.line).collect();
            prop_assert!(ls.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(it.covered_lines.len(), ls.len());
        }
    }
}

/// Brute-force iteration table rebuilt from raw records:
/// (act, index, first_seq, covered lines) for every iteration in `file`.
fn oracle_iterations(jsonl: &str, file: &str) -> Vec<(u64, usize, u64, BTreeSet<u32>)> {
    let mut per_act: BTreeMap<u64, Vec<(u64, u32)>> = BTreeMap::new();
    for r in records(jsonl) {
        if r["kind"] == "line" && r["loc"]["file"] == file {
            per_act
                .entry(r["act"].as_u64().unwrap())
                .or_default()
                .push((r["seq"].as_u64().unwrap(), r["loc"]["line"].as_u64().unwrap() as u32));
        }
    }
    let mut out = Vec::new();
    for (act, evs) in per_act {
        let lines: Vec<u32> = evs.iter().map(|e| e.1).collect();
        let mut offset = 0;
        for (i, chunk) in oracle_split(&lines).into_iter().enumerate() {
            out.push((act, i + 1, evs[offset].0, chunk.iter().copied().collect()));
            offset += chunk.len();
        }
    }
    out
}

#[test]
fn selection_and_cursor_rule_against_brute_force() {
    for seed in 0..30 {
        let cfg = SynthConfig {
            min_events: 600,
            threads: 1 + seed as usize % 2,
            truncate: seed % 5 == 0,
            ..SynthConfig::default()
        };
        let text = to_jsonl(&BTreeMap::new(), &synth_trace(seed, &cfg));
        let store = ingest_str(&text).unwrap();
        for file in store.files().map(str::to_string).collect::<Vec<_>>() {
            let oracle = oracle_iterations(&text, &file);
            let got: Vec<_> = file_iterations(&store, &file)
                .into_iter()
                .map(|it| (it.act, it.index, it.first_seq, it.covered_lines))
                .collect();
            let mut sorted_oracle = oracle.clone();
            sorted_oracle.sort_by_key(|o| (store.activation(o.0).unwrap().call_seq, o.1));
            assert_eq!(got, sorted_oracle, "seed {seed} file {file}");

            for cursor in 1..=45u32 {
                let ctx = CursorContext::new(file.clone(), cursor).unwrap();
                let expected = oracle
                    .iter()
                    .filter(|o| o.3.contains(&cursor))
                    .min_by_key(|o| o.2)
                    .map(|o| IterationRef { act: o.0, index: o.1 });
                let selected = select_iteration(&store, &ctx, false).unwrap().map(|it| it.id());
                assert_eq!(selected, expected, "seed {seed} file {file} cursor {cursor}");

                let ann = annotate_file(&store, &ctx, false).unwrap();
                let executed: Vec<u32> = store.executed_lines(&file).unwrap().iter().copied().collect();
                assert_eq!(ann.iter().map(|a| a.loc.line).collect::<Vec<_>>(), executed);
                for a in &ann {
                    let vars: BTreeSet<&str> = a.entries.iter().map(|e| e.var.as_str()).collect();
                    assert_eq!(vars.len(), a.entries.len());
                    let covered_by_primary = expected
                        .and_then(|p| oracle.iter().find(|o| o.0 == p.act && o.1 == p.index))
                        .is_some_and(|o| o.3.contains(&a.loc.line));
                    if covered_by_primary {
                        assert_eq!(Some(a.iteration), expected);
                    } else {
                        let earliest = oracle
                            .iter()
                            .filter(|o| o.3.contains(&a.loc.line))
                            .min_by_key(|o| o.2)
                            .unwrap();
                        assert_eq!(
                            a.iteration,
                            IterationRef {
                                act: earliest.0,
                                index: earliest.1
                            }
                        );
                    }
                }
            }
        }
    }
}

fn entry(var: &str, repr: &str, access: Access) -> AnnotationEntry {
    AnnotationEntry {
        var: var.into(),
        repr: repr.into(),
        access,
    }
}

const URL: &str = "https://search.example.org/?q=XyZzY123";
const SS: &str = "['http://', 'https://']";

#[test]
fn loop_fixture_cursor_in_second_iteration() {
    let store = TraceStore::load(fixtures_dir().join("demo/loop.jsonl")).unwrap();
    let ctx = CursorContext::new("app/transform.py", 13).unwrap();
    let ann = annotate_file(&store, &ctx, false).unwrap();
    let second = IterationRef { act: 4, index: 2 };
    assert!(ann.iter().all(|a| a.iteration == second));
    let by_line: BTreeMap<u32, Vec<AnnotationEntry>> = ann.into_iter().map(|a| (a.loc.line, a.entries)).collect();
    assert_eq!(
        by_line,
        BTreeMap::from([
            (
                10,
                vec![entry("searchStrs", SS, Access::Read), entry("i", "1", Access::Write)]
            ),
            (
                11,
                vec![
                    entry("text", URL, Access::Read),
                    entry("searchStrs[i]", "https://", Access::Read),
                    entry("found", "0", Access::Write),
                ]
            ),
            (12, vec![]),
            (13, vec![]),
        ])
    );
}

#[test]
fn loop_fixture_cursor_in_first_iteration() {
    let store = TraceStore::load(fixtures_dir().join("demo/loop.jsonl")).unwrap();
    let ctx = CursorContext::new("app/transform.py", 11).unwrap();
    let ann = annotate_file(&store, &ctx, false).unwrap();
    let tags: Vec<(u32, usize)> = ann.iter().map(|a| (a.loc.line, a.iteration.index)).collect();
    assert_eq!(tags, vec![(10, 1), (11, 1), (12, 1), (13, 2)]);
    assert_eq!(
        ann[0].entries,
        vec![entry("searchStrs", SS, Access::Read), entry("i", "0", Access::Write)]
    );
    assert_eq!(
        ann[1].entries,
        vec![
            entry("text", URL, Access::Read),
            entry("searchStrs[i]", "http://", Access::Read),
            entry("found", "-1", Access::Write),
        ]
    );
    assert!(ann[2].entries.is_empty());
    assert_eq!(ann[3].entries, vec![entry("i", "1", Access::Read)]);
}

#[test]
fn cursor_outside_executed_code_uses_earliest_iterations() {
    let store = TraceStore::load(fixtures_dir().join("demo/trace.jsonl")).unwrap();
    let ctx = CursorContext::new("app/transform.py", 1).unwrap();
    assert!(select_iteration(&store, &ctx, false).unwrap().is_none());
    let ann = annotate_file(&store, &ctx, false).unwrap();
    let tags: Vec<(u32, u64, usize)> = ann
        .iter()
        .map(|a| (a.loc.line, a.iteration.act, a.iteration.index))
        .collect();
    assert_eq!(
        tags,
        vec![(5, 3, 1), (6, 3, 1), (10, 4, 1), (11, 4, 1), (12, 4, 1), (13, 4, 2)]
    );
    let unexecuted = CursorContext::new("app/never.py", 3).unwrap();
    assert!(annotate_file(&store, &unexecuted, false).unwrap().is_empty());
}

#[test]
fn annotate_is_pure() {
    let text = to_jsonl(&BTreeMap::new(), &synth_trace(4, &SynthConfig::default()));
    let a = ingest_str(&text).unwrap();
    let b = ingest_str(&text).unwrap();
    for file in a.files() {
        let ctx = CursorContext::new(file, 12).unwrap();
        assert_eq!(
            annotate_file(&a, &ctx, false).unwrap(),
            annotate_file(&b, &ctx, false).unwrap()
        );
        assert_eq!(
            annotate_file(&a, &ctx, false).unwrap(),
            annotate_file(&a, &ctx, false).unwrap()
        );
    }
}
