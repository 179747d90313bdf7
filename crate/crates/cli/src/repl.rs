//! Interactive match stepping for `search --interactive`.
//!
//! Commands: `n` next match, `locals` frame locals at the current match,
//! `scope [PREFIX | file:GLOB]...` narrow (or with no argument reset) the
//! scope, `q` quit.

use std::io::{BufRead, Write};

use tracelens_core::search::{SearchMatch, SearchScope, SearchSession};

use crate::commands::{build_scope, exit, format_match_line};

const HELP: &str = "commands: n (next match), locals, scope [PREFIX | file:GLOB]..., q";

fn parse_scope(args: &str) -> Result<SearchScope, String> {
    let mut prefixes = Vec::new();
    let mut globs = Vec::new();
    for token in args.split_whitespace() {
        match token.strip_prefix("file:") {
            Some(g) => globs.push(g.to_string()),
            None => prefixes.push(token.to_string()),
        }
    }
    build_scope(&prefixes, &globs)
}

pub fn run(mut session: SearchSession, input: &mut dyn BufRead, out: &mut dyn Write) -> i32 {
    let mut current: Option<SearchMatch> = None;
    let mut found_any = false;
    let _ = writeln!(out, "searching for {:?}; {HELP}", session.query().needle);
    let mut line = String::new();
    loop {
        let _ = write!(out, "> ");
        let _ = out.flush();
        line.clear();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        let (cmd, rest) = line.trim().split_once(' ').unwrap_or((line.trim(), ""));
        match cmd {
            "" => {}
            "n" | "next" => match session.find_next() {
                Some(m) => {
                    found_any = true;
                    let stale = if m.stale { " [stale]" } else { "" };
                    let _ = writeln!(out, "{}{stale}", format_match_line(&m));
                    current = Some(m);
                }
                None => {
                    let _ = writeln!(out, "no more matches");
                }
            },
            "locals" => match &current {
                Some(m) if m.frame_locals.is_empty() => {
                    let _ = writeln!(out, "(no locals bound yet)");
                }
                Some(m) => {
                    for l in &m.frame_locals {
                        let _ = writeln!(out, "  {} = {}", l.var, l.repr);
                    }
                }
                None => {
                    let _ = writeln!(out, "no current match; use n first");
                }
            },
            "scope" => match parse_scope(rest) {
                Ok(scope) => {
                    session.set_scope(scope);
                    let _ = writeln!(out, "scope updated");
                }
                Err(e) => {
                    let _ = writeln!(out, "error: {e}");
                }
            },
            "q" | "quit" => break,
            _ => {
                let _ = writeln!(out, "{HELP}");
            }
        }
    }
    if found_any {
        exit::OK
    } else {
        exit::NO_MATCHES
    }
}
