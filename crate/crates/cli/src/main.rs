use std::io;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;

use tracelens::cli::{Cli, Command};
use tracelens::commands::{self, exit};
use tracelens::server::{self, AppState, ServeConfig};

fn run_serve(args: &tracelens::cli::ServeArgs) -> i32 {
    let config = ServeConfig {
        trace: args.trace.clone(),
        source_root: args.source_root.clone(),
        source_map: args.source_map.clone(),
        port: args.port,
        allow_stale: args.allow_stale,
        ui_dir: args.ui_dir.clone(),
        constructor_marker: args.constructor_marker.clone(),
    };
    let state = match AppState::new(config) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit::MALFORMED;
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::FAILURE;
        }
    };
    match runtime.block_on(server::serve(state, &args.host)) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    let code = match &cli.command {
        Command::Search(args) => commands::run_search(args, &mut io::stdin().lock(), &mut out, &mut err),
        Command::Docs(args) => commands::run_docs(args, &mut out, &mut err),
        Command::Annotate(args) => commands::run_annotate(args, &mut out, &mut err),
        Command::Validate(args) => commands::run_validate(args, &mut out, &mut err),
        Command::Serve(args) => {
            drop((out, err));
            run_serve(args)
        }
    };
    ExitCode::from(code as u8)
}
