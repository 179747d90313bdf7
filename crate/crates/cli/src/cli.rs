use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Parser)]
#[command(
    name = "tracelens",
    version,
    about = "Search, document and annotate recorded program executions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find string values observed at runtime.
    Search(SearchArgs),
    /// Generate example-based documentation for recorded methods.
    Docs(DocsArgs),
    /// Print a source file with sample values at the end of executed lines.
    Annotate(AnnotateArgs),
    /// Serve the HTTP API (and optionally a static UI bundle).
    Serve(ServeArgs),
    /// Check that a trace file is well formed.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub trace: PathBuf,
    pub needle: String,
    /// Only search inside methods whose qualified name starts with this prefix (repeatable).
    #[arg(long = "method-prefix", value_name = "PREFIX")]
    pub method_prefixes: Vec<String>,
    /// Only search events located in files matching this glob (repeatable).
    #[arg(long = "file-glob", value_name = "GLOB")]
    pub file_globs: Vec<String>,
    #[arg(short = 'i', long)]
    pub ignore_case: bool,
    /// Do not search exception messages.
    #[arg(long)]
    pub no_exception_text: bool,
    /// Step through matches with a small command loop on stdin.
    #[arg(long)]
    pub interactive: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DocsArgs {
    pub trace: PathBuf,
    #[arg(long)]
    pub prefix: Option<String>,
    /// Maximum sentences per method.
    #[arg(short = 'k', long = "max-sentences", default_value_t = tracelens_core::docs::DEFAULT_MAX_SENTENCES)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Method name segment marking constructors (overrides the trace header).
    #[arg(long)]
    pub constructor_marker: Option<String>,
    /// Method source spans; enables the succinctness report.
    #[arg(long)]
    pub source_map: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub source_root: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    pub trace: PathBuf,
    /// Source file path as recorded in the trace.
    pub file: String,
    #[arg(long, default_value_t = 1)]
    pub cursor: u32,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long, default_value = ".")]
    pub source_root: PathBuf,
    /// Annotate even when sources changed after the trace was recorded.
    #[arg(long)]
    pub allow_stale: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub trace: PathBuf,
    #[arg(long, default_value = ".")]
    pub source_root: PathBuf,
    #[arg(long)]
    pub source_map: Option<PathBuf>,
    #[arg(long, env = "TRACELENS_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub allow_stale: bool,
    /// Directory with the static web UI bundle.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long)]
    pub constructor_marker: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub trace: PathBuf,
}
