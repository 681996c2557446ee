//! Command line front end for the navrec web usage mining toolkit.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use navrec::config::Config;

#[derive(Parser)]
#[command(
    name = "navrec",
    version,
    about = "Web usage mining toolkit: navigation pattern knowledge bases and \
             recommendation lists from IIS W3C extended access logs",
    after_help = "Exit codes: 0 success, 1 empty recommendation (recommend only), 2 fatal error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Shared tunables. Precedence: explicit flags over config file over
/// defaults.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Config file of key=value lines (flags take precedence)
    #[arg(long, value_name = "FILE", global = false)]
    config: Option<PathBuf>,

    /// Comma-separated filename suffixes removed during cleansing
    /// [default: .gif,.jpeg,.jpg,.css]
    #[arg(long, value_name = "LIST")]
    filtered_suffixes: Option<String>,

    /// Gaps strictly greater than this many seconds split sessions
    /// [default: 1800]
    #[arg(long, value_name = "SECS")]
    session_timeout_s: Option<i64>,

    /// Minimum total edge weight for a navigation pattern to be kept
    /// [default: 3]
    #[arg(long, value_name = "N")]
    min_weight: Option<u32>,

    /// Minimum pattern length in pages [default: 2]
    #[arg(long, value_name = "N")]
    min_vertices: Option<usize>,

    /// Largest session graph (in vertices) the miner will enumerate
    /// [default: 64]
    #[arg(long, value_name = "N")]
    max_graph_vertices: Option<usize>,

    /// Live session window: a page count ("2") or fraction of the user's
    /// page views ("0.1") [default: 0.1]
    #[arg(long, value_name = "SIZE")]
    lsw: Option<String>,

    /// Map referrers whose host differs from the request host to "-"
    /// [default: true]
    #[arg(long, value_name = "BOOL")]
    external_referer_as_dash: Option<bool>,

    /// Drop unvisited-part pages that already appear in the history part
    /// [default: false]
    #[arg(long, value_name = "BOOL")]
    dedupe_across_parts: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = Config::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(list) = &self.filtered_suffixes {
            cfg.apply_pair("filtered_suffixes", list)?;
        }
        if let Some(v) = self.session_timeout_s {
            cfg.session_timeout_s = v;
        }
        if let Some(v) = self.min_weight {
            cfg.min_weight = v;
        }
        if let Some(v) = self.min_vertices {
            cfg.min_vertices = v;
        }
        if let Some(v) = self.max_graph_vertices {
            cfg.max_graph_vertices = v;
        }
        if let Some(v) = &self.lsw {
            cfg.lsw = v.parse()?;
        }
        if let Some(v) = self.external_referer_as_dash {
            cfg.external_referer_as_dash = v;
        }
        if let Some(v) = self.dedupe_across_parts {
            cfg.dedupe_across_parts = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw access logs (gzip auto-detected) into a sessionized TSV
    Preprocess {
        /// Input log files, read in order
        #[arg(short, long = "input", value_name = "LOG", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output sessions TSV
        #[arg(short, long, value_name = "TSV")]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Mine navigation pattern clusters into a knowledge base file
    Mine {
        /// Sessionized TSV produced by `preprocess`
        #[arg(short, long, value_name = "TSV")]
        input: PathBuf,
        /// Output knowledge base (.wkb)
        #[arg(short, long, value_name = "WKB")]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Produce a recommendation list for one user
    Recommend {
        /// Knowledge base file
        #[arg(long, value_name = "WKB")]
        kb: PathBuf,
        /// User id to recommend for
        #[arg(long, value_name = "ID")]
        user: u32,
        /// Explicit live session window, comma-separated page ids ("p1,p5")
        #[arg(long, value_name = "IDS", conflicts_with = "replay")]
        pages: Option<String>,
        /// Capture the window from the user's sessions instead (see --lsw)
        #[arg(long, requires = "sessions")]
        replay: bool,
        /// Sessionized TSV, required with --replay
        #[arg(long, value_name = "TSV")]
        sessions: Option<PathBuf>,
        /// Output rendering [default: text]
        #[arg(long, value_name = "text|tsv", default_value = "text")]
        format: String,
        /// Write the rendering here instead of standard output
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Replay sessions against a knowledge base and report accuracy
    Evaluate {
        /// Knowledge base file
        #[arg(long, value_name = "WKB")]
        kb: PathBuf,
        /// Sessionized TSV to replay
        #[arg(long, value_name = "TSV")]
        sessions: PathBuf,
        /// Captured list: combined, history, or unvisited [default: combined]
        #[arg(long, value_name = "PART", default_value = "combined")]
        part: String,
        /// Repeat over a range of window sizes, e.g. "1..5"
        #[arg(long, value_name = "A..B")]
        sweep: Option<String>,
        /// Report format [default: tsv]
        #[arg(long, value_name = "tsv|csv", default_value = "tsv")]
        format: String,
        /// Write the report here instead of standard output
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dump sections of a knowledge base file
    Inspect {
        /// Knowledge base file
        #[arg(long, value_name = "WKB")]
        kb: PathBuf,
        /// Section to dump: meta, registry, patterns, or all [default: all]
        #[arg(long, value_name = "SECTION", default_value = "all")]
        section: String,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Preprocess { inputs, output, config } => {
            commands::preprocess(&inputs, &output, &config.resolve()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Mine { input, output, config } => {
            commands::mine(&input, &output, &config.resolve()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Recommend { kb, user, pages, replay, sessions, format, output, config } => {
            let request = match (&pages, replay) {
                (Some(ids), false) => commands::LswRequest::Pages(ids.clone()),
                (None, true) => commands::LswRequest::Replay(sessions.clone().expect("clap requires")),
                (None, false) => anyhow::bail!("provide a window: --pages p1,p2 or --replay --sessions <TSV>"),
                (Some(_), true) => unreachable!("clap conflicts_with"),
            };
            let empty = commands::recommend(&kb, user, request, &format, output.as_deref(), &config.resolve()?)?;
            Ok(if empty { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Evaluate { kb, sessions, part, sweep, format, output, config } => {
            commands::evaluate(
                &kb,
                &sessions,
                &part,
                sweep.as_deref(),
                &format,
                output.as_deref(),
                &config.resolve()?,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { kb, section } => {
            commands::inspect(&kb, &section)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
