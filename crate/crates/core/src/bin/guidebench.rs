use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use guidebench::runner::{
    self, cmd_eval, cmd_plan, cmd_stats, cmd_transcript, cmd_validate, default_run_config,
    render_report_table, render_stats, render_validation, AgentSpec,
};
use guidebench::{BenchmarkSet, EvalMode, Split};

const EXIT_VALIDATION: u8 = 1;
const EXIT_AGENT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "guidebench",
    about = "Streaming task-guidance evaluation engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every annotation file listed in a manifest.
    Validate {
        /// Tab-separated manifest: video_id, set, split, path.
        manifest: PathBuf,
    },
    /// Print the step-by-step plan for one annotation file.
    Plan {
        video: PathBuf,
        /// Override the set semantics (main|advanced).
        #[arg(long)]
        set: Option<BenchmarkSet>,
    },
    /// Generate the ground-truth timed transcript for one annotation file.
    Transcript {
        video: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a streaming or turn-based evaluation over a manifest cell.
    Eval(EvalArgs),
    /// Render a results directory produced by `eval`.
    Report {
        results: PathBuf,
        #[arg(long, default_value = "table", value_parser = ["table", "structured"])]
        format: String,
    },
    /// Dataset statistics for one (set, split) cell.
    Stats {
        manifest: PathBuf,
        #[arg(long, default_value = "main")]
        set: BenchmarkSet,
        #[arg(long, default_value = "test")]
        split: Split,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "main")]
    set: BenchmarkSet,
    #[arg(long, default_value = "test")]
    split: Split,
    /// oracle | silent | alarmist | lagged:<seconds> | remote:<endpoint>
    #[arg(long, default_value = "oracle")]
    agent: AgentSpec,
    #[arg(long, default_value = "stream", value_parser = ["stream", "turn"])]
    mode: String,
    #[arg(long, default_value_t = 30.0)]
    window_s: f64,
    #[arg(long, default_value_t = 2.0)]
    fps: f64,
    #[arg(long, default_value_t = 5.0)]
    prompt_interval_s: f64,
    /// Results directory (sessions/ + report.json).
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, runner::RunError> {
    match cli.command {
        Command::Validate { manifest } => {
            let report = cmd_validate(&manifest)?;
            print!("{}", render_validation(&report));
            Ok(if report.all_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            })
        }
        Command::Plan { video, set } => {
            let rendered = cmd_plan(&video, set)?;
            print!("{rendered}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Transcript { video, output } => {
            let transcript = cmd_transcript(&video)?;
            let body = transcript.to_jsonl();
            match output {
                Some(path) => fs::write(&path, body).map_err(|source| runner::RunError::Io {
                    path: path.clone(),
                    source,
                })?,
                None => print!("{body}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval(args) => {
            let mut config = default_run_config(args.manifest, args.output);
            config.set = args.set;
            config.split = args.split;
            config.agent = args.agent;
            config.mode = if args.mode == "turn" {
                EvalMode::Turn
            } else {
                EvalMode::Streaming
            };
            config.window_s = args.window_s;
            config.fps = args.fps;
            config.prompt_interval_s = args.prompt_interval_s;
            config.jobs = args.jobs;
            let report = cmd_eval(&config)?;
            print!("{}", render_report_table(&report));
            let failed = report.per_video.iter().any(|v| v.agent_failure.is_some());
            Ok(if failed {
                ExitCode::from(EXIT_AGENT)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Report { results, format } => {
            let value = runner::load_report(&results)?;
            if format == "structured" {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&value).expect("report reserializes")
                );
            } else {
                let report: guidebench::EvalReport = serde_json::from_value(value)
                    .map_err(|e| runner::RunError::Config(format!("bad report file: {e}")))?;
                print!("{}", render_report_table(&report));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats {
            manifest,
            set,
            split,
        } => {
            let stats = cmd_stats(&manifest, set, split)?;
            print!("{}", render_stats(set, split, &stats));
            Ok(ExitCode::SUCCESS)
        }
    }
}
