//! Scripted agent server for wire-protocol tests.
//!
//! Speaks the line-delimited JSON protocol on stdin/stdout: replies to every
//! `ticks` message with an `{"events": [...]}` line, stays quiet on `init`,
//! and answers `end` with a final flush reply before exiting. The replies
//! come from a ground-truth transcript (oracle replay), a scripted reply
//! file, or nowhere (silent).

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::{Deserialize, Serialize};

use guidebench::transcript::{events_from_jsonl, GuidanceKind};

#[derive(Parser)]
#[command(name = "guidebench-fake-agent")]
struct Cli {
    /// Replay the events of this ground-truth transcript (JSONL), done
    /// event excluded.
    #[arg(long, conflicts_with = "script")]
    transcript: Option<PathBuf>,
    /// JSON array of scripted replies, one entry per ticks exchange:
    /// [{"events":[{"kind":"mistake","text":"..."}]}, ...]
    #[arg(long)]
    script: Option<PathBuf>,
    /// Write the number of ticks exchanges here on end.
    #[arg(long)]
    count_file: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Incoming {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    time_s: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct OutEvent {
    kind: String,
    text: String,
}

#[derive(Serialize, Deserialize, Clone)]
struct Reply {
    events: Vec<OutEvent>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match serve(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fake agent error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut replay: Vec<OutEvent> = Vec::new();
    let mut replay_times: Vec<f64> = Vec::new();
    if let Some(path) = &cli.transcript {
        let raw = fs::read_to_string(path)?;
        for event in events_from_jsonl(&raw)? {
            let kind = match event.kind {
                GuidanceKind::Instruction => "instruction",
                GuidanceKind::Success => "success",
                GuidanceKind::Mistake => "mistake",
                GuidanceKind::Done => continue,
            };
            replay.push(OutEvent {
                kind: kind.to_string(),
                text: event.text,
            });
            replay_times.push(event.time_s);
        }
    }
    let mut scripted: Vec<Reply> = Vec::new();
    if let Some(path) = &cli.script {
        scripted = serde_json::from_str(&fs::read_to_string(path)?)?;
    }
    let mut scripted = scripted.into_iter();

    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut cursor = 0usize;
    let mut exchanges = 0usize;

    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg: Incoming = serde_json::from_str(&line)?;
        match msg.kind.as_str() {
            "init" => {}
            "ticks" => {
                exchanges += 1;
                let reply = if cli.transcript.is_some() {
                    let mut events = Vec::new();
                    while cursor < replay.len() && replay_times[cursor] <= msg.time_s + 1e-9 {
                        events.push(replay[cursor].clone());
                        cursor += 1;
                    }
                    Reply { events }
                } else if cli.script.is_some() {
                    scripted.next().unwrap_or(Reply { events: Vec::new() })
                } else {
                    Reply { events: Vec::new() }
                };
                serde_json::to_writer(&mut out, &reply)?;
                out.write_all(b"\n")?;
                out.flush()?;
            }
            "end" => {
                // Count file lands before the final reply so readers that
                // saw the reply can rely on it.
                if let Some(path) = &cli.count_file {
                    fs::write(path, format!("{exchanges}\n"))?;
                }
                // Final flush: whatever the replay still holds goes out now.
                let events = if cli.transcript.is_some() {
                    replay[cursor..].to_vec()
                } else {
                    Vec::new()
                };
                serde_json::to_writer(&mut out, &Reply { events })?;
                out.write_all(b"\n")?;
                out.flush()?;
                break;
            }
            other => return Err(format!("unknown message type {other:?}").into()),
        }
    }
    Ok(())
}
