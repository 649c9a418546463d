//! The streaming agent contract, reference agents, and the remote adapter.
//!
//! An agent receives a session init (plan, first instruction, mode) followed
//! by an ordered stream of ticks, and emits structured events: the evaluator
//! never classifies free text. Frames are opaque references; any pixel work
//! belongs to whatever sits behind the remote adapter.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::{GuidanceKind, SessionTranscript};

pub const DEFAULT_TICK_FPS: f64 = 2.0;
pub const DEFAULT_PROMPT_INTERVAL_S: f64 = 5.0;
pub const DEFAULT_REMOTE_TIMEOUT_S: f64 = 30.0;
pub const ALARMIST_MISTAKE_TEXT: &str = "That looks like a mistake.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent failure: {0}")]
    Failure(String),
    #[error("remote agent timed out after {seconds} s")]
    Timeout { seconds: f64 },
    #[error("remote protocol error: {0}")]
    Protocol(String),
    #[error("agent io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One video frame reference handed to the agent. Never decoded here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tick {
    pub time_s: f64,
    pub frame_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Streaming,
    Turn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInit {
    pub session_id: String,
    pub plan_texts: Vec<String>,
    pub first_instruction: String,
    pub mode: SessionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentEventKind {
    Instruction,
    Success,
    Mistake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub time_s: f64,
    pub kind: AgentEventKind,
    pub text: String,
}

/// One agent instance serves one session and sees ticks strictly in order.
pub trait Agent {
    fn init(&mut self, init: &SessionInit) -> Result<(), AgentError>;
    fn tick(&mut self, tick: &Tick) -> Result<Vec<AgentEvent>, AgentError>;
    /// Called once after the last tick; may flush pending events.
    fn finish(&mut self) -> Result<Vec<AgentEvent>, AgentError> {
        Ok(Vec::new())
    }
}

/// Emits nothing, ever.
#[derive(Debug, Default)]
pub struct SilentAgent;

impl Agent for SilentAgent {
    fn init(&mut self, _init: &SessionInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn tick(&mut self, _tick: &Tick) -> Result<Vec<AgentEvent>, AgentError> {
        Ok(Vec::new())
    }
}

/// Replays a fixed event list. Events keep their exact timestamps and are
/// released at the first tick at or past their time; whatever remains is
/// flushed on finish. This is a metric-validation construct, not a model.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    pending: VecDeque<AgentEvent>,
}

impl ReplayAgent {
    pub fn new(mut events: Vec<AgentEvent>) -> Self {
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        ReplayAgent {
            pending: events.into(),
        }
    }

    fn due(&mut self, now: f64) -> Vec<AgentEvent> {
        let mut out = Vec::new();
        while let Some(head) = self.pending.front() {
            if head.time_s <= now + 1e-9 {
                out.push(self.pending.pop_front().expect("front exists"));
            } else {
                break;
            }
        }
        out
    }
}

impl Agent for ReplayAgent {
    fn init(&mut self, _init: &SessionInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn tick(&mut self, tick: &Tick) -> Result<Vec<AgentEvent>, AgentError> {
        Ok(self.due(tick.time_s))
    }

    fn finish(&mut self) -> Result<Vec<AgentEvent>, AgentError> {
        Ok(self.pending.drain(..).collect())
    }
}

fn replay_events(transcript: &SessionTranscript, lag_s: f64) -> Vec<AgentEvent> {
    transcript
        .events
        .iter()
        .filter_map(|e| {
            let kind = match e.kind {
                GuidanceKind::Instruction => AgentEventKind::Instruction,
                GuidanceKind::Success => AgentEventKind::Success,
                GuidanceKind::Mistake => AgentEventKind::Mistake,
                GuidanceKind::Done => return None,
            };
            Some(AgentEvent {
                time_s: e.time_s + lag_s,
                kind,
                text: e.text.clone(),
            })
        })
        .collect()
}

/// Ground-truth replay (done event excluded): the metric upper bound.
pub fn oracle_agent(transcript: &SessionTranscript) -> ReplayAgent {
    ReplayAgent::new(replay_events(transcript, 0.0))
}

/// Oracle with every event (instructions included) shifted by `lag_s`.
pub fn lagged_oracle(transcript: &SessionTranscript, lag_s: f64) -> ReplayAgent {
    ReplayAgent::new(replay_events(transcript, lag_s))
}

/// Replays the oracle's instruction and success events, and additionally
/// cries mistake on every single tick.
#[derive(Debug, Clone)]
pub struct AlarmistAgent {
    replay: ReplayAgent,
}

pub fn alarmist_agent(transcript: &SessionTranscript) -> AlarmistAgent {
    let events = replay_events(transcript, 0.0)
        .into_iter()
        .filter(|e| e.kind != AgentEventKind::Mistake)
        .collect();
    AlarmistAgent {
        replay: ReplayAgent::new(events),
    }
}

impl Agent for AlarmistAgent {
    fn init(&mut self, _init: &SessionInit) -> Result<(), AgentError> {
        Ok(())
    }

    fn tick(&mut self, tick: &Tick) -> Result<Vec<AgentEvent>, AgentError> {
        let mut events = self.replay.due(tick.time_s);
        events.push(AgentEvent {
            time_s: tick.time_s,
            kind: AgentEventKind::Mistake,
            text: ALARMIST_MISTAKE_TEXT.to_string(),
        });
        Ok(events)
    }

    fn finish(&mut self) -> Result<Vec<AgentEvent>, AgentError> {
        self.replay.finish()
    }
}

// ---------------------------------------------------------------------------
// Remote adapter
// ---------------------------------------------------------------------------

/// Where the remote model lives: a subprocess speaking line-delimited JSON on
/// stdin/stdout, or an HTTP endpoint receiving one POST per message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemoteTransport {
    Subprocess(Vec<String>),
    Http(String),
}

impl RemoteTransport {
    /// `http(s)://...` urls become HTTP; anything else is treated as a
    /// whitespace-separated command line.
    pub fn parse(endpoint: &str) -> Result<Self, AgentError> {
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Ok(RemoteTransport::Http(endpoint.to_string()))
        } else {
            let parts: Vec<String> = endpoint.split_whitespace().map(str::to_string).collect();
            if parts.is_empty() {
                return Err(AgentError::Protocol("empty remote endpoint".into()));
            }
            Ok(RemoteTransport::Subprocess(parts))
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum WireMessage<'a> {
    Init {
        session_id: &'a str,
        plan: &'a [String],
        first_instruction: &'a str,
        mode: SessionMode,
    },
    Ticks {
        time_s: f64,
        frame_refs: &'a [String],
        current_instruction: &'a str,
    },
    End {},
}

#[derive(Debug, Deserialize)]
struct WireReply {
    events: Vec<WireEvent>,
}

#[derive(Debug, Deserialize)]
struct WireEvent {
    kind: AgentEventKind,
    text: String,
}

enum Connection {
    Subprocess {
        child: Child,
        lines: mpsc::Receiver<std::io::Result<String>>,
    },
    Http {
        agent: ureq::Agent,
        url: String,
    },
}

impl Connection {
    fn open(transport: &RemoteTransport, timeout_s: f64) -> Result<Self, AgentError> {
        match transport {
            RemoteTransport::Subprocess(argv) => {
                let mut command = Command::new(&argv[0]);
                command
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped());
                let mut child = command.spawn()?;
                let stdout = child.stdout.take().expect("stdout is piped");
                let (tx, rx) = mpsc::channel();
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(stdout);
                    loop {
                        let mut line = String::new();
                        match reader.read_line(&mut line) {
                            Ok(0) => break,
                            Ok(_) => {
                                if tx.send(Ok(line)).is_err() {
                                    break;
                                }
                            }
                            Err(e) => {
                                let _ = tx.send(Err(e));
                                break;
                            }
                        }
                    }
                });
                Ok(Connection::Subprocess { child, lines: rx })
            }
            RemoteTransport::Http(url) => {
                let config = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs_f64(timeout_s)))
                    .build();
                Ok(Connection::Http {
                    agent: config.into(),
                    url: url.clone(),
                })
            }
        }
    }

    /// Send one message; `expect_reply` selects whether a reply line/body is
    /// awaited and parsed. Ticks and end messages elicit replies; init does
    /// not.
    fn send(
        &mut self,
        message: &WireMessage<'_>,
        expect_reply: bool,
        timeout_s: f64,
    ) -> Result<Option<WireReply>, AgentError> {
        match self {
            Connection::Subprocess { child, lines } => {
                let stdin = child
                    .stdin
                    .as_mut()
                    .ok_or_else(|| AgentError::Protocol("remote agent stdin closed".into()))?;
                let mut raw = serde_json::to_string(message)
                    .map_err(|e| AgentError::Protocol(e.to_string()))?;
                raw.push('\n');
                stdin.write_all(raw.as_bytes())?;
                stdin.flush()?;
                if !expect_reply {
                    return Ok(None);
                }
                let line = lines
                    .recv_timeout(Duration::from_secs_f64(timeout_s))
                    .map_err(|_| AgentError::Timeout { seconds: timeout_s })?
                    .map_err(AgentError::Io)?;
                let reply: WireReply = serde_json::from_str(line.trim())
                    .map_err(|e| AgentError::Protocol(format!("bad reply: {e}")))?;
                Ok(Some(reply))
            }
            Connection::Http { agent, url } => {
                let mut response =
                    agent
                        .post(url.as_str())
                        .send_json(message)
                        .map_err(|e| match e {
                            ureq::Error::Timeout(_) => AgentError::Timeout { seconds: timeout_s },
                            other => AgentError::Protocol(other.to_string()),
                        })?;
                if !expect_reply {
                    return Ok(None);
                }
                let reply: WireReply = response
                    .body_mut()
                    .read_json()
                    .map_err(|e| AgentError::Protocol(format!("bad reply: {e}")))?;
                Ok(Some(reply))
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Connection::Subprocess { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Adapter for an external model server. Ticks accumulate locally; every
/// `prompt_interval_s` of stream time the buffered frame references and the
/// current instruction go out in one exchange, and the reply events come
/// back stamped at the contact time.
pub struct RemoteAgent {
    transport: RemoteTransport,
    prompt_interval_s: f64,
    timeout_s: f64,
    connection: Option<Connection>,
    buffer: Vec<String>,
    next_exchange_at: Option<f64>,
    last_tick: Option<f64>,
    current_instruction: String,
    exchanges: usize,
}

impl RemoteAgent {
    pub fn new(transport: RemoteTransport, prompt_interval_s: f64, timeout_s: f64) -> Self {
        RemoteAgent {
            transport,
            prompt_interval_s,
            timeout_s,
            connection: None,
            buffer: Vec::new(),
            next_exchange_at: None,
            last_tick: None,
            current_instruction: String::new(),
            exchanges: 0,
        }
    }

    pub fn from_endpoint(
        endpoint: &str,
        prompt_interval_s: f64,
        timeout_s: f64,
    ) -> Result<Self, AgentError> {
        Ok(RemoteAgent::new(
            RemoteTransport::parse(endpoint)?,
            prompt_interval_s,
            timeout_s,
        ))
    }

    /// Number of ticks exchanges performed so far.
    pub fn exchanges(&self) -> usize {
        self.exchanges
    }

    fn exchange(&mut self, contact_time: f64) -> Result<Vec<AgentEvent>, AgentError> {
        let connection = self
            .connection
            .as_mut()
            .ok_or_else(|| AgentError::Protocol("remote agent not initialized".into()))?;
        let frames = std::mem::take(&mut self.buffer);
        let reply = connection
            .send(
                &WireMessage::Ticks {
                    time_s: contact_time,
                    frame_refs: &frames,
                    current_instruction: &self.current_instruction,
                },
                true,
                self.timeout_s,
            )?
            .expect("ticks elicit a reply");
        self.exchanges += 1;
        let mut events = Vec::with_capacity(reply.events.len());
        for e in reply.events {
            if e.kind == AgentEventKind::Instruction {
                self.current_instruction = e.text.clone();
            }
            events.push(AgentEvent {
                time_s: contact_time,
                kind: e.kind,
                text: e.text,
            });
        }
        Ok(events)
    }
}

impl Agent for RemoteAgent {
    fn init(&mut self, init: &SessionInit) -> Result<(), AgentError> {
        let mut connection = Connection::open(&self.transport, self.timeout_s)?;
        connection.send(
            &WireMessage::Init {
                session_id: &init.session_id,
                plan: &init.plan_texts,
                first_instruction: &init.first_instruction,
                mode: init.mode,
            },
            false,
            self.timeout_s,
        )?;
        self.connection = Some(connection);
        self.current_instruction = init.first_instruction.clone();
        self.next_exchange_at = None;
        Ok(())
    }

    fn tick(&mut self, tick: &Tick) -> Result<Vec<AgentEvent>, AgentError> {
        let mut events = Vec::new();
        match self.next_exchange_at {
            // Deadlines count from the previous contact (or the first tick),
            // so turn sessions starting mid-video keep the same cadence.
            Some(deadline) if tick.time_s >= deadline - 1e-9 => {
                if !self.buffer.is_empty() {
                    events.extend(self.exchange(tick.time_s)?);
                }
                self.next_exchange_at = Some(tick.time_s + self.prompt_interval_s);
            }
            Some(_) => {}
            None => {
                self.next_exchange_at = Some(tick.time_s + self.prompt_interval_s);
            }
        }
        self.buffer.push(tick.frame_ref.clone());
        self.last_tick = Some(tick.time_s);
        Ok(events)
    }

    fn finish(&mut self) -> Result<Vec<AgentEvent>, AgentError> {
        let stamp = self.last_tick.unwrap_or(0.0);
        let mut events = Vec::new();
        if !self.buffer.is_empty() {
            events = self.exchange(stamp)?;
        }
        // The end message elicits one final (possibly empty) events reply so
        // conclusions reached at the very end of the stream still come back.
        if let Some(connection) = self.connection.as_mut() {
            let reply = connection
                .send(&WireMessage::End {}, true, self.timeout_s)?
                .expect("end elicits a reply");
            for e in reply.events {
                if e.kind == AgentEventKind::Instruction {
                    self.current_instruction = e.text.clone();
                }
                events.push(AgentEvent {
                    time_s: stamp,
                    kind: e.kind,
                    text: e.text,
                });
            }
        }
        self.connection = None;
        Ok(events)
    }
}
