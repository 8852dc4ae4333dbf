//! Headless replay of a scripted two-party transcript through the frame
//! protocol, with a deterministic clock and the mock provider.
//!
//! ```json
//! {
//!   "session": {"condition": "chatlearn"},
//!   "mock_script": "fixture_a.mock.jsonl",
//!   "steps": [
//!     {"step": "ns_send", "text": "Can you tell me about Chongqing's cuisine?"},
//!     {"step": "nns_full_comprehend", "msg_ref": 0},
//!     {"step": "nns_draft", "text": "There are many 美食 in Chongqing"},
//!     {"step": "close"}
//!   ]
//! }
//! ```
//!
//! `msg_ref` is the index of the step that sent the message; `entry_ref` is the
//! surface text of a review card the learner has been shown.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chatlearn_core::llm::mock::MockProvider;
use chatlearn_core::llm::{Gateway, GatewayOptions};
use chatlearn_core::metrics::RecallItem;
use chatlearn_core::persist::{self, EVENTS_FILE, MESSAGES_FILE, RECALL_FILE, REVIEW_FILE, SESSION_FILE};
use chatlearn_core::review::ReviewStore;
use chatlearn_core::{
    ChatLearn, EntryId, LogEvent, MessageId, MetricsReport, RecallResult, RecallSubmission, Session, SessionConfig,
    StepClock,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dispatch::{Dispatcher, Joined, Outbound, Role};
use crate::protocol::{FrameType, WireFrame};

/// Replay clock start, 2024-01-01T00:00:00Z.
pub const REPLAY_EPOCH_MS: i64 = 1_704_067_200_000;
pub const REPLAY_STEP_MS: i64 = 1_000;
const TOKEN: &str = "replay";

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const FRAMES_FILE: &str = "frames.jsonl";

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    NsSend {
        text: String,
    },
    /// Without `assisted` the draft is sent as typed.
    NnsDraft {
        text: String,
        #[serde(default = "default_true")]
        assisted: bool,
    },
    NnsFullComprehend {
        msg_ref: usize,
    },
    NnsExplore {
        msg_ref: usize,
        selection: String,
    },
    NnsCardInteract {
        entry_ref: String,
    },
    BeginRecall,
    RecallSubmit {
        items: Vec<RecallItem>,
        seconds: f64,
    },
    Close,
}

impl Step {
    fn name(&self) -> &'static str {
        match self {
            Step::NsSend { .. } => "ns_send",
            Step::NnsDraft { .. } => "nns_draft",
            Step::NnsFullComprehend { .. } => "nns_full_comprehend",
            Step::NnsExplore { .. } => "nns_explore",
            Step::NnsCardInteract { .. } => "nns_card_interact",
            Step::BeginRecall => "begin_recall",
            Step::RecallSubmit { .. } => "recall_submit",
            Step::Close => "close",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptScript {
    #[serde(default)]
    pub session: SessionConfig,
    /// Mock provider script, relative to the transcript file.
    pub mock_script: PathBuf,
    pub steps: Vec<Step>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("invalid script: {0}")]
    Script(String),
    #[error("step {index} ({step}) failed: {code}: {message}")]
    Step {
        index: usize,
        step: &'static str,
        code: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TranscriptScript {
    pub fn load(path: &Path) -> Result<(Self, MockProvider), ReplayError> {
        let text = std::fs::read_to_string(path)?;
        let script: Self = serde_json::from_str(&text).map_err(|e| ReplayError::Script(e.to_string()))?;
        script.validate()?;
        let mock_path = path.parent().unwrap_or(Path::new(".")).join(&script.mock_script);
        let mock = MockProvider::from_file(&mock_path)
            .map_err(|e| ReplayError::Script(format!("{}: {e}", mock_path.display())))?;
        Ok((script, mock))
    }

    /// References point backwards at message-sending steps; exactly one
    /// `close`, and it comes last.
    pub fn validate(&self) -> Result<(), ReplayError> {
        self.session
            .validate()
            .map_err(|e| ReplayError::Script(e.to_string()))?;
        let closes = self.steps.iter().filter(|s| matches!(s, Step::Close)).count();
        if closes != 1 || !matches!(self.steps.last(), Some(Step::Close)) {
            return Err(ReplayError::Script("exactly one close step, at the end".into()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if let Step::NnsFullComprehend { msg_ref } | Step::NnsExplore { msg_ref, .. } = step {
                let ok = *msg_ref < i && matches!(self.steps[*msg_ref], Step::NsSend { .. });
                if !ok {
                    return Err(ReplayError::Script(format!(
                        "step {i}: msg_ref {msg_ref} is not an earlier ns_send step"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything a replay produces.
#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub session: Session,
    pub events: Vec<LogEvent>,
    pub review: ReviewStore,
    pub recall: Option<RecallResult>,
    pub report: MetricsReport,
    /// Every frame in transit, in order, tagged with its direction.
    pub frames: Vec<Value>,
}

struct Driver<'a> {
    dispatcher: &'a Dispatcher,
    nns: Joined,
    ns: Joined,
    frames: Vec<Value>,
    next_request: u64,
    /// Cards the learner has been shown, by surface text.
    seen_cards: HashMap<String, EntryId>,
}

impl Driver<'_> {
    fn log_out(&mut self, out: &[Outbound]) {
        for o in out {
            self.frames.push(json!({ "to": o.to, "frame": o.frame }));
            if o.to == Role::Nns {
                self.note_cards(&o.frame);
            }
        }
    }

    fn note_cards(&mut self, frame: &WireFrame) {
        let cards = match frame.kind {
            FrameType::Cards => frame.payload.get("cards"),
            FrameType::BuildExpression => frame.payload.get("outcome").and_then(|o| o.get("cards")),
            _ => None,
        };
        for card in cards.and_then(Value::as_array).into_iter().flatten() {
            if let (Some(text), Some(id)) = (
                card.get("surface_text").and_then(Value::as_str),
                card.get("entry_id").and_then(Value::as_u64),
            ) {
                self.seen_cards.insert(text.to_owned(), EntryId(id));
            }
        }
    }

    /// Sends one frame and returns the reply correlated with it.
    fn request(&mut self, role: Role, kind: FrameType, payload: Value) -> Result<WireFrame, (String, String)> {
        self.next_request += 1;
        let rid = format!("r{}", self.next_request);
        let frame = WireFrame::new(kind, TOKEN, payload).with_request_id(Some(rid.clone()));
        self.frames.push(json!({ "from": role, "frame": frame }));
        let who = match role {
            Role::Nns => self.nns.clone(),
            Role::Ns => self.ns.clone(),
        };
        let out = self.dispatcher.handle_collect(&who, &frame);
        self.log_out(&out);
        let reply = out
            .into_iter()
            .find(|o| o.to == role && o.frame.request_id.as_deref() == Some(rid.as_str()))
            .map(|o| o.frame)
            .ok_or_else(|| ("no-reply".to_owned(), format!("no reply to {kind}")))?;
        match reply.error_code() {
            Some(code) => {
                let message = reply
                    .payload
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_owned();
                Err((code.to_owned(), message))
            }
            None => Ok(reply),
        }
    }
}

fn message_id(reply: &WireFrame) -> Option<MessageId> {
    reply
        .payload
        .get("message")
        .and_then(|m| m.get("id"))
        .and_then(Value::as_u64)
        .map(MessageId)
}

/// Runs `script` against a fresh in-memory engine.
pub fn replay(script: &TranscriptScript, mock: MockProvider) -> Result<ReplayOutput, ReplayError> {
    script.validate()?;
    let gateway = Gateway::single(Arc::new(mock), GatewayOptions::default());
    let engine = Arc::new(ChatLearn::new(
        Arc::new(gateway),
        Arc::new(StepClock::new(REPLAY_EPOCH_MS, REPLAY_STEP_MS)),
    ));
    let dispatcher = Dispatcher::new(engine.clone(), script.session.clone());

    let mut frames = Vec::new();
    let mut join = |role: Role, rid: &str| -> Result<Joined, ReplayError> {
        let hello = WireFrame::new(
            FrameType::Hello,
            TOKEN,
            json!({ "role": role, "condition": script.session.condition }),
        )
        .with_request_id(Some(rid.to_owned()));
        frames.push(json!({ "from": role, "frame": hello }));
        let (joined, out) = dispatcher.hello(&hello).map_err(|f| ReplayError::Script(f.encode()))?;
        for o in out {
            frames.push(json!({ "to": o.to, "frame": o.frame }));
        }
        Ok(joined)
    };
    let nns = join(Role::Nns, "h1")?;
    let ns = join(Role::Ns, "h2")?;
    let sid = nns.session;
    let mut driver = Driver {
        dispatcher: &dispatcher,
        nns,
        ns,
        frames,
        next_request: 0,
        seen_cards: HashMap::new(),
    };

    let mut sent: HashMap<usize, MessageId> = HashMap::new();
    for (index, step) in script.steps.iter().enumerate() {
        let fail = |(code, message): (String, String)| ReplayError::Step {
            index,
            step: step.name(),
            code,
            message,
        };
        match step {
            Step::NsSend { text } => {
                let reply = driver
                    .request(Role::Ns, FrameType::Message, json!({ "text": text }))
                    .map_err(fail)?;
                if let Some(id) = message_id(&reply) {
                    sent.insert(index, id);
                }
            }
            Step::NnsDraft { text, assisted } => {
                let shown = if *assisted {
                    let reply = driver
                        .request(Role::Nns, FrameType::BuildExpression, json!({ "draft": text }))
                        .map_err(fail)?;
                    reply
                        .payload
                        .get("outcome")
                        .and_then(|o| o.pointer("/translation/translated_text"))
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                } else {
                    None
                };
                let reply = driver
                    .request(
                        Role::Nns,
                        FrameType::Message,
                        json!({ "text": text, "shown_translation": shown }),
                    )
                    .map_err(fail)?;
                if let Some(id) = message_id(&reply) {
                    sent.insert(index, id);
                }
            }
            Step::NnsFullComprehend { msg_ref } => {
                driver
                    .request(Role::Nns, FrameType::TranslateFull, json!({ "message_id": sent[msg_ref] }))
                    .map_err(fail)?;
            }
            Step::NnsExplore { msg_ref, selection } => {
                driver
                    .request(
                        Role::Nns,
                        FrameType::Explore,
                        json!({ "message_id": sent[msg_ref], "selection": selection }),
                    )
                    .map_err(fail)?;
            }
            Step::NnsCardInteract { entry_ref } => {
                let id = *driver.seen_cards.get(entry_ref).ok_or_else(|| {
                    fail((
                        "entry-not-shown".into(),
                        format!("no card for {entry_ref:?} has been shown"),
                    ))
                })?;
                driver
                    .request(Role::Nns, FrameType::CardInteract, json!({ "entry_id": id }))
                    .map_err(fail)?;
            }
            Step::BeginRecall => {
                driver
                    .request(Role::Nns, FrameType::BeginRecall, json!({}))
                    .map_err(fail)?;
            }
            Step::RecallSubmit { items, seconds } => {
                let submission = RecallSubmission {
                    items: items.clone(),
                    submitted_within_seconds: *seconds,
                };
                driver
                    .request(
                        Role::Nns,
                        FrameType::RecallSubmit,
                        serde_json::to_value(&submission).expect("submission serializes"),
                    )
                    .map_err(fail)?;
            }
            Step::Close => {
                engine
                    .close(sid)
                    .map_err(|e| fail((e.code().to_owned(), e.to_string())))?;
            }
        }
    }

    let session = engine.session(sid).map_err(|e| ReplayError::Script(e.to_string()))?;
    let events = engine.events(sid).map_err(|e| ReplayError::Script(e.to_string()))?;
    Ok(ReplayOutput {
        report: MetricsReport::from_events(&events),
        review: engine.review_snapshot(sid).map_err(|e| ReplayError::Script(e.to_string()))?,
        recall: engine.recall_result(sid).map_err(|e| ReplayError::Script(e.to_string()))?,
        session,
        events,
        frames: driver.frames,
    })
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        let _ = writeln!(out, "{}", serde_json::to_string(&item).expect("record serializes"));
    }
    out
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

impl ReplayOutput {
    /// Writes the session files in the same layout the server uses, plus the
    /// report and the frame trace.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let files = [
            (SESSION_FILE, pretty(&self.session)),
            (MESSAGES_FILE, jsonl(&self.session.messages)),
            (EVENTS_FILE, jsonl(&self.events)),
            (REVIEW_FILE, self.review.to_jsonl()),
            (REPORT_JSON, self.report.to_json()),
            (REPORT_TXT, self.report.to_table()),
            (FRAMES_FILE, jsonl(&self.frames)),
        ];
        for (name, contents) in files {
            persist::write_atomic(&dir.join(name), contents.as_bytes())?;
        }
        if let Some(recall) = &self.recall {
            persist::write_atomic(&dir.join(RECALL_FILE), pretty(recall).as_bytes())?;
        }
        Ok(())
    }
}
