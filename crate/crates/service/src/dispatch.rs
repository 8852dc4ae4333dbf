//! Frame handling on top of the engine, independent of the transport.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use chatlearn_core::{
    ChatLearn, Condition, EntryId, Error, MessageId, RecallSubmission, Sender, SessionConfig, SessionId,
    SessionState,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::protocol::{FrameType, ProtocolError, WireFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Nns,
    Ns,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Nns => Role::Ns,
            Role::Ns => Role::Nns,
        }
    }

    fn sender(self) -> Sender {
        match self {
            Role::Nns => Sender::Nns,
            Role::Ns => Sender::Ns,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Nns => "nns",
            Role::Ns => "ns",
        })
    }
}

/// A frame addressed to one participant of the session.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Role,
    pub frame: WireFrame,
}

/// A connection that completed `hello`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Joined {
    pub token: String,
    pub role: Role,
    pub session: SessionId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HelloBody {
    role: Role,
    #[serde(default)]
    condition: Option<Condition>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
    /// Target-language text delivered in place of a learner draft.
    #[serde(default)]
    shown_translation: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRef {
    message_id: MessageId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExploreBody {
    message_id: MessageId,
    selection: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DraftBody {
    draft: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CardsBody {
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InteractBody {
    entry_id: EntryId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

struct Room {
    session: SessionId,
    nns: bool,
    ns: bool,
    /// Serializes appends with their delivery so both sides see one order.
    order: Arc<Mutex<()>>,
}

impl Room {
    fn slot(&mut self, role: Role) -> &mut bool {
        match role {
            Role::Nns => &mut self.nns,
            Role::Ns => &mut self.ns,
        }
    }
}

enum Failure {
    Protocol(ProtocolError),
    Engine(Error),
    Request(&'static str, String),
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        Failure::Protocol(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

impl Failure {
    fn into_frame(self, token: &str, request_id: Option<String>) -> WireFrame {
        match self {
            Failure::Protocol(e) => WireFrame::error(token, request_id, e.code(), &e),
            Failure::Engine(e) => WireFrame::error(token, request_id, e.code(), &e),
            Failure::Request(code, msg) => WireFrame::error(token, request_id, code, msg),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

pub struct Dispatcher {
    engine: Arc<ChatLearn>,
    defaults: SessionConfig,
    rooms: Mutex<HashMap<String, Room>>,
}

impl Dispatcher {
    pub fn new(engine: Arc<ChatLearn>, defaults: SessionConfig) -> Self {
        Self {
            engine,
            defaults,
            rooms: Mutex::new(HashMap::new()),
        }
    }

    pub fn engine(&self) -> &Arc<ChatLearn> {
        &self.engine
    }

    /// Claims a role in the session named by the frame's token, creating the
    /// session on first use. Errors come back as ready-to-send frames.
    pub fn hello(&self, frame: &WireFrame) -> Result<(Joined, Vec<Outbound>), WireFrame> {
        let token = frame.session_token.as_str();
        let rid = frame.request_id.clone();
        if frame.kind != FrameType::Hello {
            return Err(WireFrame::error(token, rid, "not-joined", "send hello first"));
        }
        if token.trim().is_empty() {
            return Err(WireFrame::error(token, rid, "bad-request", "empty session token"));
        }
        let body: HelloBody = frame
            .body()
            .map_err(|e| WireFrame::error(token, rid.clone(), e.code(), &e))?;

        let mut rooms = self.rooms.lock().expect("rooms lock");
        let live = rooms
            .get(token)
            .map(|r| r.session)
            .filter(|id| self.is_open(*id));
        let session = match live {
            Some(id) => id,
            None => {
                // a restarted service finds the session on disk
                let recovered = self.engine.find_by_token(token).filter(|id| self.is_open(*id));
                let id = match recovered {
                    Some(id) => id,
                    None => {
                        let mut config = self.defaults.clone();
                        if let Some(c) = body.condition {
                            config.condition = c;
                        }
                        self.engine
                            .create_session(config, Some(token.to_owned()))
                            .map_err(|e| WireFrame::error(token, rid.clone(), e.code(), &e))?
                    }
                };
                rooms.insert(
                    token.to_owned(),
                    Room {
                        session: id,
                        nns: false,
                        ns: false,
                        order: Arc::default(),
                    },
                );
                id
            }
        };
        let room = rooms.get_mut(token).expect("room present");
        if *room.slot(body.role) {
            return Err(WireFrame::error(
                token,
                rid,
                "role-taken",
                format!("role {} is already connected", body.role),
            ));
        }
        *room.slot(body.role) = true;
        let peer_present = *room.slot(body.role.peer());
        drop(rooms);

        let snapshot = self
            .engine
            .session(session)
            .map_err(|e| WireFrame::error(token, rid.clone(), e.code(), &e))?;
        let joined = Joined {
            token: token.to_owned(),
            role: body.role,
            session,
        };
        let mut out = vec![Outbound {
            to: body.role,
            frame: WireFrame::new(
                FrameType::Ack,
                token,
                json!({
                    "session_id": session,
                    "role": body.role,
                    "condition": snapshot.config.condition,
                    "state": snapshot.state,
                    "peer_connected": peer_present,
                    "messages": snapshot.messages,
                }),
            )
            .with_request_id(rid),
        }];
        if peer_present {
            out.push(Outbound {
                to: body.role.peer(),
                frame: WireFrame::new(FrameType::Hello, token, json!({ "role": body.role })),
            });
        }
        Ok((joined, out))
    }

    /// Frees the role so the participant can reconnect.
    pub fn leave(&self, joined: &Joined) {
        if let Some(room) = self.rooms.lock().expect("rooms lock").get_mut(&joined.token) {
            if room.session == joined.session {
                *room.slot(joined.role) = false;
            }
        }
    }

    fn is_open(&self, id: SessionId) -> bool {
        self.engine
            .session(id)
            .map(|s| s.state != SessionState::Closed)
            .unwrap_or(false)
    }

    fn order_lock(&self, token: &str) -> Arc<Mutex<()>> {
        self.rooms
            .lock()
            .expect("rooms lock")
            .get(token)
            .map(|r| r.order.clone())
            .unwrap_or_default()
    }

    /// Handles one frame from a joined participant. Replies and pushes are
    /// handed to `deliver` in the order they must be sent.
    pub fn handle(&self, who: &Joined, frame: &WireFrame, deliver: &mut dyn FnMut(Outbound)) {
        let rid = frame.request_id.clone();
        if let Err(f) = self.route(who, frame, deliver) {
            deliver(Outbound {
                to: who.role,
                frame: f.into_frame(&who.token, rid),
            });
        }
    }

    /// Collects the frames `handle` would deliver.
    pub fn handle_collect(&self, who: &Joined, frame: &WireFrame) -> Vec<Outbound> {
        let mut out = Vec::new();
        self.handle(who, frame, &mut |o| out.push(o));
        out
    }

    fn route(&self, who: &Joined, frame: &WireFrame, deliver: &mut dyn FnMut(Outbound)) -> Result<(), Failure> {
        if frame.session_token != who.token {
            return Err(Failure::Request("bad-request", "frame token differs from the joined session".into()));
        }
        let sid = who.session;
        let token = who.token.as_str();
        let rid = frame.request_id.clone();
        let reply = |kind: FrameType, payload: Value| Outbound {
            to: who.role,
            frame: WireFrame::new(kind, token, payload).with_request_id(rid.clone()),
        };
        let learner_only = matches!(
            frame.kind,
            FrameType::TranslateFull
                | FrameType::Explore
                | FrameType::BuildExpression
                | FrameType::Cards
                | FrameType::CardInteract
                | FrameType::RecallSubmit
        );
        if learner_only && who.role != Role::Nns {
            return Err(Failure::Engine(Error::FeatureDisabled("learner assistance")));
        }

        match frame.kind {
            FrameType::Hello => Err(Failure::Request("already-joined", "hello was already accepted".into())),
            FrameType::Error | FrameType::Ack => Err(Failure::Request(
                "bad-request",
                format!("{} frames are sent by the server only", frame.kind),
            )),
            FrameType::Message => {
                let body: MessageBody = frame.body()?;
                let order = self.order_lock(token);
                let _serial = order.lock().expect("order lock");
                let (message, cards) = self.engine.send(sid, who.role.sender(), &body.text, body.shown_translation)?;
                deliver(reply(FrameType::Ack, json!({ "message": message })));
                deliver(Outbound {
                    to: who.role.peer(),
                    frame: WireFrame::new(FrameType::Message, token, json!({ "message": message })),
                });
                if !cards.is_empty() {
                    deliver(Outbound {
                        to: Role::Nns,
                        frame: WireFrame::new(
                            FrameType::Cards,
                            token,
                            json!({ "trigger": "context_driven", "message_id": message.id, "cards": cards }),
                        ),
                    });
                }
                Ok(())
            }
            FrameType::TranslateFull => {
                let body: MessageRef = frame.body()?;
                let result = self.engine.comprehend_full(sid, body.message_id)?;
                deliver(reply(FrameType::TranslateFull, json!({ "result": result })));
                Ok(())
            }
            FrameType::Explore => {
                let body: ExploreBody = frame.body()?;
                let explanation = self.engine.explore_expression(sid, body.message_id, &body.selection)?;
                deliver(reply(FrameType::Explore, json!({ "explanation": explanation })));
                Ok(())
            }
            FrameType::BuildExpression => {
                let body: DraftBody = frame.body()?;
                let outcome = self.engine.build_expression(sid, &body.draft)?;
                deliver(reply(FrameType::BuildExpression, json!({ "outcome": outcome })));
                Ok(())
            }
            FrameType::Cards => {
                let body: CardsBody = frame.body()?;
                let cards = self.engine.retrieve_expression_driven(sid, &body.text)?;
                deliver(reply(
                    FrameType::Cards,
                    json!({ "trigger": "expression_driven", "cards": cards }),
                ));
                Ok(())
            }
            FrameType::CardInteract => {
                let body: InteractBody = frame.body()?;
                let e = self.engine.record_interaction(sid, body.entry_id)?;
                deliver(reply(
                    FrameType::CardInteract,
                    json!({
                        "entry_id": e.id,
                        "surface_text": e.surface_text,
                        "trigger_count": e.trigger_count,
                        "interaction_count": e.interaction_count,
                        "pinned": e.pinned,
                    }),
                ));
                Ok(())
            }
            FrameType::BeginRecall => {
                let _: Empty = frame.body()?;
                let seconds = self.engine.begin_recall(sid)?;
                let payload = json!({ "seconds": seconds });
                deliver(reply(FrameType::BeginRecall, payload.clone()));
                deliver(Outbound {
                    to: who.role.peer(),
                    frame: WireFrame::new(FrameType::BeginRecall, token, payload),
                });
                Ok(())
            }
            FrameType::RecallSubmit => {
                let body: RecallSubmission = frame.body()?;
                let result = self.engine.validate_recall(sid, &body)?;
                self.engine.close(sid)?;
                let report = self.engine.compute_report(sid)?;
                deliver(reply(
                    FrameType::RecallSubmit,
                    json!({ "result": to_value(&result), "report": to_value(&report) }),
                ));
                Ok(())
            }
        }
    }
}
