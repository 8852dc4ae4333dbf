//! Websocket client, server launchers and the kill-restart scenario.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chatlearn_core::llm::mock::MockProvider;
use chatlearn_core::llm::{Gateway, GatewayOptions};
use chatlearn_core::{ChatLearn, SessionConfig, StepClock};
use chatlearn_service::{server, Dispatcher, FrameType, Role, WireFrame};
use futures::{SinkExt, StreamExt};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const TIMEOUT: Duration = Duration::from_secs(10);

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_a_mock() -> MockProvider {
    MockProvider::from_file(fixture("fixture_a.mock.jsonl")).expect("fixture A mock")
}

pub fn engine(mock: MockProvider) -> Arc<ChatLearn> {
    Arc::new(ChatLearn::new(
        Arc::new(Gateway::single(Arc::new(mock), GatewayOptions::default())),
        Arc::new(StepClock::new(0, 1)),
    ))
}

pub struct WsClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pending: VecDeque<WireFrame>,
    pub token: String,
    next: u64,
}

impl WsClient {
    pub async fn connect(addr: &str, token: &str) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
            .await
            .expect("websocket connect");
        Self {
            ws,
            pending: VecDeque::new(),
            token: token.to_owned(),
            next: 0,
        }
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text)).await.expect("send");
    }

    pub async fn send(&mut self, frame: &WireFrame) {
        self.send_raw(&frame.encode()).await;
    }

    async fn read(&mut self) -> Option<WireFrame> {
        loop {
            let msg = tokio::time::timeout(TIMEOUT, self.ws.next()).await.ok()??.ok()?;
            match msg {
                Message::Text(t) => return Some(WireFrame::decode(t.as_str()).expect("server frame decodes")),
                Message::Close(_) => return None,
                _ => continue,
            }
        }
    }

    /// Next frame, buffered ones first; `None` on close or timeout.
    pub async fn recv(&mut self) -> Option<WireFrame> {
        match self.pending.pop_front() {
            Some(f) => Some(f),
            None => self.read().await,
        }
    }

    /// First frame of `kind`, keeping the others buffered.
    pub async fn next_of(&mut self, kind: FrameType) -> Option<WireFrame> {
        if let Some(i) = self.pending.iter().position(|f| f.kind == kind) {
            return self.pending.remove(i);
        }
        loop {
            let f = self.read().await?;
            if f.kind == kind {
                return Some(f);
            }
            self.pending.push_back(f);
        }
    }

    /// Sends a request and waits for the frame carrying its request id.
    pub async fn request(&mut self, kind: FrameType, payload: Value) -> WireFrame {
        self.next += 1;
        let rid = format!("q{}", self.next);
        let frame = WireFrame::new(kind, self.token.clone(), payload).with_request_id(Some(rid.clone()));
        self.send(&frame).await;
        if let Some(i) = self
            .pending
            .iter()
            .position(|f| f.request_id.as_deref() == Some(rid.as_str()))
        {
            return self.pending.remove(i).unwrap();
        }
        loop {
            let f = self.read().await.unwrap_or_else(|| panic!("no reply to {kind}"));
            if f.request_id.as_deref() == Some(rid.as_str()) {
                return f;
            }
            self.pending.push_back(f);
        }
    }

    pub async fn hello(&mut self, role: Role, condition: Option<&str>) -> WireFrame {
        let mut payload = json!({ "role": role });
        if let Some(c) = condition {
            payload["condition"] = json!(c);
        }
        self.request(FrameType::Hello, payload).await
    }
}

/// Serves `dispatcher` on an ephemeral port inside the current runtime.
pub async fn start_in_process(dispatcher: Arc<Dispatcher>) -> (String, tokio::task::JoinHandle<()>) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = tokio::spawn(async move {
        let _ = server::serve(listener, dispatcher).await;
    });
    (addr, handle)
}

pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

/// `chatlearn serve` running as a child process.
pub struct ServerProcess {
    child: Child,
    pub addr: String,
}

impl ServerProcess {
    pub fn spawn(config: &Path, addr: &str) -> Result<Self, String> {
        let child = Command::new(env!("CARGO_BIN_EXE_chatlearn"))
            .args(["serve", "--config"])
            .arg(config)
            .env_remove("LLM_PROVIDER")
            .env_remove("LLM_MOCK_SCRIPT")
            .env("RUST_LOG", "warn")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawn: {e}"))?;
        let start = Instant::now();
        while std::net::TcpStream::connect(addr).is_err() {
            if start.elapsed() > TIMEOUT {
                return Err("server did not start listening".into());
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        Ok(Self {
            child,
            addr: addr.to_owned(),
        })
    }

    /// SIGKILL, no shutdown path runs.
    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

const Q1: &str = "I heard that your hometown is Chongqing. Can you tell me about Chongqing's cuisine?";
const Q2: &str = "Spicy food like hotpot sounds amazing! Is your hometown far from the mountains?";
const DRAFT: &str = "There are many 美食 in Chongqing, especially 麻辣火锅";

enum Op {
    Frame(Role, FrameType, Value),
    /// Learner draft through build_expression, then sent with its translation.
    Draft(&'static str),
    /// Interact with the card shown for this surface text.
    Interact(&'static str),
    Restart,
}

fn scenario() -> Vec<Op> {
    use FrameType::*;
    vec![
        Op::Frame(Role::Ns, Message, json!({ "text": Q1 })),
        Op::Frame(Role::Nns, TranslateFull, json!({ "message_id": 1 })),
        Op::Frame(Role::Nns, Explore, json!({ "message_id": 1, "selection": "hometown" })),
        Op::Draft(DRAFT),
        Op::Restart,
        Op::Frame(Role::Nns, TranslateFull, json!({ "message_id": 1 })),
        Op::Frame(Role::Ns, Message, json!({ "text": Q2 })),
        Op::Interact("mala hotpot"),
        Op::Frame(Role::Nns, TranslateFull, json!({ "message_id": 3 })),
        Op::Frame(Role::Nns, Explore, json!({ "message_id": 3, "selection": "mountains" })),
        Op::Frame(Role::Nns, BeginRecall, json!({})),
        Op::Frame(
            Role::Nns,
            RecallSubmit,
            json!({
                "items": [
                    {"expression": "hometown", "confidence": 5, "difficulty": 2},
                    {"expression": "Mala hotpot", "confidence": 4, "difficulty": 3}
                ],
                "submitted_within_seconds": 90
            }),
        ),
    ]
}

fn check(reply: &WireFrame) -> Result<(), String> {
    match reply.error_code() {
        Some(code) => Err(format!("{} failed: {code} {:?}", reply.kind, reply.payload.get("message"))),
        None => Ok(()),
    }
}

fn translated(reply: &WireFrame) -> String {
    reply.payload["outcome"]["translation"]["translated_text"]
        .as_str()
        .unwrap_or_default()
        .to_owned()
}

/// Runs the scenario through the dispatcher without interruption; returns
/// the report carried by the recall_submit reply.
pub fn reference_report() -> Result<Value, String> {
    let dispatcher = Dispatcher::new(engine(fixture_a_mock()), SessionConfig::default());
    let hello = |role: Role| {
        let f = WireFrame::new(FrameType::Hello, "room", json!({ "role": role }));
        dispatcher.hello(&f).map(|(j, _)| j).map_err(|e| e.encode())
    };
    let (nns, ns) = (hello(Role::Nns)?, hello(Role::Ns)?);
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut last = None;
    let mut n = 0;
    let mut call = |role: Role, kind: FrameType, payload: Value, seen: &mut HashMap<String, u64>| {
        n += 1;
        let rid = format!("q{n}");
        let frame = WireFrame::new(kind, "room", payload).with_request_id(Some(rid.clone()));
        let who = if role == Role::Nns { &nns } else { &ns };
        let out = dispatcher.handle_collect(who, &frame);
        for o in &out {
            if o.to == Role::Nns && o.frame.kind == FrameType::Cards {
                for c in o.frame.payload["cards"].as_array().unwrap() {
                    seen.insert(c["surface_text"].as_str().unwrap().into(), c["entry_id"].as_u64().unwrap());
                }
            }
        }
        let reply = out
            .into_iter()
            .find(|o| o.frame.request_id.as_deref() == Some(rid.as_str()))
            .map(|o| o.frame)
            .ok_or("no reply")?;
        check(&reply)?;
        Ok::<_, String>(reply)
    };
    for op in scenario() {
        match op {
            Op::Frame(role, kind, payload) => last = Some(call(role, kind, payload, &mut seen)?),
            Op::Draft(text) => {
                let r = call(Role::Nns, FrameType::BuildExpression, json!({ "draft": text }), &mut seen)?;
                let payload = json!({ "text": text, "shown_translation": translated(&r) });
                call(Role::Nns, FrameType::Message, payload, &mut seen)?;
            }
            Op::Interact(surface) => {
                let id = *seen.get(surface).ok_or(format!("card {surface} not shown"))?;
                call(Role::Nns, FrameType::CardInteract, json!({ "entry_id": id }), &mut seen)?;
            }
            Op::Restart => {}
        }
    }
    Ok(last.ok_or("empty scenario")?.payload["report"].clone())
}

/// Runs the scenario against `chatlearn serve`, SIGKILLing and restarting
/// it midway. Returns the final report and the message history each side
/// saw on reconnect.
pub async fn killed_report(workdir: &Path) -> Result<(Value, Vec<Value>, Vec<Value>), String> {
    let port = free_port();
    let addr = format!("127.0.0.1:{port}");
    let config = workdir.join("serve.toml");
    std::fs::write(
        &config,
        format!(
            "[server]\nbind = \"{addr}\"\ndata_dir = \"data\"\n\n[provider]\nkind = \"mock\"\nmock_script = {:?}\n",
            fixture("fixture_a.mock.jsonl")
        ),
    )
    .map_err(|e| e.to_string())?;

    let mut server = Some(ServerProcess::spawn(&config, &addr)?);
    let mut nns = WsClient::connect(&addr, "room").await;
    let mut ns = WsClient::connect(&addr, "room").await;
    check(&nns.hello(Role::Nns, None).await)?;
    check(&ns.hello(Role::Ns, None).await)?;
    let mut before = Vec::new();
    let mut after_nns = Vec::new();
    let mut after_ns = Vec::new();
    let mut last = None;
    for op in scenario() {
        match op {
            Op::Frame(role, kind, payload) => {
                let c = if role == Role::Nns { &mut nns } else { &mut ns };
                let r = c.request(kind, payload).await;
                check(&r)?;
                if kind == FrameType::Message {
                    before.push(r.payload["message"].clone());
                }
                last = Some(r);
            }
            Op::Draft(text) => {
                let r = nns.request(FrameType::BuildExpression, json!({ "draft": text })).await;
                check(&r)?;
                let payload = json!({ "text": text, "shown_translation": translated(&r) });
                let r = nns.request(FrameType::Message, payload).await;
                check(&r)?;
                before.push(r.payload["message"].clone());
            }
            Op::Interact(surface) => {
                let cards = nns.next_of(FrameType::Cards).await.ok_or("no cards frame")?;
                let id = cards.payload["cards"]
                    .as_array()
                    .and_then(|cs| cs.iter().find(|c| c["surface_text"] == surface))
                    .map(|c| c["entry_id"].clone())
                    .ok_or(format!("card {surface} not shown"))?;
                check(&nns.request(FrameType::CardInteract, json!({ "entry_id": id })).await)?;
            }
            Op::Restart => {
                server.take().unwrap().kill();
                server = Some(ServerProcess::spawn(&config, &addr)?);
                nns = WsClient::connect(&addr, "room").await;
                ns = WsClient::connect(&addr, "room").await;
                let a = nns.hello(Role::Nns, None).await;
                check(&a)?;
                after_nns = a.payload["messages"].as_array().cloned().unwrap_or_default();
                let b = ns.hello(Role::Ns, None).await;
                check(&b)?;
                after_ns = b.payload["messages"].as_array().cloned().unwrap_or_default();
                if after_nns != before {
                    return Err(format!("history after restart differs: {after_nns:?} vs {before:?}"));
                }
            }
        }
    }
    drop(server);
    Ok((last.ok_or("empty scenario")?.payload["report"].clone(), after_nns, after_ns))
}

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    let pick = if depth == 0 { rng.random_range(0..6) } else { rng.random_range(0..8) };
    match pick {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => json!(rng.random::<i64>()),
        3 => {
            let f: f64 = rng.random_range(-1e9..1e9) * 10f64.powi(rng.random_range(-30..30));
            json!(f)
        }
        4 | 5 => Value::String(random_string(rng)),
        6 => Value::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth - 1)).collect()),
        _ => Value::Object(random_map(rng, depth - 1)),
    }
}

fn random_map(rng: &mut ChaCha8Rng, depth: u32) -> Map<String, Value> {
    (0..rng.random_range(0..5))
        .map(|_| (random_string(rng), random_value(rng, depth)))
        .collect()
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '\n', '\u{0}', '美', '食', 'é', '😀', '\u{2028}', '{', ']'];
    (0..rng.random_range(0..12))
        .map(|_| POOL[rng.random_range(0..POOL.len())])
        .collect()
}

pub fn random_frame(rng: &mut ChaCha8Rng) -> WireFrame {
    WireFrame {
        kind: FrameType::ALL[rng.random_range(0..FrameType::ALL.len())],
        session_token: random_string(rng),
        request_id: rng.random_bool(0.5).then(|| random_string(rng)),
        payload: random_map(rng, 3),
    }
}
