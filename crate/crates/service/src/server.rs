//! Websocket endpoint at `/ws`; one text message per frame.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::dispatch::{Dispatcher, Joined, Outbound, Role};
use crate::protocol::{salvage, WireFrame};

type Outbox = mpsc::UnboundedSender<WireFrame>;

#[derive(Clone)]
pub struct AppState {
    dispatcher: Arc<Dispatcher>,
    outboxes: Arc<Mutex<HashMap<(String, Role), Outbox>>>,
}

impl AppState {
    pub fn new(dispatcher: Arc<Dispatcher>) -> Self {
        Self {
            dispatcher,
            outboxes: Arc::default(),
        }
    }

    fn deliver(&self, token: &str, out: Outbound) {
        let boxes = self.outboxes.lock().expect("outbox lock");
        match boxes.get(&(token.to_owned(), out.to)) {
            Some(tx) => {
                let _ = tx.send(out.frame);
            }
            None => tracing::debug!(token, role = %out.to, kind = %out.frame.kind, "recipient offline"),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

/// Serves until the listener fails or the task is dropped.
pub async fn serve(listener: TcpListener, dispatcher: Arc<Dispatcher>) -> std::io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "listening");
    axum::serve(listener, router(AppState::new(dispatcher))).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<WireFrame>();
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let fatal = frame.error_code() == Some("role-taken");
            if sink.send(WsMessage::Text(frame.encode().into())).await.is_err() {
                break;
            }
            if fatal {
                let _ = sink.send(WsMessage::Close(None)).await;
                break;
            }
        }
    });

    let mut joined: Option<Joined> = None;
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            WsMessage::Text(t) => t.to_string(),
            WsMessage::Close(_) => break,
            _ => continue,
        };
        let frame = match WireFrame::decode(&text) {
            Ok(f) => f,
            Err(e) => {
                let (token, rid) = salvage(&text);
                let _ = tx.send(WireFrame::error(&token, rid, e.code(), &e));
                continue;
            }
        };
        let dispatcher = state.dispatcher.clone();
        match &joined {
            None => {
                let result = tokio::task::spawn_blocking(move || dispatcher.hello(&frame)).await;
                match result {
                    Ok(Ok((who, out))) => {
                        state
                            .outboxes
                            .lock()
                            .expect("outbox lock")
                            .insert((who.token.clone(), who.role), tx.clone());
                        for o in out {
                            state.deliver(&who.token, o);
                        }
                        joined = Some(who);
                    }
                    Ok(Err(err)) => {
                        let fatal = err.error_code() == Some("role-taken");
                        let _ = tx.send(err);
                        if fatal {
                            break;
                        }
                    }
                    Err(e) => tracing::error!(error = %e, "hello handler panicked"),
                }
            }
            Some(who) => {
                let who = who.clone();
                let st = state.clone();
                let done = tokio::task::spawn_blocking(move || {
                    dispatcher.handle(&who, &frame, &mut |o| st.deliver(&who.token, o));
                })
                .await;
                if let Err(e) = done {
                    tracing::error!(error = %e, "frame handler panicked");
                }
            }
        }
    }

    if let Some(who) = joined {
        state.outboxes.lock().expect("outbox lock").remove(&(who.token.clone(), who.role));
        state.dispatcher.leave(&who);
    }
    drop(tx);
    let _ = writer.await;
}
