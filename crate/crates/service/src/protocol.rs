//! JSON frames exchanged over the websocket.
//!
//! ```json
//! {"type": "message", "session_token": "room-7", "request_id": "c12", "payload": {"text": "hi"}}
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Hello,
    Message,
    TranslateFull,
    Explore,
    BuildExpression,
    Cards,
    CardInteract,
    BeginRecall,
    RecallSubmit,
    Error,
    Ack,
}

impl FrameType {
    pub const ALL: [FrameType; 11] = [
        FrameType::Hello,
        FrameType::Message,
        FrameType::TranslateFull,
        FrameType::Explore,
        FrameType::BuildExpression,
        FrameType::Cards,
        FrameType::CardInteract,
        FrameType::BeginRecall,
        FrameType::RecallSubmit,
        FrameType::Error,
        FrameType::Ack,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Hello => "hello",
            FrameType::Message => "message",
            FrameType::TranslateFull => "translate_full",
            FrameType::Explore => "explore",
            FrameType::BuildExpression => "build_expression",
            FrameType::Cards => "cards",
            FrameType::CardInteract => "card_interact",
            FrameType::BeginRecall => "begin_recall",
            FrameType::RecallSubmit => "recall_submit",
            FrameType::Error => "error",
            FrameType::Ack => "ack",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameType {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ProtocolError::UnknownType(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    #[serde(rename = "type")]
    pub kind: FrameType,
    pub session_token: String,
    /// Client-chosen id, echoed on the matching reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    #[serde(default)]
    pub payload: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown frame type {0:?}")]
    UnknownType(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => "malformed-frame",
            ProtocolError::UnknownType(_) => "unknown-type",
        }
    }
}

impl WireFrame {
    pub fn new(kind: FrameType, session_token: impl Into<String>, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        Self {
            kind,
            session_token: session_token.into(),
            request_id: None,
            payload,
        }
    }

    pub fn with_request_id(mut self, id: Option<String>) -> Self {
        self.request_id = id;
        self
    }

    /// Error reply correlated with `request`, if any.
    pub fn error(session_token: &str, request_id: Option<String>, code: &str, message: impl fmt::Display) -> Self {
        Self::new(
            FrameType::Error,
            session_token,
            serde_json::json!({"code": code, "message": message.to_string()}),
        )
        .with_request_id(request_id)
    }

    pub fn error_code(&self) -> Option<&str> {
        (self.kind == FrameType::Error)
            .then(|| self.payload.get("code").and_then(Value::as_str))
            .flatten()
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn decode(text: &str) -> Result<Self, ProtocolError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let tag = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| ProtocolError::Malformed("missing string field \"type\"".into()))?;
        tag.parse::<FrameType>()?;
        serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }

    /// Deserializes the payload into a typed request body.
    pub fn body<T: serde::de::DeserializeOwned>(&self) -> Result<T, ProtocolError> {
        serde_json::from_value(Value::Object(self.payload.clone()))
            .map_err(|e| ProtocolError::Malformed(format!("{} payload: {e}", self.kind)))
    }
}

/// Best-effort request id and token from a frame that failed to decode.
pub fn salvage(text: &str) -> (String, Option<String>) {
    let value: Value = serde_json::from_str(text).unwrap_or(Value::Null);
    let token = value
        .get("session_token")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let request_id = value
        .get("request_id")
        .and_then(Value::as_str)
        .map(str::to_owned);
    (token, request_id)
}
