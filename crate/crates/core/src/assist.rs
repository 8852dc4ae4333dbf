//! Translation, explanation and extraction pipelines.
//!
//! These functions talk to the [`Gateway`] only; session bookkeeping (caching,
//! captures, logging, condition gating) lives in [`crate::ChatLearn`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chat::MessageId;
use crate::config::Language;
use crate::llm::template::NO_CONTEXT;
use crate::llm::{json, Bindings, Gateway, LlmError, OutputFormat, Placeholder, PromptTemplate};
use crate::review::ReviewCard;
use crate::text::{detect_l1_segments, NativeScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TranslationDirection {
    /// Received target-language message into the learner's first language.
    #[serde(rename = "l2_to_l1")]
    ToNative,
    /// First-language or mixed draft into the target language.
    #[serde(rename = "l1_to_l2")]
    ToTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub source_text: String,
    pub translated_text: String,
    pub direction: TranslationDirection,
    /// Messages rendered into the prompt context.
    pub context_used: Vec<MessageId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub selection: String,
    pub explanation_text: String,
    pub source_message_id: MessageId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedPhrase {
    pub l1_phrase: String,
    /// Exact substring of the translation, or empty when not found.
    pub l2_span: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionMapping {
    pub pairs: Vec<MappedPhrase>,
    pub translated_text: String,
}

impl ExtractionMapping {
    /// Every non-empty span occurs verbatim in the translation.
    pub fn is_sound(&self) -> bool {
        self.pairs
            .iter()
            .all(|p| p.l2_span.is_empty() || self.translated_text.contains(&p.l2_span))
    }
}

/// A span claimed by the mapping stage that was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingViolation {
    pub l1_phrase: String,
    pub claimed_span: Option<String>,
}

/// Result of the expression builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub translation: TranslationResult,
    pub mapping: Option<ExtractionMapping>,
    /// Expression-driven review cards.
    pub cards: Vec<ReviewCard>,
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Translate,
    Map,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Extract => "extract",
            Stage::Translate => "translate",
            Stage::Map => "map",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("stage {stage} failed: {reason}")]
    StageParseFailure { stage: Stage, reason: String },
    #[error(transparent)]
    Provider(#[from] LlmError),
}

/// Language pair of a session: the learner's first language and the language
/// of the conversation.
#[derive(Debug, Clone, Copy)]
pub struct Languages<'a> {
    pub native: &'a Language,
    pub target: &'a Language,
    pub script: NativeScript,
}

fn context_or_na(context: &str) -> String {
    if context.trim().is_empty() {
        NO_CONTEXT.to_owned()
    } else {
        context.to_owned()
    }
}

pub fn translate_prompt(text: &str, from: &Language, to: &Language, context: &str) -> Result<String, LlmError> {
    let bindings: Bindings = [
        (Placeholder::NativeLanguage, from.to_string()),
        (Placeholder::TargetLanguage, to.to_string()),
        (Placeholder::Context, context_or_na(context)),
        (Placeholder::UserInput, text.to_owned()),
    ]
    .into();
    PromptTemplate::TRANSLATE.render(&bindings)
}

/// Runs the translation prompt. Unparseable replies fall back to the raw text.
pub fn translate(
    gateway: &Gateway,
    text: &str,
    from: &Language,
    to: &Language,
    context: &str,
) -> Result<String, LlmError> {
    let prompt = translate_prompt(text, from, to, context)?;
    let resp = gateway.complete(&prompt, OutputFormat::TranslatedText)?;
    let translated = match resp.parsed.as_ref().and_then(|v| v.get("translated_text")) {
        Some(serde_json::Value::String(s)) => s.trim().to_owned(),
        _ => {
            tracing::debug!("translation reply was not JSON; using raw text");
            resp.raw_text.trim().to_owned()
        }
    };
    if translated.is_empty() {
        return Err(LlmError::ProviderUnavailable("empty translation".into()));
    }
    Ok(translated)
}

/// The explanation prompt. Its `[TARGET_LANGUAGE]` slot is the language the
/// explanation is written in (the learner's first language) and its
/// `[NATIVE_LANGUAGE]` slot the language of the usage example.
pub fn explain_prompt(phrase: &str, langs: Languages<'_>, context: &str) -> Result<String, LlmError> {
    let mut bindings: Bindings = [
        (Placeholder::TargetLanguage, langs.native.to_string()),
        (Placeholder::NativeLanguage, langs.target.to_string()),
        (Placeholder::Phrase, phrase.to_owned()),
    ]
    .into();
    if !context.trim().is_empty() {
        bindings.insert(Placeholder::Context, context.to_owned());
    }
    PromptTemplate::EXPLAIN.render(&bindings)
}

pub fn explain(
    gateway: &Gateway,
    phrase: &str,
    langs: Languages<'_>,
    context: &str,
) -> Result<String, LlmError> {
    let prompt = explain_prompt(phrase, langs, context)?;
    let resp = gateway.complete(&prompt, OutputFormat::PlainText)?;
    let text = resp.raw_text.trim().to_owned();
    if text.is_empty() {
        return Err(LlmError::ProviderUnavailable("empty explanation".into()));
    }
    Ok(text)
}

pub fn extract_prompt(draft: &str, langs: Languages<'_>) -> Result<String, LlmError> {
    let bindings: Bindings = [
        (Placeholder::TargetLanguage, langs.target.to_string()),
        (Placeholder::NativeLanguage, langs.native.to_string()),
        (Placeholder::UserInput, draft.to_owned()),
    ]
    .into();
    PromptTemplate::EXTRACT.render(&bindings)
}

pub fn map_prompt(phrases: &[String], translated: &str, langs: Languages<'_>) -> Result<String, LlmError> {
    let bindings: Bindings = [
        (Placeholder::NativeLanguage, langs.native.to_string()),
        (Placeholder::TargetLanguage, langs.target.to_string()),
        (
            Placeholder::ListOfPhrases,
            serde_json::to_string(phrases).expect("strings serialize"),
        ),
        (Placeholder::TranslatedText, translated.to_owned()),
    ]
    .into();
    PromptTemplate::MAP.render(&bindings)
}

fn stage_failure(stage: Stage, reason: impl Into<String>) -> ExtractError {
    ExtractError::StageParseFailure {
        stage,
        reason: reason.into(),
    }
}

/// Stage 1: first-language phrases of the draft, deduplicated, in order.
///
/// Returned phrases are split at any non-native character (digits included)
/// and kept only if they occur in the draft.
pub fn extract_phrases(gateway: &Gateway, draft: &str, langs: Languages<'_>) -> Result<Vec<String>, ExtractError> {
    let prompt = extract_prompt(draft, langs)?;
    let resp = gateway
        .complete(&prompt, OutputFormat::StringList)
        .map_err(|e| stage_failure(Stage::Extract, e.to_string()))?;
    let raw = resp
        .parsed
        .is_some()
        .then(|| json::string_list(&resp.raw_text))
        .flatten()
        .ok_or_else(|| stage_failure(Stage::Extract, "reply is not a JSON string list"))?;
    Ok(clean_phrases(&raw, draft, langs.script))
}

pub(crate) fn clean_phrases(raw: &[String], draft: &str, script: NativeScript) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for phrase in raw {
        for span in detect_l1_segments(phrase, script) {
            let piece = span.slice(phrase);
            if draft.contains(piece) && !out.iter().any(|p| p == piece) {
                out.push(piece.to_owned());
            }
        }
    }
    out
}

/// Stage 3: one span per phrase, verified against the translation.
///
/// Spans that are missing from the translation become empty strings and are
/// reported as violations, as are missing or surplus list elements.
pub fn map_phrases(
    gateway: &Gateway,
    phrases: &[String],
    translated: &str,
    langs: Languages<'_>,
) -> Result<(Vec<MappedPhrase>, Vec<MappingViolation>), ExtractError> {
    let prompt = map_prompt(phrases, translated, langs)?;
    let resp = gateway
        .complete(&prompt, OutputFormat::StringList)
        .map_err(|e| stage_failure(Stage::Map, e.to_string()))?;
    let spans = resp
        .parsed
        .is_some()
        .then(|| json::string_list(&resp.raw_text))
        .flatten()
        .ok_or_else(|| stage_failure(Stage::Map, "reply is not a JSON string list"))?;
    Ok(verify_spans(phrases, &spans, translated))
}

pub(crate) fn verify_spans(
    phrases: &[String],
    spans: &[String],
    translated: &str,
) -> (Vec<MappedPhrase>, Vec<MappingViolation>) {
    let mut violations = Vec::new();
    let pairs = phrases
        .iter()
        .enumerate()
        .map(|(i, phrase)| {
            let l2_span = match spans.get(i).map(|s| s.trim()) {
                Some("") => String::new(),
                Some(s) if translated.contains(s) => s.to_owned(),
                claimed => {
                    violations.push(MappingViolation {
                        l1_phrase: phrase.clone(),
                        claimed_span: claimed.map(str::to_owned),
                    });
                    String::new()
                }
            };
            MappedPhrase {
                l1_phrase: phrase.clone(),
                l2_span,
            }
        })
        .collect();
    for extra in spans.iter().skip(phrases.len()) {
        violations.push(MappingViolation {
            l1_phrase: String::new(),
            claimed_span: Some(extra.clone()),
        });
    }
    (pairs, violations)
}

/// Output of the full extraction pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub mapping: ExtractionMapping,
    pub violations: Vec<MappingViolation>,
}

/// Extract, translate and map a scaffolded draft.
pub fn extract_and_map(
    gateway: &Gateway,
    draft: &str,
    context: &str,
    langs: Languages<'_>,
) -> Result<Extraction, ExtractError> {
    let phrases = extract_phrases(gateway, draft, langs)?;
    let translated = translate(gateway, draft, langs.native, langs.target, context)?;
    if phrases.is_empty() {
        return Ok(Extraction {
            mapping: ExtractionMapping {
                pairs: Vec::new(),
                translated_text: translated,
            },
            violations: Vec::new(),
        });
    }
    let (pairs, violations) = map_phrases(gateway, &phrases, &translated, langs)?;
    Ok(Extraction {
        mapping: ExtractionMapping {
            pairs,
            translated_text: translated,
        },
        violations,
    })
}
