use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::assist::{
    self, BuildOutcome, Explanation, ExtractionMapping, Languages, Stage, TranslationDirection,
    TranslationResult,
};
use crate::chat::{render_context, Message, MessageId, Sender, Session, SessionId, SessionState};
use crate::clock::Clock;
use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::llm::{EmbeddingVector, Gateway, LlmError};
use crate::metrics::{self, Event, EventLog, LogEvent, MetricsReport, RecallResult, RecallSubmission};
use crate::persist::{self, SessionFiles};
use crate::review::{CaptureSource, EntryId, ExpressionEntry, Query, ReviewCard, ReviewStore, TriggerKind};
use crate::text;

struct SessionData {
    session: Session,
    review: ReviewStore,
    log: EventLog,
    comprehension: HashMap<MessageId, TranslationResult>,
    recall: Option<RecallResult>,
    files: Option<SessionFiles>,
}

impl SessionData {
    fn id(&self) -> SessionId {
        self.session.id
    }

    fn record(&mut self, event: Event, at: i64) -> Result<()> {
        let record = self.log.append(self.session.id, event, at);
        if let Some(files) = &mut self.files {
            files.append_event(&record)?;
        }
        Ok(())
    }

    fn degrade(&mut self, operation: &str, stage: Option<Stage>, reason: String, at: i64) -> Result<()> {
        tracing::info!(session = %self.session.id, operation, ?stage, %reason, "degraded");
        self.record(
            Event::Degradation {
                operation: operation.to_owned(),
                stage: stage.map(|s| s.to_string()),
                reason,
            },
            at,
        )
    }

    fn save_review(&self) -> Result<()> {
        match &self.files {
            Some(f) => f.write_review(&self.review),
            None => Ok(()),
        }
    }

    fn save_session(&self) -> Result<()> {
        match &self.files {
            Some(f) => f.write_session(&self.session),
            None => Ok(()),
        }
    }

    fn require_active(&self) -> Result<()> {
        if self.session.state == SessionState::Active {
            Ok(())
        } else {
            Err(Error::SessionClosed(self.id()))
        }
    }

    fn require_learning(&self, feature: &'static str) -> Result<()> {
        if self.session.config.condition.learning_enabled() {
            Ok(())
        } else {
            Err(Error::FeatureDisabled(feature))
        }
    }

    fn capture(
        &mut self,
        surface: &str,
        context: &str,
        source: CaptureSource,
        embedding: Result<EmbeddingVector, LlmError>,
        now: i64,
    ) -> Result<ExpressionEntry> {
        let embedding = match embedding {
            Ok(v) => Some(v),
            Err(e) => {
                self.degrade("capture", None, format!("embedding failed for {surface:?}: {e}"), now)?;
                None
            }
        };
        let turn = self.session.messages.len();
        let (entry, new_entry) = self.review.capture(surface, context, source, embedding, now, turn);
        self.record(
            Event::Capture {
                entry_id: entry.id,
                surface_text: entry.surface_text.clone(),
                source,
                new_entry,
            },
            now,
        )?;
        Ok(entry)
    }

    fn trigger(&mut self, query: &EmbeddingVector, kind: TriggerKind, now: i64) -> Result<Vec<ReviewCard>> {
        let config = &self.session.config;
        let matches = self.review.rank(&Query {
            vector: query.values(),
            threshold: config.similarity_threshold,
            top_k: config.top_k as usize,
            exclude_turn: Some(self.session.messages.len()),
        });
        let cards = self.review.trigger(&matches, kind);
        for card in &cards {
            self.record(
                Event::CardTriggered {
                    entry_id: card.entry_id,
                    trigger: kind,
                    similarity: card.similarity,
                },
                now,
            )?;
        }
        if !cards.is_empty() {
            self.save_review()?;
        }
        Ok(cards)
    }

    /// Target-language texts the learner has seen.
    fn recall_corpus(&self) -> Vec<String> {
        let mut corpus: Vec<String> = self
            .session
            .messages
            .iter()
            .filter_map(|m| match m.sender {
                Sender::Ns => Some(m.original_text.clone()),
                Sender::Nns => m.shown_translation.clone(),
                Sender::System => None,
            })
            .collect();
        for e in self.log.events() {
            match &e.event {
                Event::ExpressionSupport { translated_text, .. } => corpus.push(translated_text.clone()),
                Event::PartialComprehension { explanation, .. } => corpus.push(explanation.clone()),
                _ => {}
            }
        }
        corpus
    }
}

type SessionCell = RwLock<SessionData>;

/// Owns every session and routes assist, review and metrics operations.
///
/// Each session sits behind its own lock: mutations of one session are
/// serialized while sessions progress independently. Provider calls are made
/// without holding any lock.
pub struct ChatLearn {
    gateway: Arc<Gateway>,
    clock: Arc<dyn Clock>,
    sessions: RwLock<BTreeMap<SessionId, Arc<SessionCell>>>,
    next_id: AtomicU64,
    root: Option<PathBuf>,
}

impl ChatLearn {
    /// In-memory engine.
    pub fn new(gateway: Arc<Gateway>, clock: Arc<dyn Clock>) -> Self {
        Self {
            gateway,
            clock,
            sessions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            root: None,
        }
    }

    /// Engine persisting under `root`; sessions already there are recovered.
    pub fn open(gateway: Arc<Gateway>, clock: Arc<dyn Clock>, root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_owned();
        std::fs::create_dir_all(&root)?;
        let mut sessions = BTreeMap::new();
        let mut max_id = 0;
        for (id, dir) in persist::session_dirs(&root)? {
            let loaded = persist::load_session(&dir)?;
            let mut comprehension = HashMap::new();
            for e in loaded.log.events() {
                if let Event::FullComprehension {
                    message_id,
                    translated_text,
                    context_used,
                    ..
                } = &e.event
                {
                    if let Some(m) = loaded.session.message(*message_id) {
                        comprehension.entry(*message_id).or_insert_with(|| TranslationResult {
                            source_text: m.original_text.clone(),
                            translated_text: translated_text.clone(),
                            direction: TranslationDirection::ToNative,
                            context_used: context_used.clone(),
                        });
                    }
                }
            }
            max_id = max_id.max(id.0);
            sessions.insert(
                id,
                Arc::new(RwLock::new(SessionData {
                    session: loaded.session,
                    review: loaded.review,
                    log: loaded.log,
                    comprehension,
                    recall: loaded.recall,
                    files: Some(loaded.files),
                })),
            );
        }
        Ok(Self {
            gateway,
            clock,
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(max_id + 1),
            root: Some(root),
        })
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn cell(&self, id: SessionId) -> Result<Arc<SessionCell>> {
        self.sessions
            .read()
            .get(&id)
            .cloned()
            .ok_or(Error::UnknownSession(id))
    }

    fn now(&self) -> i64 {
        self.clock.now_ms()
    }

    pub fn create_session(&self, config: SessionConfig, token: Option<String>) -> Result<SessionId> {
        config.validate()?;
        let inherited = match (&token, config.persist_review_across_sessions) {
            (Some(t), true) => self.latest_review_for_token(t),
            _ => None,
        };
        let id = SessionId(self.next_id.fetch_add(1, Ordering::SeqCst));
        let session = Session::new(id, config, token, self.now());
        let files = match &self.root {
            Some(root) => Some(SessionFiles::create(root, id)?),
            None => None,
        };
        let data = SessionData {
            session,
            review: inherited.unwrap_or_default(),
            log: EventLog::new(),
            comprehension: HashMap::new(),
            recall: None,
            files,
        };
        data.save_session()?;
        data.save_review()?;
        self.sessions.write().insert(id, Arc::new(RwLock::new(data)));
        Ok(id)
    }

    fn latest_review_for_token(&self, token: &str) -> Option<ReviewStore> {
        let sessions = self.sessions.read();
        sessions.values().rev().find_map(|cell| {
            let d = cell.read();
            (d.session.token.as_deref() == Some(token) && d.session.config.persist_review_across_sessions)
                .then(|| d.review.clone())
        })
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        self.sessions.read().keys().copied().collect()
    }

    /// Most recent session created with `token`.
    pub fn find_by_token(&self, token: &str) -> Option<SessionId> {
        let sessions = self.sessions.read();
        sessions
            .iter()
            .rev()
            .find(|(_, cell)| cell.read().session.token.as_deref() == Some(token))
            .map(|(id, _)| *id)
    }

    /// Snapshot of a session including its messages.
    pub fn session(&self, id: SessionId) -> Result<Session> {
        Ok(self.cell(id)?.read().session.clone())
    }

    pub fn config(&self, id: SessionId) -> Result<SessionConfig> {
        Ok(self.cell(id)?.read().session.config.clone())
    }

    pub fn append_message(
        &self,
        id: SessionId,
        sender: Sender,
        text: &str,
        shown_translation: Option<String>,
    ) -> Result<Message> {
        let cell = self.cell(id)?;
        let mut d = cell.write();
        let now = self.now();
        let message = d.session.append(sender, text, shown_translation, now)?;
        if let Some(f) = &mut d.files {
            f.append_message(&message)?;
        }
        d.record(
            Event::MessageSent {
                message_id: message.id,
                sender,
                token_count: message.token_count,
            },
            now,
        )?;
        Ok(message)
    }

    /// Appends a message and, for native-speaker messages in a learning
    /// session, runs context-driven review retrieval on it.
    pub fn send(
        &self,
        id: SessionId,
        sender: Sender,
        text: &str,
        shown_translation: Option<String>,
    ) -> Result<(Message, Vec<ReviewCard>)> {
        let message = self.append_message(id, sender, text, shown_translation)?;
        let learning = self.config(id)?.condition.learning_enabled();
        let cards = if learning && sender == Sender::Ns {
            self.retrieve_context_driven(id, text)?
        } else {
            Vec::new()
        };
        Ok((message, cards))
    }

    pub fn history_window(&self, id: SessionId) -> Result<Vec<Message>> {
        Ok(self.cell(id)?.read().session.history_window().to_vec())
    }

    /// Translates a received message into the learner's first language.
    /// Results are cached per message; every call is logged.
    pub fn comprehend_full(&self, id: SessionId, message_id: MessageId) -> Result<TranslationResult> {
        let cell = self.cell(id)?;
        let (message, cached, window, config) = {
            let d = cell.read();
            d.require_active()?;
            let m = d.session.message(message_id).ok_or(Error::UnknownMessage(message_id))?;
            if m.sender != Sender::Ns {
                return Err(Error::WrongSender(message_id));
            }
            (
                m.clone(),
                d.comprehension.get(&message_id).cloned(),
                d.session.history_window().to_vec(),
                d.session.config.clone(),
            )
        };
        let (result, was_cached) = match cached {
            Some(r) => (r, true),
            None => {
                let translated = assist::translate(
                    &self.gateway,
                    &message.original_text,
                    &config.target_language,
                    &config.native_language,
                    &render_context(&window),
                )?;
                let r = TranslationResult {
                    source_text: message.original_text.clone(),
                    translated_text: translated,
                    direction: TranslationDirection::ToNative,
                    context_used: window.iter().map(|m| m.id).collect(),
                };
                (r, false)
            }
        };
        let mut d = cell.write();
        let result = d.comprehension.entry(message_id).or_insert(result).clone();
        let now = self.now();
        d.record(
            Event::FullComprehension {
                message_id,
                cached: was_cached,
                translated_text: result.translated_text.clone(),
                context_used: result.context_used.clone(),
            },
            now,
        )?;
        Ok(result)
    }

    /// Explains a selected fragment of a received message and captures it.
    pub fn explore_expression(&self, id: SessionId, message_id: MessageId, selection: &str) -> Result<Explanation> {
        let cell = self.cell(id)?;
        let (message, window, config) = {
            let d = cell.read();
            d.require_learning("expression explorer")?;
            d.require_active()?;
            let m = d.session.message(message_id).ok_or(Error::UnknownMessage(message_id))?;
            (m.clone(), d.session.history_window().to_vec(), d.session.config.clone())
        };
        let selection = selection.trim();
        if selection.is_empty() {
            return Err(Error::EmptyText);
        }
        if !message.original_text.contains(selection) {
            return Err(Error::SelectionNotFound(selection.to_owned()));
        }
        let langs = Languages {
            native: &config.native_language,
            target: &config.target_language,
            script: config.native_script(),
        };
        let explanation_text = assist::explain(&self.gateway, selection, langs, &render_context(&window))?;
        let embedding = self.gateway.embed(selection);

        let mut d = cell.write();
        let now = self.now();
        d.record(
            Event::PartialComprehension {
                message_id,
                selection: selection.to_owned(),
                explanation: explanation_text.clone(),
            },
            now,
        )?;
        d.capture(selection, &message.original_text, CaptureSource::Comprehension, embedding, now)?;
        d.save_review()?;
        Ok(Explanation {
            selection: selection.to_owned(),
            explanation_text,
            source_message_id: message_id,
        })
    }

    /// Translates a draft into the target language. In learning sessions a
    /// draft containing first-language segments also goes through the
    /// extractor, and the draft is used to trigger expression-driven cards.
    pub fn build_expression(&self, id: SessionId, draft: &str) -> Result<BuildOutcome> {
        if draft.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let cell = self.cell(id)?;
        let (window, config) = {
            let d = cell.read();
            d.require_active()?;
            (d.session.history_window().to_vec(), d.session.config.clone())
        };
        let script = config.native_script();
        let langs = Languages {
            native: &config.native_language,
            target: &config.target_language,
            script,
        };
        let context = render_context(&window);
        let learning = config.condition.learning_enabled();
        let has_l1 = !text::detect_l1_segments(draft, script).is_empty();

        let mut degradations: Vec<(Stage, String)> = Vec::new();
        let mut mapping = None;
        let translated;
        if learning && has_l1 {
            let phrases = assist::extract_phrases(&self.gateway, draft, langs)
                .map_err(|e| degradations.push((Stage::Extract, e.to_string())))
                .ok();
            translated = assist::translate(&self.gateway, draft, langs.native, langs.target, &context)?;
            match phrases {
                Some(p) if p.is_empty() => {
                    mapping = Some(ExtractionMapping {
                        pairs: Vec::new(),
                        translated_text: translated.clone(),
                    })
                }
                Some(p) => match assist::map_phrases(&self.gateway, &p, &translated, langs) {
                    Ok((pairs, violations)) => {
                        for v in violations {
                            degradations.push((
                                Stage::Map,
                                format!(
                                    "mapping violation: span {:?} for {:?} not in translation",
                                    v.claimed_span.unwrap_or_default(),
                                    v.l1_phrase
                                ),
                            ));
                        }
                        mapping = Some(ExtractionMapping {
                            pairs,
                            translated_text: translated.clone(),
                        });
                    }
                    Err(e) => degradations.push((Stage::Map, e.to_string())),
                },
                None => {}
            }
        } else {
            translated = assist::translate(&self.gateway, draft, langs.native, langs.target, &context)?;
        }

        let captures: Vec<String> = mapping
            .iter()
            .flat_map(|m| &m.pairs)
            .map(|p| if p.l2_span.is_empty() { p.l1_phrase.clone() } else { p.l2_span.clone() })
            .collect();
        let capture_refs: Vec<&str> = captures.iter().map(String::as_str).collect();
        let capture_embeddings = self.gateway.embed_batch(&capture_refs);
        let query = learning.then(|| self.gateway.embed(draft));

        let (l1_tokens, total_tokens) = text::l1_token_counts(draft, script);
        let mut d = cell.write();
        let now = self.now();
        d.record(
            Event::ExpressionSupport {
                draft: draft.to_owned(),
                translated_text: translated.clone(),
                l1_tokens,
                total_tokens,
                extracted: mapping.is_some(),
            },
            now,
        )?;
        for (stage, reason) in &degradations {
            d.degrade("build_expression", Some(*stage), reason.clone(), now)?;
        }
        for (surface, embedding) in captures.iter().zip(capture_embeddings) {
            d.capture(surface, &translated, CaptureSource::Expression, embedding, now)?;
        }
        if !captures.is_empty() {
            d.save_review()?;
        }
        let cards = match query {
            Some(Ok(q)) => d.trigger(&q, TriggerKind::ExpressionDriven, now)?,
            Some(Err(e)) => {
                d.degrade("retrieve_expression_driven", None, format!("query embedding failed: {e}"), now)?;
                Vec::new()
            }
            None => Vec::new(),
        };
        Ok(BuildOutcome {
            translation: TranslationResult {
                source_text: draft.to_owned(),
                translated_text: translated,
                direction: TranslationDirection::ToTarget,
                context_used: window.iter().map(|m| m.id).collect(),
            },
            mapping,
            cards,
            degraded: !degradations.is_empty(),
        })
    }

    /// Stores a challenging expression, reusing an entry with the same
    /// normalized text.
    pub fn capture(
        &self,
        id: SessionId,
        surface_text: &str,
        context_message: &str,
        source: CaptureSource,
    ) -> Result<ExpressionEntry> {
        let cell = self.cell(id)?;
        cell.read().require_learning("review cards")?;
        if surface_text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let embedding = self.gateway.embed(surface_text);
        let mut d = cell.write();
        let now = self.now();
        let entry = d.capture(surface_text, context_message, source, embedding, now)?;
        d.save_review()?;
        Ok(entry)
    }

    fn retrieve(&self, id: SessionId, text: &str, kind: TriggerKind) -> Result<Vec<ReviewCard>> {
        let cell = self.cell(id)?;
        cell.read().require_learning("review cards")?;
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let query = self.gateway.embed(text);
        let mut d = cell.write();
        let now = self.now();
        match query {
            Ok(q) => d.trigger(&q, kind, now),
            Err(e) => {
                let op = match kind {
                    TriggerKind::ContextDriven => "retrieve_context_driven",
                    TriggerKind::ExpressionDriven => "retrieve_expression_driven",
                };
                d.degrade(op, None, format!("query embedding failed: {e}"), now)?;
                Ok(Vec::new())
            }
        }
    }

    /// Review cards for an incoming native-speaker message.
    pub fn retrieve_context_driven(&self, id: SessionId, incoming: &str) -> Result<Vec<ReviewCard>> {
        self.retrieve(id, incoming, TriggerKind::ContextDriven)
    }

    /// Review cards for the learner's draft.
    pub fn retrieve_expression_driven(&self, id: SessionId, draft: &str) -> Result<Vec<ReviewCard>> {
        self.retrieve(id, draft, TriggerKind::ExpressionDriven)
    }

    pub fn record_interaction(&self, id: SessionId, entry_id: EntryId) -> Result<ExpressionEntry> {
        let cell = self.cell(id)?;
        let mut d = cell.write();
        d.require_learning("review cards")?;
        let entry = d.review.record_interaction(entry_id)?;
        let now = self.now();
        d.record(Event::CardInteraction { entry_id }, now)?;
        d.save_review()?;
        Ok(entry)
    }

    pub fn begin_recall(&self, id: SessionId) -> Result<u32> {
        let cell = self.cell(id)?;
        let mut d = cell.write();
        let now = self.now();
        d.session.begin_recall(now)?;
        d.save_session()?;
        Ok(d.session.config.recall_test_seconds)
    }

    pub fn validate_recall(&self, id: SessionId, submission: &RecallSubmission) -> Result<RecallResult> {
        let cell = self.cell(id)?;
        let mut d = cell.write();
        if d.session.state != SessionState::RecallTest {
            return Err(Error::WrongState(id, "recall_test"));
        }
        let result = metrics::validate_recall(
            submission,
            &d.recall_corpus(),
            d.session.config.recall_test_seconds,
        )?;
        if let Some(f) = &d.files {
            f.write_recall(&result)?;
        }
        d.recall = Some(result.clone());
        Ok(result)
    }

    pub fn close(&self, id: SessionId) -> Result<()> {
        let cell = self.cell(id)?;
        let mut d = cell.write();
        if d.session.state != SessionState::Closed {
            d.session.close();
            d.save_session()?;
        }
        Ok(())
    }

    pub fn compute_report(&self, id: SessionId) -> Result<MetricsReport> {
        let cell = self.cell(id)?;
        let d = cell.read();
        if !d.session.is_finished() {
            return Err(Error::SessionNotFinished(id));
        }
        Ok(MetricsReport::from_events(d.log.events()))
    }

    pub fn events(&self, id: SessionId) -> Result<Vec<LogEvent>> {
        Ok(self.cell(id)?.read().log.events().to_vec())
    }

    pub fn review_snapshot(&self, id: SessionId) -> Result<ReviewStore> {
        Ok(self.cell(id)?.read().review.clone())
    }

    pub fn recall_result(&self, id: SessionId) -> Result<Option<RecallResult>> {
        Ok(self.cell(id)?.read().recall.clone())
    }

    pub fn recall_corpus(&self, id: SessionId) -> Result<Vec<String>> {
        Ok(self.cell(id)?.read().recall_corpus())
    }
}
