//! Captured expressions and contextual review cards.
//!
//! Every expression the learner looked up (explorer) or scaffolded in their
//! first language (extractor) is embedded and kept in a per-session store.
//! Later messages and drafts are matched against the store by cosine
//! similarity; matches at or above the threshold come back as review cards that
//! show the message the expression was originally captured in.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::EmbeddingVector;
use crate::text::normalize_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(pub u64);

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Channel an expression was captured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSource {
    /// Explorer selection in a received message.
    Comprehension,
    /// Extractor mapping of a scaffolded draft.
    Expression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    /// An incoming native-speaker message.
    ContextDriven,
    /// The learner's own draft.
    ExpressionDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionEntry {
    pub id: EntryId,
    pub surface_text: String,
    /// Full text of the message the expression was captured in.
    pub context_message: String,
    /// `None` when embedding failed; such entries never match.
    pub embedding: Option<EmbeddingVector>,
    pub source: CaptureSource,
    pub captured_at: i64,
    pub trigger_count: u32,
    pub interaction_count: u32,
    pub pinned: bool,
    /// Number of session messages at the latest capture.
    pub captured_turn: usize,
}

impl ExpressionEntry {
    pub fn key(&self) -> String {
        normalize_key(&self.surface_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCard {
    pub entry_id: EntryId,
    pub surface_text: String,
    pub similarity: f64,
    pub trigger: TriggerKind,
    pub shown_context: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
}

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// A ranked match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub entry_id: EntryId,
    pub similarity: f64,
}

/// Retrieval parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query<'a> {
    pub vector: &'a [f64],
    pub threshold: f64,
    pub top_k: usize,
    /// Entries last captured at this turn are skipped.
    pub exclude_turn: Option<usize>,
}

/// Stores below this size are scored sequentially even with `parallel` on.
pub const PARALLEL_CUTOFF: usize = 512;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewStore {
    entries: Vec<ExpressionEntry>,
}

impl ReviewStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<ExpressionEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[ExpressionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: EntryId) -> Option<&ExpressionEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn get_mut(&mut self, id: EntryId) -> Option<&mut ExpressionEntry> {
        self.entries.iter_mut().find(|e| e.id == id)
    }

    pub fn find_key(&self, surface_text: &str) -> Option<&ExpressionEntry> {
        let key = normalize_key(surface_text);
        self.entries.iter().find(|e| e.key() == key)
    }

    /// Inserts a new entry or refreshes the one with the same normalized text.
    /// Returns the live entry and whether it was newly created.
    pub fn capture(
        &mut self,
        surface_text: &str,
        context_message: &str,
        source: CaptureSource,
        embedding: Option<EmbeddingVector>,
        now: i64,
        turn: usize,
    ) -> (ExpressionEntry, bool) {
        let key = normalize_key(surface_text);
        if let Some(entry) = self.entries.iter_mut().find(|e| e.key() == key) {
            entry.captured_at = now;
            entry.captured_turn = turn;
            if entry.embedding.is_none() {
                entry.embedding = embedding;
            }
            return (entry.clone(), false);
        }
        let id = EntryId(self.entries.iter().map(|e| e.id.0).max().unwrap_or(0) + 1);
        let entry = ExpressionEntry {
            id,
            surface_text: surface_text.trim().to_owned(),
            context_message: context_message.to_owned(),
            embedding,
            source,
            captured_at: now,
            trigger_count: 0,
            interaction_count: 0,
            pinned: false,
            captured_turn: turn,
        };
        self.entries.push(entry.clone());
        (entry, true)
    }

    fn score(entry: &ExpressionEntry, query: &Query<'_>) -> Option<(Scored, i64)> {
        if query.exclude_turn == Some(entry.captured_turn) {
            return None;
        }
        let emb = entry.embedding.as_ref()?;
        let similarity = cosine_similarity(query.vector, emb.values()).ok()?;
        let scored = Scored {
            entry_id: entry.id,
            similarity,
        };
        (similarity >= query.threshold).then_some((scored, entry.captured_at))
    }

    fn finish(mut scored: Vec<(Scored, i64)>, top_k: usize) -> Vec<Scored> {
        scored.sort_by(|(a, a_at), (b, b_at)| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| b_at.cmp(a_at))
                .then_with(|| b.entry_id.cmp(&a.entry_id))
        });
        scored.truncate(top_k);
        scored.into_iter().map(|(s, _)| s).collect()
    }

    pub fn rank_sequential(&self, query: &Query<'_>) -> Vec<Scored> {
        let scored = self
            .entries
            .iter()
            .filter_map(|e| Self::score(e, query))
            .collect();
        Self::finish(scored, query.top_k)
    }

    #[cfg(feature = "parallel")]
    pub fn rank_parallel(&self, query: &Query<'_>) -> Vec<Scored> {
        use rayon::prelude::*;
        let scored = self
            .entries
            .par_iter()
            .filter_map(|e| Self::score(e, query))
            .collect();
        Self::finish(scored, query.top_k)
    }

    /// Entries at or above the threshold, best first, ties broken by most
    /// recent capture, at most `top_k`.
    pub fn rank(&self, query: &Query<'_>) -> Vec<Scored> {
        #[cfg(feature = "parallel")]
        if self.entries.len() >= PARALLEL_CUTOFF {
            return self.rank_parallel(query);
        }
        self.rank_sequential(query)
    }

    /// Increments the trigger counter of each matched entry and builds cards.
    pub fn trigger(&mut self, matches: &[Scored], kind: TriggerKind) -> Vec<ReviewCard> {
        matches
            .iter()
            .filter_map(|m| {
                let entry = self.get_mut(m.entry_id)?;
                entry.trigger_count += 1;
                Some(ReviewCard {
                    entry_id: entry.id,
                    surface_text: entry.surface_text.clone(),
                    similarity: m.similarity,
                    trigger: kind,
                    shown_context: entry.context_message.clone(),
                })
            })
            .collect()
    }

    /// Counts one interaction with a shown card and pins it.
    pub fn record_interaction(&mut self, id: EntryId) -> Result<ExpressionEntry> {
        let entry = self.get_mut(id).ok_or(Error::UnknownEntry(id))?;
        if entry.trigger_count == 0 {
            return Err(Error::NeverTriggered(id));
        }
        if entry.interaction_count >= entry.trigger_count {
            return Err(Error::InteractionExhausted(id));
        }
        entry.interaction_count += 1;
        entry.pinned = true;
        Ok(entry.clone())
    }

    /// One JSON object per line, embeddings as number arrays.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Corrupt(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}
