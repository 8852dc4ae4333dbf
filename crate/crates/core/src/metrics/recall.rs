//! Free-recall test scoring.
//!
//! An item is valid when, after normalization, it occurs in what the learner
//! actually saw in the target language. Items that only match once stopwords
//! and word order are ignored are still accepted but flagged for a human to
//! confirm. Valid items whose stopword-free word multisets coincide are merged
//! into one expression.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STOPWORDS: [&str; 8] = ["a", "an", "the", "of", "in", "on", "to", "for"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallItem {
    pub expression: String,
    /// 1..=7
    pub confidence: u8,
    /// 1..=7
    pub difficulty: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallSubmission {
    pub items: Vec<RecallItem>,
    pub submitted_within_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedExpression {
    /// Normalized text of the first submitted variant.
    pub expression: String,
    pub variants: Vec<String>,
    /// Highest confidence among the variants.
    pub confidence: u8,
    /// Mean difficulty of the variants.
    pub difficulty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub valid_items: Vec<MergedExpression>,
    pub recall_quantity: u32,
    pub mean_confidence: f64,
    pub mean_difficulty: f64,
    /// Normalized items accepted only by the stopword-insensitive rule.
    pub flagged_for_review: Vec<String>,
    /// Normalized items that never appeared.
    pub rejected: Vec<String>,
}

/// Lowercase, collapse whitespace, strip punctuation at both ends.
pub fn normalize_item(text: &str) -> String {
    crate::text::normalize_key(text)
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_owned()
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|w| w.trim_matches(|c| c == '\'' || c == '\u{2019}').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn content_words(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Sorted stopword-free words; two items merge iff their keys are equal.
/// Items made only of stopwords keep all their words.
pub fn merge_key(item: &str) -> Vec<String> {
    let mut key = content_words(item);
    if key.is_empty() {
        key = words(item);
    }
    key.sort();
    key
}

fn fuzzy_occurs(item_key: &[String], corpus_words: &[Vec<String>]) -> bool {
    let n = item_key.len();
    corpus_words.iter().any(|text| {
        text.windows(n).any(|w| {
            let mut w = w.to_vec();
            w.sort();
            w == item_key
        })
    })
}

/// Scores a submission against the target-language texts shown to the learner.
pub fn validate_recall(
    submission: &RecallSubmission,
    corpus: &[String],
    budget_seconds: u32,
) -> Result<RecallResult> {
    if !submission.submitted_within_seconds.is_finite() || submission.submitted_within_seconds < 0.0 {
        return Err(Error::InvalidSubmission("elapsed time must be non-negative".into()));
    }
    if submission.submitted_within_seconds > f64::from(budget_seconds) {
        return Err(Error::OverTime {
            submitted: submission.submitted_within_seconds,
            budget: budget_seconds,
        });
    }
    for item in &submission.items {
        for (name, v) in [("confidence", item.confidence), ("difficulty", item.difficulty)] {
            if !(1..=7).contains(&v) {
                return Err(Error::InvalidSubmission(format!(
                    "{name} {v} for {:?} outside 1..=7",
                    item.expression
                )));
            }
        }
    }

    // normalized per text so that matches cannot span two texts
    let haystack = corpus
        .iter()
        .map(|t| crate::text::normalize_key(t))
        .collect::<Vec<_>>()
        .join("\n");
    let corpus_words: Vec<Vec<String>> = corpus.iter().map(|t| content_words(t)).collect();

    // merge key -> (merged expression, confidences, difficulties)
    let mut groups: BTreeMap<Vec<String>, (usize, MergedExpression, Vec<u8>)> = BTreeMap::new();
    let mut flagged = Vec::new();
    let mut rejected = Vec::new();
    for (order, item) in submission.items.iter().enumerate() {
        let norm = normalize_item(&item.expression);
        if norm.is_empty() {
            rejected.push(norm);
            continue;
        }
        let key = merge_key(&norm);
        let exact = haystack.contains(&norm);
        if !exact {
            let content = content_words(&norm);
            if content.is_empty() || !fuzzy_occurs(&key, &corpus_words) {
                rejected.push(norm);
                continue;
            }
            flagged.push(norm.clone());
        }
        let group = groups.entry(key).or_insert_with(|| {
            (
                order,
                MergedExpression {
                    expression: norm.clone(),
                    variants: Vec::new(),
                    confidence: 0,
                    difficulty: 0.0,
                },
                Vec::new(),
            )
        });
        if !group.1.variants.contains(&norm) {
            group.1.variants.push(norm);
        }
        group.1.confidence = group.1.confidence.max(item.confidence);
        group.2.push(item.difficulty);
    }

    let mut merged: Vec<(usize, MergedExpression)> = groups
        .into_values()
        .map(|(order, mut m, difficulties)| {
            m.difficulty = difficulties.iter().map(|&d| f64::from(d)).sum::<f64>()
                / difficulties.len() as f64;
            (order, m)
        })
        .collect();
    merged.sort_by_key(|(order, _)| *order);
    let valid_items: Vec<MergedExpression> = merged.into_iter().map(|(_, m)| m).collect();

    let n = valid_items.len();
    let mean = |f: &dyn Fn(&MergedExpression) -> f64| {
        if n == 0 {
            0.0
        } else {
            valid_items.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(RecallResult {
        recall_quantity: n as u32,
        mean_confidence: mean(&|m| f64::from(m.confidence)),
        mean_difficulty: mean(&|m| m.difficulty),
        valid_items,
        flagged_for_review: flagged,
        rejected,
    })
}
