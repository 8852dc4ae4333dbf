use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::events::{Event, LogEvent};
use crate::chat::Sender;
use crate::review::CaptureSource;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningOpportunities {
    pub comprehension: u32,
    pub expression: u32,
}

/// Per-session behavior metrics. Message counts cover the learner only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub expression_support_count: u32,
    /// First-language tokens over all tokens across expression-support inputs.
    pub first_language_usage_ratio: f64,
    pub full_comprehension_count: u32,
    pub partial_comprehension_count: u32,
    pub learning_opportunities_by_source: LearningOpportunities,
    pub card_interaction_count: u32,
    pub card_trigger_frequency: u32,
    pub message_count: u32,
    pub message_token_total: u32,
}

impl MetricsReport {
    /// Folds a session's event log.
    pub fn from_events(events: &[LogEvent]) -> Self {
        let mut r = Self::default();
        let (mut l1, mut total) = (0u64, 0u64);
        for e in events {
            match &e.event {
                Event::MessageSent {
                    sender: Sender::Nns,
                    token_count,
                    ..
                } => {
                    r.message_count += 1;
                    r.message_token_total += token_count;
                }
                Event::MessageSent { .. } => {}
                Event::FullComprehension { .. } => r.full_comprehension_count += 1,
                Event::PartialComprehension { .. } => r.partial_comprehension_count += 1,
                Event::ExpressionSupport {
                    l1_tokens,
                    total_tokens,
                    ..
                } => {
                    r.expression_support_count += 1;
                    l1 += u64::from(*l1_tokens);
                    total += u64::from(*total_tokens);
                }
                Event::Capture { source, .. } => match source {
                    CaptureSource::Comprehension => r.learning_opportunities_by_source.comprehension += 1,
                    CaptureSource::Expression => r.learning_opportunities_by_source.expression += 1,
                },
                Event::CardTriggered { .. } => r.card_trigger_frequency += 1,
                Event::CardInteraction { .. } => r.card_interaction_count += 1,
                Event::Degradation { .. } => {}
            }
        }
        r.first_language_usage_ratio = if total == 0 {
            0.0
        } else {
            l1 as f64 / total as f64
        };
        r
    }

    pub fn learning_opportunities(&self) -> u32 {
        self.learning_opportunities_by_source.comprehension
            + self.learning_opportunities_by_source.expression
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Two-column plain-text table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("expression support count", self.expression_support_count.to_string()),
            ("first-language usage ratio", format!("{:.4}", self.first_language_usage_ratio)),
            ("full comprehension count", self.full_comprehension_count.to_string()),
            ("partial comprehension count", self.partial_comprehension_count.to_string()),
            (
                "learning opportunities (comprehension)",
                self.learning_opportunities_by_source.comprehension.to_string(),
            ),
            (
                "learning opportunities (expression)",
                self.learning_opportunities_by_source.expression.to_string(),
            ),
            ("review card interactions", self.card_interaction_count.to_string()),
            ("review card triggers", self.card_trigger_frequency.to_string()),
            ("message count", self.message_count.to_string()),
            ("message tokens", self.message_token_total.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>8}");
        }
        out
    }
}
