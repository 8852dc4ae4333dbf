//! Behavior log, derived session metrics and free-recall validation.

mod events;
mod recall;
mod report;

pub use events::{Event, EventKind, EventLog, LogEvent};
pub use recall::{
    merge_key, normalize_item, validate_recall, MergedExpression, RecallItem, RecallResult,
    RecallSubmission, STOPWORDS,
};
pub use report::{LearningOpportunities, MetricsReport};

pub use crate::text::l1_ratio;
