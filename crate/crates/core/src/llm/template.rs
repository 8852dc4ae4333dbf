//! Prompt templates with bracketed placeholders.
//!
//! Rendering is a single left-to-right pass, so bound values are never
//! re-scanned for placeholders. Bracketed text that is not a known placeholder
//! (the JSON examples in the output-format lines) is copied unchanged.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Translate,
    Explain,
    Extract,
    Map,
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateName::Translate => "translate",
            TemplateName::Explain => "explain",
            TemplateName::Extract => "extract",
            TemplateName::Map => "map",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Placeholder {
    UserInput,
    NativeLanguage,
    TargetLanguage,
    Context,
    Phrase,
    TranslatedText,
    ListOfPhrases,
}

impl Placeholder {
    pub const ALL: [Placeholder; 7] = [
        Placeholder::UserInput,
        Placeholder::NativeLanguage,
        Placeholder::TargetLanguage,
        Placeholder::Context,
        Placeholder::Phrase,
        Placeholder::TranslatedText,
        Placeholder::ListOfPhrases,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Placeholder::UserInput => "[USER_INPUT]",
            Placeholder::NativeLanguage => "[NATIVE_LANGUAGE]",
            Placeholder::TargetLanguage => "[TARGET_LANGUAGE]",
            Placeholder::Context => "[CONTEXT]",
            Placeholder::Phrase => "[PHRASE]",
            Placeholder::TranslatedText => "[TRANSLATED_TEXT]",
            Placeholder::ListOfPhrases => "[LIST_OF_PHRASES]",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Context slot that falls back to a literal when nothing is bound.
const CONTEXT_WITH_DEFAULT: &str = "[CONTEXT or 'N/A']";
pub const NO_CONTEXT: &str = "N/A";

pub type Bindings = BTreeMap<Placeholder, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
}

impl PromptTemplate {
    pub const TRANSLATE: PromptTemplate = PromptTemplate {
        name: TemplateName::Translate,
        body: include_str!("../../templates/translate.txt"),
    };
    pub const EXPLAIN: PromptTemplate = PromptTemplate {
        name: TemplateName::Explain,
        body: include_str!("../../templates/explain.txt"),
    };
    pub const EXTRACT: PromptTemplate = PromptTemplate {
        name: TemplateName::Extract,
        body: include_str!("../../templates/extract.txt"),
    };
    pub const MAP: PromptTemplate = PromptTemplate {
        name: TemplateName::Map,
        body: include_str!("../../templates/map.txt"),
    };

    pub fn get(name: TemplateName) -> &'static PromptTemplate {
        match name {
            TemplateName::Translate => &Self::TRANSLATE,
            TemplateName::Explain => &Self::EXPLAIN,
            TemplateName::Extract => &Self::EXTRACT,
            TemplateName::Map => &Self::MAP,
        }
    }

    /// Placeholders referenced by the body, in first-occurrence order.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        let mut seen = Vec::new();
        for_each_token(self.body, |tok| {
            if let Token::Slot(p, _) = tok {
                if !seen.contains(&p) {
                    seen.push(p);
                }
            }
        });
        seen
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, LlmError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut missing = None;
        for_each_token(self.body, |tok| match tok {
            Token::Literal(s) => out.push_str(s),
            Token::Slot(p, has_default) => match bindings.get(&p) {
                Some(v) => out.push_str(v),
                None if p == Placeholder::Context || has_default => out.push_str(NO_CONTEXT),
                None => {
                    missing.get_or_insert(p);
                }
            },
        });
        match missing {
            Some(placeholder) => Err(LlmError::MissingPlaceholder {
                template: self.name,
                placeholder,
            }),
            None => Ok(out),
        }
    }
}

enum Token<'a> {
    Literal(&'a str),
    Slot(Placeholder, bool),
}

fn for_each_token<'a>(body: &'a str, mut f: impl FnMut(Token<'a>)) {
    let mut rest = body;
    while let Some(open) = rest.find('[') {
        let (head, tail) = rest.split_at(open);
        if !head.is_empty() {
            f(Token::Literal(head));
        }
        if let Some(stripped) = tail.strip_prefix(CONTEXT_WITH_DEFAULT) {
            f(Token::Slot(Placeholder::Context, true));
            rest = stripped;
            continue;
        }
        match Placeholder::ALL.iter().find(|p| tail.starts_with(p.token())) {
            Some(&p) => {
                f(Token::Slot(p, false));
                rest = &tail[p.token().len()..];
            }
            None => {
                f(Token::Literal("["));
                rest = &tail[1..];
            }
        }
    }
    if !rest.is_empty() {
        f(Token::Literal(rest));
    }
}
