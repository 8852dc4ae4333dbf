//! Script classification and tokenization.
//!
//! Token rule: every native-script character is one token; any other run of
//! characters is split on whitespace and punctuation into word tokens.

use serde::{Deserialize, Serialize};

use crate::config::Language;

/// Writing system of the learner's first language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NativeScript {
    /// CJK unified ideographs (Chinese).
    Han,
    /// Han plus hiragana and katakana (Japanese).
    Kana,
    /// Hangul syllables and jamo (Korean).
    Hangul,
}

impl NativeScript {
    pub fn for_language(lang: &Language) -> Option<Self> {
        match lang.as_str().trim().to_ascii_lowercase().as_str() {
            "chinese" | "mandarin" | "mandarin chinese" | "zh" | "zh-cn" | "zh-hans"
            | "zh-tw" | "zh-hant" | "cantonese" => Some(Self::Han),
            "japanese" | "ja" => Some(Self::Kana),
            "korean" | "ko" => Some(Self::Hangul),
            _ => None,
        }
    }

    pub fn contains(self, c: char) -> bool {
        match self {
            Self::Han => is_han(c),
            Self::Kana => is_han(c) || is_kana(c),
            Self::Hangul => is_hangul(c),
        }
    }
}

pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3007
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x323AF)
}

fn is_kana(c: char) -> bool {
    matches!(c as u32, 0x3041..=0x309F | 0x30A0..=0x30FF | 0x31F0..=0x31FF)
}

fn is_hangul(c: char) -> bool {
    matches!(c as u32, 0x1100..=0x11FF | 0x3130..=0x318F | 0xAC00..=0xD7AF)
}

/// Half-open byte range into a string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// Maximal runs of native-script characters, in order.
///
/// Digits, Latin letters, whitespace and punctuation all break a run.
pub fn detect_l1_segments(text: &str, script: NativeScript) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (script.contains(c), open) {
            (true, None) => open = Some(i),
            (false, Some(start)) => {
                spans.push(Span { start, end: i });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        spans.push(Span {
            start,
            end: text.len(),
        });
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub native: bool,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

pub fn tokenize<'a>(text: &'a str, script: NativeScript) -> Vec<Token<'a>> {
    let mut out = Vec::new();
    let mut word: Option<usize> = None;
    let flush = |out: &mut Vec<Token<'a>>, start: usize, end: usize| {
        let w = text[start..end].trim_matches(|c| c == '\'' || c == '\u{2019}');
        if !w.is_empty() {
            out.push(Token {
                text: w,
                native: false,
            });
        }
    };
    for (i, c) in text.char_indices() {
        if script.contains(c) {
            if let Some(start) = word.take() {
                flush(&mut out, start, i);
            }
            out.push(Token {
                text: &text[i..i + c.len_utf8()],
                native: true,
            });
        } else if is_word_char(c) {
            word.get_or_insert(i);
        } else if let Some(start) = word.take() {
            flush(&mut out, start, i);
        }
    }
    if let Some(start) = word {
        flush(&mut out, start, text.len());
    }
    out
}

pub fn token_count(text: &str, script: NativeScript) -> u32 {
    tokenize(text, script).len() as u32
}

/// Native-script and total token counts.
pub fn l1_token_counts(text: &str, script: NativeScript) -> (u32, u32) {
    let tokens = tokenize(text, script);
    let native = tokens.iter().filter(|t| t.native).count() as u32;
    (native, tokens.len() as u32)
}

/// First-language share of tokens; 0 for input without tokens.
pub fn l1_ratio(text: &str, script: NativeScript) -> f64 {
    let (native, total) = l1_token_counts(text, script);
    if total == 0 {
        0.0
    } else {
        f64::from(native) / f64::from(total)
    }
}

/// Lowercased, trimmed, internal whitespace collapsed to single spaces.
pub fn normalize_key(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}
