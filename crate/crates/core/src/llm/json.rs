//! Lenient extraction of JSON payloads from model output.
//!
//! Model replies may wrap the payload in code fences or surround it with prose.
//! The scanner tries each opening delimiter in turn, finds its balanced
//! closing delimiter (ignoring delimiters inside strings), and returns the
//! first candidate that parses.

use serde_json::Value;

fn balanced_end(text: &str, start: usize, open: u8, close: u8) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            _ if b == open => depth += 1,
            _ if b == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn first_balanced(text: &str, open: u8, close: u8) -> Option<Value> {
    text.bytes()
        .enumerate()
        .filter(|&(_, b)| b == open)
        .find_map(|(start, _)| {
            let end = balanced_end(text, start, open, close)?;
            serde_json::from_str(&text[start..end]).ok()
        })
}

/// First balanced JSON object in `text`.
pub fn first_object(text: &str) -> Option<Value> {
    first_balanced(text, b'{', b'}').filter(Value::is_object)
}

/// First balanced JSON array in `text`.
pub fn first_array(text: &str) -> Option<Value> {
    first_balanced(text, b'[', b']').filter(Value::is_array)
}

/// `translated_text` field of the first JSON object, if it is a string.
pub fn translated_text(text: &str) -> Option<String> {
    let obj = first_object(text)?;
    obj.get("translated_text")?.as_str().map(str::to_owned)
}

/// First JSON array whose elements are all strings.
pub fn string_list(text: &str) -> Option<Vec<String>> {
    let arr = first_array(text)?;
    arr.as_array()?
        .iter()
        .map(|v| v.as_str().map(str::to_owned))
        .collect()
}
