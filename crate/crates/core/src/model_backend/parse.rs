//! Extraction of a K-item string list from a free-form model reply.
//!
//! Accepted, in order of preference:
//! 1. the whole reply is a JSON array (status `ok`);
//! 2. the first well-formed JSON array found anywhere in the reply, which
//!    covers Markdown fences and surrounding prose (status `recovered`);
//! 3. the first Python-style list of quoted strings such as
//!    `['Navajo', 'Cherokee']` (status `recovered`).

use serde_json::Value;
use thiserror::Error;

use super::normalize::normalize_item;
use super::ParseStatus;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no list found in reply")]
    NotAList,
    #[error("expected {expected} items, found {found}")]
    WrongItemCount { found: usize, expected: usize },
    #[error("item {0} is not a string")]
    NonStringItem(usize),
    #[error("item {0} is empty")]
    EmptyItem(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedList {
    pub items: Vec<String>,
    pub status: ParseStatus,
}

pub fn parse_list(raw_text: &str, k: usize) -> Result<ParsedList, ParseError> {
    if let Ok(Value::Array(values)) = serde_json::from_str::<Value>(raw_text.trim()) {
        return check_values(values, k).map(|items| ParsedList {
            items,
            status: ParseStatus::Ok,
        });
    }

    let starts: Vec<usize> = raw_text.match_indices('[').map(|(i, _)| i).collect();
    for &start in &starts {
        let mut stream =
            serde_json::Deserializer::from_str(&raw_text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(values))) = stream.next() {
            return check_values(values, k).map(|items| ParsedList {
                items,
                status: ParseStatus::Recovered,
            });
        }
    }

    for &start in &starts {
        if let Some(items) = python_string_list(&raw_text[start..]) {
            return check_strings(items, k).map(|items| ParsedList {
                items,
                status: ParseStatus::Recovered,
            });
        }
    }

    Err(ParseError::NotAList)
}

fn check_values(values: Vec<Value>, k: usize) -> Result<Vec<String>, ParseError> {
    if values.len() != k {
        return Err(ParseError::WrongItemCount {
            found: values.len(),
            expected: k,
        });
    }
    let strings = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::String(s) => Ok(s),
            _ => Err(ParseError::NonStringItem(i)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_strings(strings, k)
}

fn check_strings(items: Vec<String>, k: usize) -> Result<Vec<String>, ParseError> {
    if items.len() != k {
        return Err(ParseError::WrongItemCount {
            found: items.len(),
            expected: k,
        });
    }
    if let Some(i) = items.iter().position(|s| normalize_item(s).is_empty()) {
        return Err(ParseError::EmptyItem(i));
    }
    Ok(items)
}

/// Parses `['a', "b", ...]` at the start of `text`. Only quoted strings are
/// accepted as elements; backslash escapes the next character.
fn python_string_list(text: &str) -> Option<Vec<String>> {
    let mut chars = text.chars().peekable();
    if chars.next()? != '[' {
        return None;
    }
    let mut items = Vec::new();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next()? {
            // Empty list, or a trailing comma as Python allows.
            ']' => return Some(items),
            quote @ ('\'' | '"') => {
                let mut item = String::new();
                loop {
                    match chars.next()? {
                        '\\' => item.push(chars.next()?),
                        c if c == quote => break,
                        c => item.push(c),
                    }
                }
                items.push(item);
            }
            _ => return None,
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next()? {
            ',' => continue,
            ']' => return Some(items),
            _ => return None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn well_formed() {
        let p = parse_list(r#"["a","b","c"]"#, 3).unwrap();
        assert_eq!(p.items, abc());
        assert_eq!(p.status, ParseStatus::Ok);
    }

    #[test]
    fn fenced() {
        let p = parse_list("```json\n[\"a\",\"b\",\"c\"]\n```", 3).unwrap();
        assert_eq!(p.items, abc());
        assert_eq!(p.status, ParseStatus::Recovered);
    }

    #[test]
    fn wrong_count() {
        assert_eq!(
            parse_list(r#"["a","b"]"#, 10),
            Err(ParseError::WrongItemCount {
                found: 2,
                expected: 10
            })
        );
    }

    #[test]
    fn python_style_reply() {
        let raw = "['Navajo', 'Cherokee', 'Lakota', 'Ojibwe', 'Cree', 'Inuktitut', 'Zapotec', 'Quechua', 'Maya', 'Aymara']";
        let p = parse_list(raw, 10).unwrap();
        assert_eq!(p.items[0], "Navajo");
        assert_eq!(p.items[9], "Aymara");
        assert_eq!(p.status, ParseStatus::Recovered);
    }

    #[test]
    fn python_list_keeps_inner_punctuation() {
        let raw =
            r"['Kiwi', 'Citrus Fruits (Oranges, Grapefruit, Lemons, Limes)', 'Baker\'s dozen']";
        let p = parse_list(raw, 3).unwrap();
        assert_eq!(
            p.items[1],
            "Citrus Fruits (Oranges, Grapefruit, Lemons, Limes)"
        );
        assert_eq!(p.items[2], "Baker's dozen");
    }

    #[test]
    fn python_list_trailing_comma() {
        let p = parse_list("['a', 'b', 'c',]", 3).unwrap();
        assert_eq!(p.items, abc());
        assert_eq!(parse_list("[,]", 1), Err(ParseError::NotAList));
    }

    #[test]
    fn non_string_and_empty_items() {
        assert_eq!(
            parse_list(r#"["a",2,"c"]"#, 3),
            Err(ParseError::NonStringItem(1))
        );
        assert_eq!(
            parse_list(r#"["a"," . ","c"]"#, 3),
            Err(ParseError::EmptyItem(1))
        );
    }

    #[test]
    fn not_a_list() {
        assert_eq!(
            parse_list("I cannot help with that.", 3),
            Err(ParseError::NotAList)
        );
        assert_eq!(parse_list(r#"{"a": 1}"#, 3), Err(ParseError::NotAList));
        assert_eq!(parse_list(r#"["a", "b""#, 2), Err(ParseError::NotAList));
        assert_eq!(parse_list("", 1), Err(ParseError::NotAList));
    }
}
