//! Shared helpers for the line-oriented text formats.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
pub fn lines(input: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    input.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        (!words.is_empty()).then_some((i + 1, words))
    })
}

pub fn field<T: FromStr>(line: usize, words: &[&str], index: usize, what: &str) -> Result<T, ParseError> {
    let raw = words
        .get(index)
        .ok_or_else(|| ParseError::new(line, format!("missing {what}")))?;
    raw.parse()
        .map_err(|_| ParseError::new(line, format!("invalid {what} `{raw}`")))
}

pub fn expect_len(line: usize, words: &[&str], len: usize) -> Result<(), ParseError> {
    if words.len() != len {
        return Err(ParseError::new(
            line,
            format!("`{}` takes {} arguments, got {}", words[0], len - 1, words.len() - 1),
        ));
    }
    Ok(())
}

pub fn on_off(line: usize, raw: &str) -> Result<bool, ParseError> {
    match raw {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(ParseError::new(line, format!("expected on/off, got `{raw}`"))),
    }
}

pub fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
