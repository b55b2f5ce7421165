//! Recovering the entity list and the response line from a completion.

use serde::{Deserialize, Serialize};

use crate::corpus::EntityMention;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub entities: Option<Vec<EntityMention>>,
    pub response: String,
    /// No role marker was found, or it was followed by nothing.
    pub fallback: bool,
}

/// Splits a completion into its entity list and final response.
///
/// The response is the text after the last line starting with `{role}:`.
/// Entities come from the last bracketed list of pairs before that line,
/// in tuple or list-pair style. Without a marker the last non-empty line is
/// taken as the response.
pub fn parse_response(raw: &str, role: &str) -> ParsedResponse {
    let marker = format!("{role}:");
    let mut offset = 0;
    let mut found = None;
    for line in raw.split_inclusive('\n') {
        let stripped = line.trim_start();
        if stripped.starts_with(&marker) {
            let start = offset + (line.len() - stripped.len());
            found = Some(start);
        }
        offset += line.len();
    }
    match found {
        Some(start) => {
            let response = raw[start + marker.len()..].trim().to_string();
            let entities = last_pair_list(&raw[..start]);
            let fallback = response.is_empty();
            ParsedResponse {
                entities,
                response,
                fallback,
            }
        }
        None => ParsedResponse {
            entities: None,
            response: raw.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string(),
            fallback: true,
        },
    }
}

/// The pair list that ends `text`, scanning starts from the back; otherwise
/// the last position where any pair list parses.
fn last_pair_list(text: &str) -> Option<Vec<EntityMention>> {
    let mut fallback = None;
    for (i, _) in text.char_indices().rev().filter(|&(_, c)| c == '[') {
        let mut parser = PairListParser { s: &text[i..], pos: 0 };
        if let Some(list) = parser.list() {
            if parser.s[parser.pos..].trim().is_empty() {
                return Some(list);
            }
            fallback.get_or_insert(list);
        }
    }
    fallback
}

struct PairListParser<'a> {
    s: &'a str,
    pos: usize,
}

impl PairListParser<'_> {
    fn peek(&self) -> Option<char> {
        self.s[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> Option<()> {
        self.ws();
        (self.bump()? == c).then_some(())
    }

    fn list(&mut self) -> Option<Vec<EntityMention>> {
        self.eat('[')?;
        let mut out = Vec::new();
        self.ws();
        if self.peek() == Some(']') {
            self.bump();
            return Some(out);
        }
        loop {
            out.push(self.pair()?);
            self.ws();
            match self.bump()? {
                ',' => {
                    self.ws();
                    if self.peek() == Some(']') {
                        self.bump();
                        return Some(out);
                    }
                }
                ']' => return Some(out),
                _ => return None,
            }
        }
    }

    fn pair(&mut self) -> Option<EntityMention> {
        self.ws();
        let close = match self.bump()? {
            '(' => ')',
            '[' => ']',
            _ => return None,
        };
        let ty = self.atom()?;
        self.eat(',')?;
        let value = self.atom()?;
        self.ws();
        if self.peek() == Some(',') {
            self.bump();
        }
        self.eat(close)?;
        Some(EntityMention::new(ty, value))
    }

    /// A quoted Python string or a bare number.
    fn atom(&mut self) -> Option<String> {
        self.ws();
        match self.peek()? {
            q @ ('\'' | '"') => {
                self.bump();
                let mut out = String::new();
                loop {
                    match self.bump()? {
                        c if c == q => return Some(out),
                        '\\' => match self.bump()? {
                            'n' => out.push('\n'),
                            't' => out.push('\t'),
                            'r' => out.push('\r'),
                            'x' => {
                                let hex: String = [self.bump()?, self.bump()?].iter().collect();
                                out.push(char::from(u8::from_str_radix(&hex, 16).ok()?));
                            }
                            c => out.push(c),
                        },
                        '\n' => return None,
                        c => out.push(c),
                    }
                }
            }
            c if c.is_ascii_digit() || c == '-' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.' || c == '-') {
                    self.bump();
                }
                Some(self.s[start..self.pos].to_string())
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_style() {
        let raw = "I will include these entities - [('choice', '79')]\nassistant: i have found 79 place for you . do you have any specific ideas in mind ?";
        let p = parse_response(raw, "assistant");
        assert_eq!(p.entities, Some(vec![EntityMention::new("choice", "79")]));
        assert_eq!(p.response, "i have found 79 place for you . do you have any specific ideas in mind ?");
        assert!(!p.fallback);
    }

    #[test]
    fn list_pair_style() {
        let raw = " [['name', 'house 1881'], ['rating', '8']]\nassistant: i would recommend house 1881 with rating 8 .";
        let p = parse_response(raw, "assistant");
        assert_eq!(
            p.entities,
            Some(vec![EntityMention::new("name", "house 1881"), EntityMention::new("rating", "8")])
        );
    }

    #[test]
    fn no_marker_falls_back() {
        let p = parse_response("Sure! Here are options.", "assistant");
        assert_eq!(p.entities, None);
        assert_eq!(p.response, "Sure! Here are options.");
        assert!(p.fallback);
        assert!(parse_response("", "system").fallback);
    }

    #[test]
    fn last_marker_and_quotes() {
        let raw = "[(\"name\", \"mary ' s\"), ('stars', 4)]\nsystem: first\nsystem: second";
        let p = parse_response(raw, "system");
        assert_eq!(p.response, "second");
        assert_eq!(
            p.entities,
            Some(vec![EntityMention::new("name", "mary ' s"), EntityMention::new("stars", "4")])
        );
        let empty = parse_response("[]\nsystem: ok", "system");
        assert_eq!(empty.entities, Some(vec![]));
        let junk = parse_response("[oops\nsystem: ok", "system");
        assert_eq!(junk.entities, None);
    }
}
