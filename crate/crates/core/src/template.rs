//! Single-brace placeholder syntax shared by prompt templates and profile
//! command/path templates.
//!
//! `{name}` is a placeholder, `{{` and `}}` are literal braces. A `{` that
//! does not open a well-formed placeholder is an error.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Segment {
    Literal(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlaceholderError {
    #[error("unescaped `{{` at byte {0} (write `{{{{` for a literal brace)")]
    UnescapedBrace(usize),
    #[error("unterminated placeholder starting at byte {0}")]
    Unterminated(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Parsed {
    pub segments: Vec<Segment>,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn parse(text: &str) -> Result<Parsed, PlaceholderError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            '{' => {
                if matches!(chars.peek(), Some((_, '{'))) {
                    chars.next();
                    literal.push('{');
                    continue;
                }
                let mut name = String::new();
                let mut closed = false;
                while let Some(&(_, n)) = chars.peek() {
                    if n == '}' {
                        chars.next();
                        closed = true;
                        break;
                    }
                    let ok = if name.is_empty() {
                        is_ident_start(n)
                    } else {
                        is_ident_char(n)
                    };
                    if !ok {
                        return Err(PlaceholderError::UnescapedBrace(pos));
                    }
                    name.push(n);
                    chars.next();
                }
                if !closed {
                    return Err(PlaceholderError::Unterminated(pos));
                }
                if name.is_empty() {
                    return Err(PlaceholderError::UnescapedBrace(pos));
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Var(name));
            }
            '}' => {
                if matches!(chars.peek(), Some((_, '}'))) {
                    chars.next();
                }
                literal.push('}');
            }
            other => literal.push(other),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(Parsed { segments })
}

impl Parsed {
    pub fn vars(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Var(v) => Some(v.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Literal substitution; values are never re-scanned for placeholders.
    pub fn substitute<'a, F>(&self, mut lookup: F) -> Result<String, String>
    where
        F: FnMut(&str) -> Option<&'a str>,
    {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(l) => out.push_str(l),
                Segment::Var(v) => match lookup(v) {
                    Some(value) => out.push_str(value),
                    None => return Err(v.clone()),
                },
            }
        }
        Ok(out)
    }

    /// `Some(name)` when the whole text is exactly one placeholder.
    pub fn sole_var(&self) -> Option<&str> {
        match self.segments.as_slice() {
            [Segment::Var(v)] => Some(v),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_vars_and_escapes() {
        let p = parse("a {x} {{lit}} b}} {y_2}").unwrap();
        assert_eq!(p.vars().into_iter().collect::<Vec<_>>(), vec!["x", "y_2"]);
        let out = p
            .substitute(|v| match v {
                "x" => Some("1"),
                "y_2" => Some("{z}"),
                _ => None,
            })
            .unwrap();
        assert_eq!(out, "a 1 {lit} b} {z}");
    }

    #[test]
    fn rejects_bad_braces() {
        assert_eq!(parse("x {a b}"), Err(PlaceholderError::UnescapedBrace(2)));
        assert_eq!(parse("x {ab"), Err(PlaceholderError::Unterminated(2)));
        assert_eq!(parse("{}"), Err(PlaceholderError::UnescapedBrace(0)));
        assert!(parse("{\"k\": 1}").is_err());
    }

    #[test]
    fn missing_var_is_named() {
        let p = parse("{a}{b}").unwrap();
        assert_eq!(p.substitute(|v| (v == "a").then_some("x")), Err("b".into()));
    }

    #[test]
    fn sole_var_detection() {
        assert_eq!(parse("{tests}").unwrap().sole_var(), Some("tests"));
        assert_eq!(parse("--x={tests}").unwrap().sole_var(), None);
    }
}
