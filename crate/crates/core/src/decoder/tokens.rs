use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered token inventory with a reserved blank.
///
/// File format: one token per line. Header lines `#blank <tok>` (required)
/// and `#boundary <marker>` (optional) declare the blank and the word
/// boundary marker. A boundary marker either stands alone as a separator
/// token (`|`) or prefixes word-initial tokens (`_the`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    blank: usize,
    boundary: Option<String>,
}

impl TokenSet {
    pub fn new(tokens: Vec<String>, blank: &str, boundary: Option<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::format("token set", format!("bad token {t:?} at {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::format("token set", format!("duplicate token {t:?}")));
            }
        }
        let blank = *index
            .get(blank)
            .ok_or_else(|| Error::format("token set", format!("blank {blank:?} is not a token")))?;
        Ok(Self {
            tokens,
            index,
            blank,
            boundary: boundary.filter(|b| !b.is_empty()),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut blank = None;
        let mut boundary = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#blank") {
                blank = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("#boundary") {
                boundary = Some(rest.trim().to_string());
            } else if line.starts_with('#') {
                return Err(Error::format("token set", format!("line {}: unknown header {line:?}", n + 1)));
            } else {
                tokens.push(line.to_string());
            }
        }
        let blank = blank.ok_or_else(|| Error::format("token set", "missing #blank header"))?;
        Self::new(tokens, &blank, boundary)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#blank {}\n", self.tokens[self.blank]);
        if let Some(b) = &self.boundary {
            out.push_str(&format!("#boundary {b}\n"));
        }
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn boundary(&self) -> Option<&str> {
        self.boundary.as_deref()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_headers() {
        let ts = TokenSet::parse("#blank <b>\n#boundary |\n<b>\na\n|\nb\n").unwrap();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts.blank(), 0);
        assert_eq!(ts.boundary(), Some("|"));
        assert_eq!(ts.index_of("b"), Some(3));
        assert_eq!(TokenSet::parse(&ts.to_text()).unwrap(), ts);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(TokenSet::parse("a\nb\n").is_err());
        assert!(TokenSet::parse("#blank x\na\n").is_err());
        assert!(TokenSet::parse("#blank a\na\na\n").is_err());
        assert!(TokenSet::parse("#blank a\n#weird\na\n").is_err());
    }
}
