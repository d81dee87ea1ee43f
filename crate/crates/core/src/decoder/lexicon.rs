use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::tokens::TokenSet;
use crate::error::{Error, Result};

pub(crate) const ROOT: u32 = 0;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct TrieNode {
    /// Sorted by token.
    pub children: Vec<(u32, u32)>,
    /// Words whose spelling ends here.
    pub words: Vec<u32>,
}

/// Words and their token spellings, compiled into a trie over token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
    word_index: HashMap<String, u32>,
    spellings: Vec<(u32, Vec<usize>)>,
    nodes: Vec<TrieNode>,
}

impl Lexicon {
    /// Builds from `(word, spelling)` pairs; a word may have several
    /// spellings and several words may share one.
    pub fn new<I, W>(entries: I, tokens: &TokenSet) -> Result<Self>
    where
        I: IntoIterator<Item = (W, Vec<usize>)>,
        W: Into<String>,
    {
        let mut lex = Self {
            words: Vec::new(),
            word_index: HashMap::new(),
            spellings: Vec::new(),
            nodes: vec![TrieNode::default()],
        };
        for (word, spelling) in entries {
            let word = word.into();
            if spelling.is_empty() {
                return Err(Error::format("lexicon", format!("{word:?} has an empty spelling")));
            }
            if let Some(&t) = spelling.iter().find(|&&t| t >= tokens.len() || t == tokens.blank()) {
                return Err(Error::format("lexicon", format!("{word:?} uses invalid token {t}")));
            }
            let id = match lex.word_index.get(&word) {
                Some(&id) => id,
                None => {
                    let id = lex.words.len() as u32;
                    lex.word_index.insert(word.clone(), id);
                    lex.words.push(word);
                    id
                }
            };
            if lex.spellings.iter().any(|(w, s)| *w == id && *s == spelling) {
                continue;
            }
            let mut node = ROOT;
            for &t in &spelling {
                let t = t as u32;
                let children = &lex.nodes[node as usize].children;
                node = match children.binary_search_by_key(&t, |&(tok, _)| tok) {
                    Ok(i) => children[i].1,
                    Err(i) => {
                        let child = lex.nodes.len() as u32;
                        lex.nodes.push(TrieNode::default());
                        lex.nodes[node as usize].children.insert(i, (t, child));
                        child
                    }
                };
            }
            lex.nodes[node as usize].words.push(id);
            lex.spellings.push((id, spelling));
        }
        Ok(lex)
    }

    /// One entry per line: `word<TAB>tok1 tok2 ...`.
    pub fn parse(text: &str, tokens: &TokenSet) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, spelling) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("lexicon", format!("line {}: missing tab", n + 1)))?;
            let ids = spelling
                .split_whitespace()
                .map(|t| {
                    tokens.index_of(t).ok_or_else(|| {
                        Error::format("lexicon", format!("line {}: unknown token {t:?}", n + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push((word.trim().to_string(), ids));
        }
        Self::new(entries, tokens)
    }

    pub fn load(path: impl AsRef<Path>, tokens: &TokenSet) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, tokens)
    }

    pub fn to_text(&self, tokens: &TokenSet) -> String {
        let mut out = String::new();
        for (w, s) in &self.spellings {
            let spelled: Vec<&str> = s.iter().map(|&t| tokens.token(t)).collect();
            out.push_str(&format!("{}\t{}\n", self.words[*w as usize], spelled.join(" ")));
        }
        out
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.word_index.get(word).copied()
    }

    pub fn spellings(&self) -> &[(u32, Vec<usize>)] {
        &self.spellings
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn node(&self, id: u32) -> &TrieNode {
        &self.nodes[id as usize]
    }

    pub(crate) fn child(&self, node: u32, token: usize) -> Option<u32> {
        let children = &self.nodes[node as usize].children;
        children
            .binary_search_by_key(&(token as u32), |&(t, _)| t)
            .ok()
            .map(|i| children[i].1)
    }

    pub fn heap_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.children.capacity() * 8 + n.words.capacity() * 4)
            .sum::<usize>()
            + self.nodes.capacity() * std::mem::size_of::<TrieNode>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens() -> TokenSet {
        TokenSet::parse("#blank -\n-\na\nb\nc\n").unwrap()
    }

    /// Every root-to-word path, rebuilt by walking the trie.
    fn walk(lex: &Lexicon, node: u32, path: &mut Vec<usize>, out: &mut Vec<(u32, Vec<usize>)>) {
        for &w in &lex.node(node).words {
            out.push((w, path.clone()));
        }
        for &(t, child) in &lex.node(node).children {
            path.push(t as usize);
            walk(lex, child, path, out);
            path.pop();
        }
    }

    #[test]
    fn trie_paths_reconstruct_spellings() {
        let ts = tokens();
        let text = "ab\ta b\nabc\ta b c\nba\tb a\nab\ta a\nhomophone\ta b\n";
        let lex = Lexicon::parse(text, &ts).unwrap();
        assert_eq!(lex.word_count(), 4);
        let mut got = Vec::new();
        walk(&lex, ROOT, &mut Vec::new(), &mut got);
        let mut want = lex.spellings().to_vec();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        let ab = lex.child(lex.child(ROOT, 1).unwrap(), 2).unwrap();
        assert_eq!(lex.node(ab).words.len(), 2);
        assert_eq!(Lexicon::parse(&lex.to_text(&ts), &ts).unwrap(), lex);
    }

    #[test]
    fn rejects_bad_entries() {
        let ts = tokens();
        assert!(Lexicon::parse("x\ta z\n", &ts).is_err());
        assert!(Lexicon::parse("x a\n", &ts).is_err());
        assert!(Lexicon::parse("x\t-\n", &ts).is_err());
        assert!(Lexicon::parse("x\t\n", &ts).is_err());
    }
}
