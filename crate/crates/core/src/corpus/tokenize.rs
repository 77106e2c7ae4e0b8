use std::collections::HashSet;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../../resources/stopwords_en.txt");
const DEFAULT_EMOTICONS: &str = include_str!("../../resources/emoticons.txt");

/// Unigram tokenizer for social-media text.
///
/// Text is NFC-normalized and split on whitespace. Within each chunk,
/// whitelisted emoticons are emitted verbatim, runs of alphanumerics (with
/// interior apostrophes, so `don't` stays whole) are emitted lowercased, and
/// any other punctuation is discarded. Stopwords are removed last.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
    /// Punctuation-led emoticons, longest first, matched anywhere in a chunk.
    symbol_emoticons: Vec<Vec<char>>,
    /// Emoticons starting with a letter or digit, matched only as whole chunks.
    word_emoticons: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new(
            parse_list(DEFAULT_STOPWORDS),
            parse_list(DEFAULT_EMOTICONS),
        )
    }
}

fn parse_list(s: &str) -> Vec<String> {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_list(&text))
}

pub fn default_stopwords() -> Vec<String> {
    parse_list(DEFAULT_STOPWORDS)
}

pub fn default_emoticons() -> Vec<String> {
    parse_list(DEFAULT_EMOTICONS)
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

impl Tokenizer {
    pub fn new(stopwords: Vec<String>, emoticons: Vec<String>) -> Self {
        let stopwords = stopwords.into_iter().map(|s| s.to_lowercase()).collect();
        let mut symbol_emoticons = Vec::new();
        let mut word_emoticons = HashSet::new();
        for e in emoticons {
            let e: String = e.nfc().collect();
            match e.chars().next() {
                Some(c) if c.is_alphanumeric() => {
                    word_emoticons.insert(e.to_lowercase());
                }
                Some(_) => symbol_emoticons.push(e.chars().collect::<Vec<_>>()),
                None => {}
            }
        }
        symbol_emoticons.sort_by(|a: &Vec<char>, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        symbol_emoticons.dedup();
        Self {
            stopwords,
            symbol_emoticons,
            word_emoticons,
        }
    }

    /// Load stopword and emoticon lists from files (one entry per line);
    /// `None` selects the bundled default.
    pub fn from_files(stopwords: Option<&Path>, emoticons: Option<&Path>) -> Result<Self> {
        let sw = match stopwords {
            Some(p) => read_list(p)?,
            None => default_stopwords(),
        };
        let em = match emoticons {
            Some(p) => read_list(p)?,
            None => default_emoticons(),
        };
        Ok(Self::new(sw, em))
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let normalized: String = text.nfc().collect();
        let mut out = Vec::new();
        for chunk in normalized.split_whitespace() {
            self.tokenize_chunk(chunk, &mut out);
        }
        out.retain(|t| !self.stopwords.contains(t));
        out
    }

    fn tokenize_chunk(&self, chunk: &str, out: &mut Vec<String>) {
        let lowered = chunk.to_lowercase();
        if self.word_emoticons.contains(&lowered) {
            out.push(lowered);
            return;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_alphanumeric() {
                if let Some(e) = self
                    .symbol_emoticons
                    .iter()
                    .find(|e| chars[i..].starts_with(e))
                {
                    out.push(e.iter().collect());
                    i += e.len();
                    continue;
                }
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() {
                let c = chars[i];
                let inner_apostrophe =
                    is_apostrophe(c) && i + 1 < chars.len() && chars[i + 1].is_alphanumeric();
                if c.is_alphanumeric() || inner_apostrophe {
                    i += 1;
                } else {
                    break;
                }
            }
            let word: String = chars[start..i]
                .iter()
                .map(|&c| if is_apostrophe(c) { '\'' } else { c })
                .collect::<String>()
                .to_lowercase();
            out.push(word);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(stop: &[&str]) -> Tokenizer {
        Tokenizer::new(
            stop.iter().map(|s| s.to_string()).collect(),
            default_emoticons(),
        )
    }

    #[test]
    fn keeps_contractions_and_drops_stopwords() {
        assert_eq!(tok(&["i"]).tokenize("I don't know"), vec!["don't", "know"]);
    }

    #[test]
    fn preserves_emoticons() {
        assert_eq!(tok(&[]).tokenize("good :) day"), vec!["good", ":)", "day"]);
        assert_eq!(tok(&[]).tokenize("love you<3 :D"), vec!["love", "you", "<3", ":D"]);
        assert_eq!(tok(&[]).tokenize("XD lol"), vec!["xd", "lol"]);
        assert_eq!(tok(&[]).tokenize("sad:-)"), vec!["sad", ":-)"]);
    }

    #[test]
    fn empty_text() {
        assert!(tok(&[]).tokenize("").is_empty());
        assert!(tok(&[]).tokenize("  ... !!").is_empty());
    }

    #[test]
    fn punctuation_is_separated() {
        assert_eq!(
            tok(&[]).tokenize("Hello, world! 'quoted' it's"),
            vec!["hello", "world", "quoted", "it's"]
        );
    }

    #[test]
    fn curly_apostrophe_normalized() {
        assert_eq!(tok(&[]).tokenize("don\u{2019}t"), vec!["don't"]);
    }

    #[test]
    fn nfc_normalization() {
        // "e" + combining acute vs precomposed.
        assert_eq!(tok(&[]).tokenize("cafe\u{301}"), tok(&[]).tokenize("caf\u{e9}"));
    }

    #[test]
    fn default_lists_load() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("The cat is on the mat"), vec!["cat", "mat"]);
        assert!(default_stopwords().len() >= 100);
    }

    proptest! {
        #[test]
        fn tokenizing_joined_tokens_is_identity(text in "[a-zA-Z' ,.!:()<3]{0,60}") {
            let t = tok(&["the", "a"]);
            let once = t.tokenize(&text);
            let again = t.tokenize(&once.join(" "));
            prop_assert_eq!(once, again);
        }
    }
}
