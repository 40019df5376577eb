use std::collections::HashSet;
use std::path::Path;

use crate::dump::{ExampleRecord, Modality};

const DEFAULT_STOPWORDS: &str = "\
a about above after again against all am an and any are as at be because been before being \
below between both but by can could did do does doing down during each few for from further \
had has have having he her here hers herself him himself his how i if in into is it its itself \
just me more most my myself no nor not now of off on once only or other our ours ourselves out \
over own same she should so some such than that the their theirs them themselves then there \
these they this those through to too under until up very was we were what when where which \
while who whom why will with would you your yours yourself yourselves";

/// Lowercased words whose LANGUAGE tokens are dropped before embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::from_words(DEFAULT_STOPWORDS.split_whitespace())
    }
}

impl StopwordList {
    pub fn empty() -> Self {
        Self {
            words: HashSet::new(),
        }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_words(
            text.lines().filter(|l| !l.trim_start().starts_with('#')),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in sorted order; used to fingerprint caches.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.words.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Indices of tokens kept for embedding: drops stopwords, special tokens and
/// background patches. Order is preserved.
pub fn filter_tokens(example: &ExampleRecord, stopwords: &StopwordList) -> Vec<usize> {
    example
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| match t.modality {
            Modality::Language => {
                !t.is_stopword
                    && !t.is_special
                    && !t.text.as_deref().is_some_and(|w| stopwords.contains(w))
            }
            Modality::Vision => !t.is_background,
        })
        .map(|(i, _)| i)
        .collect()
}
