//! Deterministic text normalization: tokenize, lowercase, drop stop words,
//! Porter-stem, deduplicate.

pub mod porter;
pub mod stopwords;

use std::collections::BTreeSet;

/// The normalized form of a response: a set of unique lowercase word stems
/// plus the whitespace token count of the raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StemSet {
    stems: BTreeSet<String>,
    source_len_words: usize,
}

impl StemSet {
    pub fn stems(&self) -> &BTreeSet<String> {
        &self.stems
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.stems.contains(stem)
    }

    /// Whitespace token count of the text this set was built from.
    pub fn source_len_words(&self) -> usize {
        self.source_len_words
    }

    pub fn intersection_size(&self, other: &StemSet) -> usize {
        self.stems.intersection(&other.stems).count()
    }

    pub fn union_size(&self, other: &StemSet) -> usize {
        self.stems.union(&other.stems).count()
    }

    #[cfg(test)]
    pub(crate) fn from_stems<I: IntoIterator<Item = S>, S: Into<String>>(stems: I) -> Self {
        StemSet {
            stems: stems.into_iter().map(Into::into).collect(),
            source_len_words: 0,
        }
    }
}

/// Tokenize on non-alphanumeric boundaries (Unicode-aware), lowercase, drop
/// stop words, Porter-stem, deduplicate. Total over all inputs.
pub fn normalize(text: &str) -> StemSet {
    let mut stems = BTreeSet::new();
    for token in text.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        let lowered = token.to_lowercase();
        if stopwords::is_stopword(&lowered) {
            continue;
        }
        let stemmed = porter::stem(&lowered);
        if !stemmed.is_empty() {
            stems.insert(stemmed);
        }
    }
    StemSet {
        stems,
        source_len_words: word_count(text),
    }
}

/// Whitespace token count, as used for the Length table columns.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
