//! Bundled English stop-word list (classic 127-entry list).
//!
//! Shipped as `data/stopwords_en.txt`, one word per line, and embedded at
//! compile time so normalization is bit-reproducible across installs.
//! SHA-256 of the file is pinned in the tests below.

use std::collections::HashSet;
use std::sync::OnceLock;

pub const STOPWORDS_RAW: &str = include_str!("../../data/stopwords_en.txt");

static STOPWORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS
        .get_or_init(|| STOPWORDS_RAW.lines().filter(|l| !l.is_empty()).collect())
        .contains(token)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    #[test]
    fn list_has_127_entries() {
        let n = STOPWORDS_RAW.lines().filter(|l| !l.is_empty()).count();
        assert_eq!(n, 127);
    }

    #[test]
    fn checksum_pinned() {
        let digest = hex::encode(Sha256::digest(STOPWORDS_RAW.as_bytes()));
        assert_eq!(
            digest,
            "b3f772a000465cb76e23adb03b47073c591c156fad8f7af09c8b8e80d6bd8eac"
        );
    }

    #[test]
    fn membership() {
        assert!(is_stopword("the"));
        assert!(is_stopword("don"));
        assert!(!is_stopword("yes"));
        assert!(!is_stopword("pluto"));
    }
}
