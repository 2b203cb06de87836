//! Lexical similarity and diversity metrics over stem sets.
//!
//! All aggregations are canonicalized (pair values sorted before summing) so
//! results are bitwise invariant under permutation of the input lists.

use crate::error::{Error, Result};
use crate::textnorm::{normalize, StemSet};
use serde::{Deserialize, Serialize};

/// Aggregate of a collection of pairwise similarity values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n_pairs: usize,
}

impl SimilaritySummary {
    fn from_values(mut values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        SimilaritySummary {
            mean,
            min: values[0],
            max: values[n - 1],
            n_pairs: n,
        }
    }
}

/// Jaccard similarity of two stem sets: |a ∩ b| / |a ∪ b|.
///
/// Conventions for degenerate inputs: two empty sets are maximally similar
/// (1.0); exactly one empty set gives 0.0.
pub fn jaccard(a: &StemSet, b: &StemSet) -> f64 {
    let union = a.union_size(b);
    if union == 0 {
        return 1.0;
    }
    a.intersection_size(b) as f64 / union as f64
}

/// Mean/min/max Jaccard similarity over all unordered pairs of the
/// normalized responses. Needs at least two responses.
pub fn self_sim<S: AsRef<str>>(responses: &[S]) -> Result<SimilaritySummary> {
    if responses.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "self_sim needs at least 2 responses, got {}",
            responses.len()
        )));
    }
    let sets: Vec<StemSet> = responses.iter().map(|r| normalize(r.as_ref())).collect();
    let mut values = Vec::with_capacity(sets.len() * (sets.len() - 1) / 2);
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            values.push(jaccard(&sets[i], &sets[j]));
        }
    }
    Ok(SimilaritySummary::from_values(values))
}

/// Jaccard similarity of each student sample against a single teacher
/// response. The `max` field is the per-query Max-Sim.
pub fn cross_sim<S: AsRef<str>>(
    student_samples: &[S],
    teacher_response: &str,
) -> Result<SimilaritySummary> {
    if student_samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cross_sim needs at least 1 student sample".into(),
        ));
    }
    let teacher = normalize(teacher_response);
    let values: Vec<f64> = student_samples
        .iter()
        .map(|s| jaccard(&normalize(s.as_ref()), &teacher))
        .collect();
    Ok(SimilaritySummary::from_values(values))
}

/// Lexical coverage: Jaccard similarity of two responses from different
/// models on the same input.
pub fn cover_lex(base_response: &str, reference_response: &str) -> f64 {
    jaccard(&normalize(base_response), &normalize(reference_response))
}

/// Stance taken by a response to a binary question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Yes,
    No,
    Both,
    Other,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 4] = [
        StanceLabel::Yes,
        StanceLabel::No,
        StanceLabel::Both,
        StanceLabel::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StanceLabel::Yes => "yes",
            StanceLabel::No => "no",
            StanceLabel::Both => "both",
            StanceLabel::Other => "other",
        }
    }

    /// Case-insensitive parse; the judge sometimes answers "both-sides".
    pub fn parse(raw: &str) -> Option<StanceLabel> {
        match raw.trim().to_lowercase().as_str() {
            "yes" => Some(StanceLabel::Yes),
            "no" => Some(StanceLabel::No),
            "both" | "both-sides" => Some(StanceLabel::Both),
            "other" => Some(StanceLabel::Other),
            _ => None,
        }
    }
}

/// Shannon entropy (base 2) of the empirical stance distribution.
///
/// Counts are sorted before summing so every multiset with the same shape
/// produces a bitwise-identical value.
pub fn stance_entropy(labels: &[StanceLabel]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "stance_entropy needs at least 1 label".into(),
        ));
    }
    let mut counts = [0usize; 4];
    for label in labels {
        let idx = StanceLabel::ALL.iter().position(|l| l == label).unwrap();
        counts[idx] += 1;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let n = labels.len() as f64;
    let mut entropy = 0.0;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / n;
        entropy -= p * p.log2();
    }
    // -0.0 from the degenerate one-category case
    Ok(entropy + 0.0)
}

/// The six entropy values reachable by a multiset of 5 labels over 4
/// categories, one per partition shape of 5, ascending.
pub fn entropy_levels_n5() -> [f64; 6] {
    let shapes: [&[usize]; 6] = [
        &[5],
        &[4, 1],
        &[3, 2],
        &[3, 1, 1],
        &[2, 2, 1],
        &[2, 1, 1, 1],
    ];
    let mut levels = [0.0; 6];
    for (slot, shape) in levels.iter_mut().zip(shapes) {
        let mut labels = Vec::new();
        for (category, &count) in shape.iter().enumerate() {
            labels.extend(std::iter::repeat(StanceLabel::ALL[category]).take(count));
        }
        *slot = stance_entropy(&labels).expect("non-empty");
    }
    levels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::StemSet;

    fn set(items: &[&str]) -> StemSet {
        StemSet::from_stems(items.iter().copied())
    }

    #[test]
    fn jaccard_by_direct_count() {
        let a = set(&["a", "b", "c"]);
        let b = set(&["b", "c", "d"]);
        assert_eq!(jaccard(&a, &b), 0.5);
    }

    #[test]
    fn jaccard_identity_and_empties() {
        let s = set(&["x", "y"]);
        assert_eq!(jaccard(&s, &s), 1.0);
        let empty = set(&[]);
        assert_eq!(jaccard(&empty, &empty), 1.0);
        assert_eq!(jaccard(&s, &empty), 0.0);
        assert_eq!(jaccard(&empty, &s), 0.0);
    }

    #[test]
    fn self_sim_identical_and_disjoint() {
        let same = ["alpha beta"; 5];
        let s = self_sim(&same).unwrap();
        assert_eq!((s.mean, s.min, s.max), (1.0, 1.0, 1.0));
        assert_eq!(s.n_pairs, 10);

        let disjoint = ["alpha", "beta", "gamma", "delta", "epsilon"];
        let s = self_sim(&disjoint).unwrap();
        assert_eq!((s.mean, s.min, s.max), (0.0, 0.0, 0.0));
    }

    #[test]
    fn self_sim_rejects_short_input() {
        assert!(self_sim(&["only one"]).is_err());
    }

    #[test]
    fn cross_sim_known_overlaps() {
        // Teacher has 5 stems; samples overlap in 1 and 2 of them.
        let teacher = "alpha beta gamma delta epsilon";
        let s = cross_sim(&["alpha", "alpha beta"], teacher).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-12);
        assert_eq!(s.min, 0.2);
        assert_eq!(s.max, 0.4);
    }

    #[test]
    fn cross_sim_max_one_when_teacher_present() {
        let teacher = "alpha beta gamma";
        let s = cross_sim(&["delta", teacher, "epsilon"], teacher).unwrap();
        assert_eq!(s.max, 1.0);
    }

    #[test]
    fn cover_lex_identical_and_disjoint() {
        assert_eq!(cover_lex("same words here", "same words here"), 1.0);
        assert_eq!(cover_lex("yes", "alpha beta gamma"), 0.0);
    }

    #[test]
    fn entropy_degenerate_is_zero() {
        let labels = [StanceLabel::Both; 5];
        assert_eq!(stance_entropy(&labels).unwrap(), 0.0);
    }

    #[test]
    fn entropy_four_one_split() {
        // Frozen from -sum(p log2 p) with p = (0.8, 0.2).
        let labels = [
            StanceLabel::Yes,
            StanceLabel::Yes,
            StanceLabel::Yes,
            StanceLabel::Yes,
            StanceLabel::No,
        ];
        let h = stance_entropy(&labels).unwrap();
        assert!((h - 0.7219280948873623).abs() < 1e-15);
    }

    #[test]
    fn entropy_rejects_empty() {
        assert!(stance_entropy(&[]).is_err());
    }

    #[test]
    fn stance_parse_variants() {
        assert_eq!(StanceLabel::parse("Both-Sides"), Some(StanceLabel::Both));
        assert_eq!(StanceLabel::parse("both"), Some(StanceLabel::Both));
        assert_eq!(StanceLabel::parse(" YES "), Some(StanceLabel::Yes));
        assert_eq!(StanceLabel::parse("maybe"), None);
    }

    #[test]
    fn entropy_levels_are_ascending() {
        let levels = entropy_levels_n5();
        for pair in levels.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert_eq!(levels[0], 0.0);
        assert!(levels[5] <= 2.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        const TOKENS: [&str; 10] = [
            "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
        ];

        fn stem_set() -> impl Strategy<Value = StemSet> {
            proptest::collection::vec(0..TOKENS.len(), 0..=6)
                .prop_map(|picks| StemSet::from_stems(picks.into_iter().map(|i| TOKENS[i])))
        }

        proptest! {
            #[test]
            fn jaccard_symmetric_and_bounded(a in stem_set(), b in stem_set()) {
                let ab = jaccard(&a, &b);
                let ba = jaccard(&b, &a);
                prop_assert_eq!(ab, ba);
                prop_assert!((0.0..=1.0).contains(&ab));
            }

            #[test]
            fn jaccard_identity(a in stem_set()) {
                prop_assert_eq!(jaccard(&a, &a), 1.0);
            }

            #[test]
            fn entropy_bounded_and_zero_iff_uniform_label(
                labels in proptest::collection::vec(0..4usize, 1..=10)
            ) {
                let labels: Vec<StanceLabel> =
                    labels.into_iter().map(|i| StanceLabel::ALL[i]).collect();
                let h = stance_entropy(&labels).unwrap();
                prop_assert!((0.0..=2.0).contains(&h));
                let all_same = labels.iter().all(|l| l == &labels[0]);
                prop_assert_eq!(h == 0.0, all_same);
            }
        }
    }
}
