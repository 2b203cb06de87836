//! Acceptance suite: one test per criterion, each ending in a PASS line.
//!
//! Full-scale table values need 7B models plus a frontier judge and are
//! recorded in `report::FULL_SCALE_TARGETS` as documentation targets, not
//! asserted here.

use icalign::corpus::{dataset_stats, load_dataset, Dataset, DatasetKind, Query};
use icalign::judge::{
    parse_missingness, parse_quality, parse_stance, parse_structural, parse_summary,
};
use icalign::metrics::{self, StanceLabel};
use icalign::promptkit::{
    self, render_fewshot, render_summary_prompt, render_zero_shot, Demo, DemoPools,
    PromptStrategy, StrategyKind,
};
use icalign::retrieval::{knn, EmbeddingVector, Index};
use icalign::textnorm::normalize;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

/// Ten tokens that are stop-word free and stem to themselves.
const ALPHABET: [&str; 10] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
];

fn random_subset(rng: &mut ChaCha8Rng, max_size: usize) -> Vec<&'static str> {
    let size = rng.gen_range(0..=max_size);
    let mut picks = ALPHABET.to_vec();
    picks.shuffle(rng);
    picks.truncate(size);
    picks
}

/// Independent membership-count oracle over token subsets, using the same
/// degenerate-input conventions the implementation documents.
fn naive_jaccard(a: &[&str], b: &[&str]) -> f64 {
    let mut intersection = 0usize;
    let mut union = 0usize;
    for token in ALPHABET {
        let in_a = a.contains(&token);
        let in_b = b.contains(&token);
        if in_a && in_b {
            intersection += 1;
        }
        if in_a || in_b {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

#[test]
fn lexical_metric_oracle_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    for case in 0..1000 {
        let a = random_subset(&mut rng, 6);
        let b = random_subset(&mut rng, 6);
        let got = metrics::jaccard(&normalize(&a.join(" ")), &normalize(&b.join(" ")));
        let expected = naive_jaccard(&a, &b);
        assert_eq!(got, expected, "case {case}: {a:?} vs {b:?}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("PASS lexical metric oracle suite: 1000 pairs exact in {elapsed:?}");
}

fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let length = rng.gen_range(1..=8);
    (0..length)
        .map(|_| *ALPHABET.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn self_sim_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..200 {
        let mut samples: Vec<String> = (0..5).map(|_| random_sentence(&mut rng)).collect();
        let baseline = metrics::self_sim(&samples).unwrap();
        for _ in 0..4 {
            samples.shuffle(&mut rng);
            let permuted = metrics::self_sim(&samples).unwrap();
            assert_eq!(baseline, permuted, "permutation changed self_sim");
        }
    }

    let identical = ["alpha beta gamma"; 5];
    let summary = metrics::self_sim(&identical).unwrap();
    assert_eq!((summary.mean, summary.min, summary.max), (1.0, 1.0, 1.0));

    let disjoint = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let summary = metrics::self_sim(&disjoint).unwrap();
    assert_eq!((summary.mean, summary.min, summary.max), (0.0, 0.0, 0.0));

    println!("PASS self-sim properties: exact permutation invariance, identity 1.0, disjoint 0.0");
}

#[test]
fn max_sim_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..200 {
        let samples: Vec<String> = (0..5).map(|_| random_sentence(&mut rng)).collect();
        let teacher = random_sentence(&mut rng);
        let summary = metrics::cross_sim(&samples, &teacher).unwrap();
        assert!(
            summary.max >= summary.mean,
            "max {} < mean {}",
            summary.max,
            summary.mean
        );
    }
    for _ in 0..50 {
        let teacher = random_sentence(&mut rng);
        let mut samples: Vec<String> = (0..4).map(|_| random_sentence(&mut rng)).collect();
        samples.insert(rng.gen_range(0..=4), teacher.clone());
        let summary = metrics::cross_sim(&samples, &teacher).unwrap();
        assert_eq!(summary.max, 1.0, "planted teacher must force max = 1.0");
    }
    println!("PASS max-sim dominance: max >= mean on 200 random inputs, planted teacher forces 1.0");
}

#[test]
fn stance_entropy_enumeration() {
    // All multisets of 5 labels over 4 categories.
    let mut seen: Vec<f64> = Vec::new();
    let mut cases = 0usize;
    for yes in 0..=5usize {
        for no in 0..=(5 - yes) {
            for both in 0..=(5 - yes - no) {
                let other = 5 - yes - no - both;
                let mut labels = Vec::new();
                labels.extend(std::iter::repeat(StanceLabel::Yes).take(yes));
                labels.extend(std::iter::repeat(StanceLabel::No).take(no));
                labels.extend(std::iter::repeat(StanceLabel::Both).take(both));
                labels.extend(std::iter::repeat(StanceLabel::Other).take(other));
                let entropy = metrics::stance_entropy(&labels).unwrap();

                // Independent oracle straight from the definition.
                let expected: f64 = [yes, no, both, other]
                    .into_iter()
                    .filter(|&c| c > 0)
                    .map(|c| {
                        let p = c as f64 / 5.0;
                        -p * (p.ln() / std::f64::consts::LN_2)
                    })
                    .sum();
                assert!(
                    (entropy - expected).abs() < 1e-12,
                    "({yes},{no},{both},{other}): {entropy} vs {expected}"
                );

                if !seen.iter().any(|s| (s - entropy).abs() < 1e-12) {
                    seen.push(entropy);
                }
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 56, "expected all 56 multisets");
    assert_eq!(seen.len(), 6, "expected exactly 6 distinct entropy values");
    println!("PASS stance entropy enumeration: 56 multisets, 6 distinct values, oracle within 1e-12");
}

#[test]
fn knn_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..200 {
        let vectors: Vec<EmbeddingVector> = (0..20)
            .map(|_| {
                let raw: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                EmbeddingVector::from_raw(raw).unwrap()
            })
            .collect();
        let mut index = Index::new("task");
        for (i, vector) in vectors.iter().enumerate() {
            index.insert(format!("v{i}"), vector.clone()).unwrap();
        }

        let probe_raw: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probe = EmbeddingVector::from_raw(probe_raw).unwrap();
        let exclude = format!("v{}", rng.gen_range(0..20));

        // Brute-force full-sort oracle: cosine descending, insertion-order
        // tie break, exclusion applied first.
        let mut oracle: Vec<(usize, f64)> = vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| format!("v{i}") != exclude)
            .map(|(i, v)| (i, probe.dot(v)))
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected: Vec<String> = oracle[..3].iter().map(|(i, _)| format!("v{i}")).collect();

        let got = knn(&index, &probe, 3, Some(&exclude)).unwrap();
        assert_eq!(got, expected, "trial {trial}");
        assert!(!got.contains(&exclude), "excluded id leaked in trial {trial}");
    }
    println!("PASS knn exactness: 200 random 20-vector indexes match the brute-force oracle");
}

fn mock_corpus(n: usize) -> (Dataset, BTreeMap<String, String>) {
    let queries: Vec<Query> = (0..n)
        .map(|i| Query {
            id: format!("q{i}"),
            dataset: "mock".into(),
            text: format!("Is mock topic number {i} genuinely controversial?"),
            meta: BTreeMap::new(),
        })
        .collect();
    let answers: BTreeMap<String, String> = queries
        .iter()
        .map(|q| (q.id.clone(), format!("A considered answer about topic {}.", q.id)))
        .collect();
    (
        Dataset {
            name: "mock".into(),
            queries,
        },
        answers,
    )
}

fn rigged_index(ids: &[String], seed: u64) -> Index {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = Index::new("task");
    for id in ids {
        let raw: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        index
            .insert(id.clone(), EmbeddingVector::from_raw(raw).unwrap())
            .unwrap();
    }
    index
}

#[test]
fn prompt_golden_files_and_demo_self_exclusion() {
    let pluto = Query {
        id: "fixture-pluto".into(),
        dataset: "conflictingqa".into(),
        text: "Is Pluto a planet?".into(),
        meta: BTreeMap::new(),
    };

    let golden_zero = include_str!("goldens/zero_shot_pluto.golden.txt");
    assert_eq!(render_zero_shot(&pluto).text, golden_zero, "zero-shot golden");

    let golden_urial = include_str!("goldens/urial_human_pluto.golden.txt");
    let rendered = render_fewshot(
        &promptkit::urial_human_demos(),
        &pluto,
        StrategyKind::UrialHuman,
    )
    .unwrap();
    assert_eq!(rendered.text, golden_urial, "few-shot golden");

    let golden_summary = include_str!("goldens/urial_summary_pluto.golden.txt");
    let test_summary = include_str!("goldens/fixture_summary.txt");
    let rendered =
        render_summary_prompt(&promptkit::urial_summary_demos(), &pluto, test_summary).unwrap();
    assert_eq!(rendered.text, golden_summary, "summary golden");

    // Demo self-exclusion for all five teacher-demo strategies over a
    // 50-query mock corpus.
    let (dataset, answers) = mock_corpus(50);
    let ids: Vec<String> = dataset.queries.iter().map(|q| q.id.clone()).collect();
    let query_index = rigged_index(&ids, 7);
    let answer_index = rigged_index(&ids, 8);
    let summary_demos = promptkit::urial_summary_demos();
    let teacher_strategies = [
        StrategyKind::UrialTeacher,
        StrategyKind::RandomTeacher,
        StrategyKind::KnnTeacher,
        StrategyKind::OracleKnnTeacher,
        StrategyKind::UrialSummary,
    ];
    for kind in teacher_strategies {
        let strategy = PromptStrategy {
            seed: 99,
            teacher_model: Some("teacher".into()),
            ..PromptStrategy::new(kind)
        };
        // The urial_* strategies draw from the fixed example demos; the
        // fixture with summaries satisfies both.
        let urial_demos: Vec<Demo> = summary_demos.clone();
        let pools = DemoPools {
            queries: &dataset,
            query_index: Some(&query_index),
            answer_index: Some(&answer_index),
            teacher_answers: &answers,
            urial_demos: &urial_demos,
        };
        for query in &dataset.queries {
            let demos = promptkit::select_demos(
                &strategy,
                query,
                &pools,
                answers.get(&query.id).map(String::as_str),
            )
            .unwrap();
            assert_eq!(demos.len(), 3, "{kind} must select k demos");
            assert!(
                demos.iter().all(|d| d.id != query.id),
                "{kind} selected the query as its own demo for {}",
                query.id
            );
        }
    }
    println!(
        "PASS prompt golden files: 3 byte-exact goldens; self-exclusion held for 5 strategies x 50 queries"
    );
}

#[test]
fn cover_sem_inversion() {
    for raw_score in 1..=5u8 {
        let raw = format!("{{\"reason\": \"r\", \"score\": \"{raw_score}\"}}");
        let verdict = parse_missingness(&raw).unwrap();
        assert_eq!(verdict.cover_sem, 6 - raw_score);
    }
    println!("PASS cover-sem inversion: cover_sem = 6 - raw for raw 1..5");
}

fn valid_quality_json(scores: [u8; 5]) -> String {
    let aspects = ["helpfulness", "clarity", "factuality", "depth", "engagement"];
    let body: Vec<String> = aspects
        .iter()
        .zip(scores)
        .map(|(a, s)| format!("\"{a}\": {{\"reason\": \"ok\", \"score\": \"{s}\"}}"))
        .collect();
    format!("{{{}}}", body.join(","))
}

#[test]
fn judge_parsing_round_trip() {
    // Lossless parse of valid verdicts for all five protocols.
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..100 {
        let scores: [u8; 5] = std::array::from_fn(|_| rng.gen_range(1..=5));
        let verdict = parse_quality(&valid_quality_json(scores)).unwrap();
        assert_eq!(
            [
                verdict.helpfulness,
                verdict.clarity,
                verdict.factuality,
                verdict.depth,
                verdict.engagement
            ],
            scores
        );
    }
    for score in 1..=5u8 {
        let verdict =
            parse_missingness(&format!("{{\"reason\": \"r\", \"score\": {score}}}")).unwrap();
        assert_eq!(verdict.raw_score, score);
    }
    for (raw, label) in [
        ("yes", StanceLabel::Yes),
        ("No", StanceLabel::No),
        ("both", StanceLabel::Both),
        ("Both-Sides", StanceLabel::Both),
        ("other", StanceLabel::Other),
    ] {
        let verdict = parse_stance(&format!("{{\"reason\": \"r\", \"score\": \"{raw}\"}}")).unwrap();
        assert_eq!(verdict.label, label);
    }
    for digit in 0..=2u8 {
        assert_eq!(parse_structural(&format!(" {digit}\n")).unwrap().score, digit);
    }
    assert_eq!(parse_summary("A short summary.").unwrap().text, "A short summary.");

    // Adversarial fixture set: every case must be rejected.
    let mut adversarial: Vec<(&str, String)> = Vec::new();
    let aspects = ["helpfulness", "clarity", "factuality", "depth", "engagement"];
    for missing in aspects {
        let body: Vec<String> = aspects
            .iter()
            .filter(|a| **a != missing)
            .map(|a| format!("\"{a}\": {{\"reason\": \"ok\", \"score\": \"3\"}}"))
            .collect();
        adversarial.push(("quality", format!("{{{}}}", body.join(","))));
    }
    for (i, bad_score) in ["0", "6", "-1", "3.5", "abc", "null", "[]"].iter().enumerate() {
        let aspect = aspects[i % 5];
        let body: Vec<String> = aspects
            .iter()
            .map(|a| {
                let score = if *a == aspect {
                    (*bad_score).to_string()
                } else {
                    "\"3\"".to_string()
                };
                format!("\"{a}\": {{\"reason\": \"ok\", \"score\": {score}}}")
            })
            .collect();
        adversarial.push(("quality", format!("{{{}}}", body.join(","))));
    }
    adversarial.push(("quality", "not json at all".into()));
    adversarial.push(("quality", "[1, 2, 3]".into()));
    adversarial.push(("quality", "{\"helpfulness\": 4}".into()));
    for bad in ["\"0\"", "\"6\"", "\"ten\"", "6", "0", "2.5", "null", "{}", "[]"] {
        adversarial.push(("missingness", format!("{{\"reason\": \"r\", \"score\": {bad}}}")));
    }
    adversarial.push(("missingness", "{\"reason\": \"no score\"}".into()));
    adversarial.push(("missingness", "prose without json".into()));
    for bad in ["maybe", "yess", "nope", "neither", "both sides please", ""] {
        adversarial.push(("stance", format!("{{\"reason\": \"r\", \"score\": \"{bad}\"}}")));
    }
    adversarial.push(("stance", "{\"reason\": \"r\", \"score\": 1}".into()));
    adversarial.push(("stance", "{\"reason\": \"r\"}".into()));
    for bad in ["two", "3", "-1", "1.5", "12", "", "1 2", "score: 1", "0,", "(2)"] {
        adversarial.push(("structural", (*bad).to_string()));
    }
    adversarial.push(("summary", String::new()));
    adversarial.push(("summary", "   \n\t ".into()));
    // An aspect entry with no score key at all.
    let body: Vec<String> = aspects
        .iter()
        .map(|a| {
            if *a == "depth" {
                format!("\"{a}\": {{\"reason\": \"ok\"}}")
            } else {
                format!("\"{a}\": {{\"reason\": \"ok\", \"score\": \"3\"}}")
            }
        })
        .collect();
    adversarial.push(("quality", format!("{{{}}}", body.join(","))));
    adversarial.push(("missingness", "```\nnot json\n```".into()));
    adversarial.push(("stance", "```json\n{\"score\": \"perhaps\"}\n```".into()));
    adversarial.push(("structural", "0 1".into()));

    assert_eq!(adversarial.len(), 50, "fixture set should hold 50 cases");
    for (i, (protocol, payload)) in adversarial.iter().enumerate() {
        let rejected = match *protocol {
            "quality" => parse_quality(payload).is_err(),
            "missingness" => parse_missingness(payload).is_err(),
            "stance" => parse_stance(payload).is_err(),
            "structural" => parse_structural(payload).is_err(),
            "summary" => parse_summary(payload).is_err(),
            _ => unreachable!(),
        };
        assert!(rejected, "case {i} ({protocol}) was wrongly accepted: {payload:?}");
    }
    println!("PASS judge parsing round-trip: valid verdicts lossless, 50/50 adversarial cases rejected");
}

#[test]
fn dataset_stats_on_shipped_files() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
    let cqa = load_dataset(
        format!("{root}/data/conflictingqa.jsonl"),
        DatasetKind::Conflictingqa,
    )
    .unwrap();
    let (count, mean_words) = dataset_stats(&cqa).unwrap();
    assert_eq!(count, 434);
    assert!(
        (mean_words - 8.0).abs() <= 1.0,
        "mean {mean_words} outside 8 +/- 1"
    );

    let lima = load_dataset(format!("{root}/data/lima_oe.jsonl"), DatasetKind::LimaOe).unwrap();
    let (count, mean_words) = dataset_stats(&lima).unwrap();
    assert_eq!(count, 50);
    assert!(
        (mean_words - 19.0).abs() <= 1.0,
        "mean {mean_words} outside 19 +/- 1"
    );
    println!("PASS dataset stats: 434 questions at ~8 words; 50 questions at ~19 words");
}

#[test]
fn full_scale_targets_recorded_not_asserted() {
    assert!(!icalign::report::FULL_SCALE_TARGETS.is_empty());
    println!(
        "RECORDED (not asserted): {} full-scale reference values; see `icalign report --compare-full-scale`",
        icalign::report::FULL_SCALE_TARGETS.len()
    );
}
