//! Aggregate run-store records into tables and figure datasets.
//!
//! Every builder sorts its inputs into canonical order before aggregating,
//! so emitted numbers never depend on record order on disk. Scores and
//! similarities round to two decimals, lengths to integers.

use crate::error::{Error, Result};
use crate::judge::{load_verdicts, VerdictPayload, VerdictRecord};
use crate::metrics::{self, StanceLabel};
use crate::modelio::GenerationRecord;
use crate::runstore::{write_atomic, RunStore};
use crate::textnorm::word_count;
use serde::Serialize;
use std::collections::BTreeMap;

/// Row/series identity: one model under one strategy on one dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GroupKey {
    pub dataset: String,
    pub model: String,
    pub strategy: String,
    pub teacher: String,
}

impl GroupKey {
    fn of_generation(record: &GenerationRecord) -> GroupKey {
        GroupKey {
            dataset: record.dataset.clone(),
            model: record.model_id.clone(),
            strategy: record.strategy.clone(),
            teacher: record.teacher_model.clone().unwrap_or_default(),
        }
    }

    fn of_verdict(record: &VerdictRecord) -> GroupKey {
        GroupKey {
            dataset: record.identity.dataset.clone(),
            model: record.identity.model_id.clone(),
            strategy: record.identity.strategy.clone(),
            teacher: record.identity.teacher_model.clone().unwrap_or_default(),
        }
    }

    pub fn label(&self) -> String {
        if self.teacher.is_empty() {
            format!("{}/{}/{}", self.dataset, self.model, self.strategy)
        } else {
            format!(
                "{}/{}/{}[{}]",
                self.dataset, self.model, self.strategy, self.teacher
            )
        }
    }
}

/// Samples grouped per (group, query), sample-index ordered.
type SampleMap<'a> = BTreeMap<GroupKey, BTreeMap<String, BTreeMap<u32, &'a GenerationRecord>>>;

fn index_samples(records: &[GenerationRecord]) -> SampleMap<'_> {
    let mut map: SampleMap = BTreeMap::new();
    for record in records {
        map.entry(GroupKey::of_generation(record))
            .or_default()
            .entry(record.query_id.clone())
            .or_default()
            .insert(record.sample_index, record);
    }
    map
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------------
// Quality table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityTableRow {
    #[serde(flatten)]
    pub key: GroupKey,
    pub judge_model: String,
    pub n_pairs: usize,
    pub excluded: usize,
    pub mean_length: i64,
    pub helpfulness: f64,
    pub clarity: f64,
    pub factuality: f64,
    pub depth: f64,
    pub engagement: f64,
}

/// Per-group mean aspect scores over exactly the successfully judged
/// (query, sample) pairs, with parse failures tallied per group.
pub fn build_quality_table(
    generations: &[GenerationRecord],
    quality_verdicts: &[VerdictRecord],
) -> Result<Vec<QualityTableRow>> {
    let samples = index_samples(generations);
    // (group, query, sample) -> verdict, ordered.
    let mut grouped: BTreeMap<GroupKey, BTreeMap<(String, u32), &VerdictRecord>> = BTreeMap::new();
    for verdict in quality_verdicts {
        grouped
            .entry(GroupKey::of_verdict(verdict))
            .or_default()
            .insert(
                (verdict.identity.query_id.clone(), verdict.identity.sample_index),
                verdict,
            );
    }

    let mut rows = Vec::new();
    for (key, verdicts) in grouped {
        let mut scores: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut lengths = Vec::new();
        let mut excluded = 0usize;
        let mut judge_model = String::new();
        for ((query_id, sample_index), verdict) in &verdicts {
            judge_model = verdict.judge_model.clone();
            match &verdict.verdict {
                Some(VerdictPayload::Quality(q)) => {
                    for aspect in crate::judge::ASPECTS {
                        scores
                            .entry(aspect)
                            .or_default()
                            .push(q.score(aspect).unwrap() as f64);
                    }
                    let record = samples
                        .get(&key)
                        .and_then(|queries| queries.get(query_id))
                        .and_then(|by_index| by_index.get(sample_index))
                        .ok_or_else(|| {
                            Error::MissingData(format!(
                                "no generation record behind quality verdict for {} {query_id}#{sample_index}",
                                key.label()
                            ))
                        })?;
                    lengths.push(word_count(&record.response_text) as f64);
                }
                Some(_) => {
                    return Err(Error::InvalidArgument(format!(
                        "non-quality verdict stored under quality for {}",
                        key.label()
                    )))
                }
                None => excluded += 1,
            }
        }
        if lengths.is_empty() {
            return Err(Error::MissingData(format!(
                "group {} has no successfully judged pairs",
                key.label()
            )));
        }
        rows.push(QualityTableRow {
            n_pairs: lengths.len(),
            excluded,
            mean_length: mean(&lengths).round() as i64,
            helpfulness: round2(mean(&scores["helpfulness"])),
            clarity: round2(mean(&scores["clarity"])),
            factuality: round2(mean(&scores["factuality"])),
            depth: round2(mean(&scores["depth"])),
            engagement: round2(mean(&scores["engagement"])),
            judge_model,
            key,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Diversity / similarity table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityTableRow {
    #[serde(flatten)]
    pub key: GroupKey,
    pub n_queries: usize,
    pub excluded: usize,
    pub mean_length: i64,
    /// Self-Sim aggregations, each averaged over queries. Mean-of-pairs is
    /// the headline reading; min and max are emitted so either aggregation
    /// convention can be checked.
    pub self_sim_mean: f64,
    pub self_sim_min: f64,
    pub self_sim_max: f64,
    /// Per reference model: (mean-of-max, mean-of-mean) similarity to the
    /// reference's designated sample.
    pub reference_sims: BTreeMap<String, (f64, f64)>,
}

/// Reference answer text for each (dataset, query) of a reference model's
/// direct generations at the designated sample index.
fn reference_texts<'a>(
    samples: &SampleMap<'a>,
    reference_model: &str,
    reference_sample_index: u32,
) -> BTreeMap<(String, String), &'a str> {
    let mut map = BTreeMap::new();
    for (key, queries) in samples {
        if key.model != reference_model || key.strategy != "direct" {
            continue;
        }
        for (query_id, by_index) in queries {
            if let Some(record) = by_index.get(&reference_sample_index) {
                map.insert(
                    (key.dataset.clone(), query_id.clone()),
                    record.response_text.as_str(),
                );
            }
        }
    }
    map
}

/// Per-group lexical diversity and similarity to each reference model.
pub fn build_diversity_table(
    generations: &[GenerationRecord],
    reference_models: &[String],
    reference_sample_index: u32,
) -> Result<Vec<DiversityTableRow>> {
    let samples = index_samples(generations);
    let references: BTreeMap<&String, BTreeMap<(String, String), &str>> = reference_models
        .iter()
        .map(|m| (m, reference_texts(&samples, m, reference_sample_index)))
        .collect();
    for (model, texts) in &references {
        if texts.is_empty() {
            return Err(Error::MissingData(format!(
                "no direct generations found for reference model {model}"
            )));
        }
    }

    let mut rows = Vec::new();
    for (key, queries) in &samples {
        let mut lengths = Vec::new();
        let mut self_means = Vec::new();
        let mut self_mins = Vec::new();
        let mut self_maxes = Vec::new();
        let mut per_reference: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut excluded = 0usize;

        for (query_id, by_index) in queries {
            let texts: Vec<&str> = by_index.values().map(|r| r.response_text.as_str()).collect();
            lengths.extend(texts.iter().map(|t| word_count(t) as f64));
            if texts.len() < 2 {
                excluded += 1;
                continue;
            }
            let self_summary = metrics::self_sim(&texts)?;
            self_means.push(self_summary.mean);
            self_mins.push(self_summary.min);
            self_maxes.push(self_summary.max);

            for (reference_model, reference_map) in &references {
                let reference = reference_map
                    .get(&(key.dataset.clone(), query_id.clone()))
                    .ok_or_else(|| {
                        Error::MissingData(format!(
                            "reference model {reference_model} has no generation for {} / {query_id}",
                            key.dataset
                        ))
                    })?;
                let cross = metrics::cross_sim(&texts, reference)?;
                let entry = per_reference
                    .entry((*reference_model).clone())
                    .or_default();
                entry.0.push(cross.max);
                entry.1.push(cross.mean);
            }
        }
        if self_means.is_empty() {
            continue;
        }
        rows.push(DiversityTableRow {
            key: key.clone(),
            n_queries: self_means.len(),
            excluded,
            mean_length: mean(&lengths).round() as i64,
            self_sim_mean: round2(mean(&self_means)),
            self_sim_min: round2(mean(&self_mins)),
            self_sim_max: round2(mean(&self_maxes)),
            reference_sims: per_reference
                .into_iter()
                .map(|(model, (maxes, means))| {
                    (model, (round2(mean(&maxes)), round2(mean(&means))))
                })
                .collect(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Stance report (figure 3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StanceReport {
    /// Per group: label -> count over all labeled (query, sample) pairs.
    pub distribution: BTreeMap<String, BTreeMap<String, usize>>,
    /// The six reachable entropy values for five samples, ascending.
    pub entropy_levels: Vec<f64>,
    /// Per group: query counts per entropy level.
    pub entropy_histogram: BTreeMap<String, Vec<usize>>,
    /// Queries excluded per group for having fewer labeled samples than
    /// expected.
    pub excluded_queries: BTreeMap<String, usize>,
    pub parse_failures: BTreeMap<String, usize>,
}

pub fn build_stance_report(
    stance_verdicts: &[VerdictRecord],
    expected_samples: usize,
) -> Result<StanceReport> {
    let mut labels: BTreeMap<GroupKey, BTreeMap<String, BTreeMap<u32, StanceLabel>>> =
        BTreeMap::new();
    let mut parse_failures: BTreeMap<String, usize> = BTreeMap::new();
    for verdict in stance_verdicts {
        let key = GroupKey::of_verdict(verdict);
        match &verdict.verdict {
            Some(VerdictPayload::Stance(s)) => {
                labels
                    .entry(key)
                    .or_default()
                    .entry(verdict.identity.query_id.clone())
                    .or_default()
                    .insert(verdict.identity.sample_index, s.label);
            }
            Some(_) => {
                return Err(Error::InvalidArgument(
                    "non-stance verdict stored under stance".into(),
                ))
            }
            None => *parse_failures.entry(key.label()).or_default() += 1,
        }
    }

    let levels = metrics::entropy_levels_n5().to_vec();
    let mut distribution = BTreeMap::new();
    let mut entropy_histogram = BTreeMap::new();
    let mut excluded_queries = BTreeMap::new();
    for (key, queries) in &labels {
        let label = key.label();
        let mut counts: BTreeMap<String, usize> = StanceLabel::ALL
            .iter()
            .map(|l| (l.as_str().to_string(), 0))
            .collect();
        let mut histogram = vec![0usize; levels.len()];
        let mut excluded = 0usize;
        for by_index in queries.values() {
            for stance in by_index.values() {
                *counts.get_mut(stance.as_str()).unwrap() += 1;
            }
            if by_index.len() != expected_samples {
                excluded += 1;
                continue;
            }
            let query_labels: Vec<StanceLabel> = by_index.values().copied().collect();
            let entropy = metrics::stance_entropy(&query_labels)?;
            let slot = levels
                .iter()
                .position(|level| (level - entropy).abs() < 1e-9)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "entropy {entropy} outside the reachable values for N={expected_samples}"
                    ))
                })?;
            histogram[slot] += 1;
        }
        distribution.insert(label.clone(), counts);
        entropy_histogram.insert(label.clone(), histogram);
        excluded_queries.insert(label, excluded);
    }
    Ok(StanceReport {
        distribution,
        entropy_levels: levels,
        entropy_histogram,
        excluded_queries,
        parse_failures,
    })
}

// ---------------------------------------------------------------------------
// Coverage heatmaps (figure 2)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapSpec {
    pub metric: String,
    pub reference_model: String,
    pub x_label: String,
    /// Helpfulness scores 1..5.
    pub x_bins: Vec<String>,
    pub y_bins: Vec<String>,
    /// Per series label: cells[y][x] counts.
    pub series: BTreeMap<String, Vec<Vec<usize>>>,
    pub total: usize,
    pub excluded: usize,
}

const LEX_BINS: usize = 5;

fn lex_bin(value: f64) -> usize {
    ((value * LEX_BINS as f64) as usize).min(LEX_BINS - 1)
}

/// Heatmaps of helpfulness vs lexical and semantic coverage of each base
/// (or in-context) sample by the reference response.
pub fn build_coverage_heatmap(
    generations: &[GenerationRecord],
    quality_verdicts: &[VerdictRecord],
    missingness_verdicts: &[VerdictRecord],
    reference_model: &str,
    reference_sample_index: u32,
) -> Result<(HeatmapSpec, HeatmapSpec)> {
    let samples = index_samples(generations);
    let references = reference_texts(&samples, reference_model, reference_sample_index);
    if references.is_empty() {
        return Err(Error::MissingData(format!(
            "no direct generations found for reference model {reference_model}"
        )));
    }

    // helpfulness per (group, query, sample)
    let mut helpfulness: BTreeMap<(GroupKey, String, u32), u8> = BTreeMap::new();
    for verdict in quality_verdicts {
        if let Some(VerdictPayload::Quality(q)) = &verdict.verdict {
            helpfulness.insert(
                (
                    GroupKey::of_verdict(verdict),
                    verdict.identity.query_id.clone(),
                    verdict.identity.sample_index,
                ),
                q.helpfulness,
            );
        }
    }
    // cover_sem per (group, query, sample) against this reference
    let mut cover_sem: BTreeMap<(GroupKey, String, u32), u8> = BTreeMap::new();
    for verdict in missingness_verdicts {
        if verdict.identity.reference_model.as_deref() != Some(reference_model) {
            continue;
        }
        if let Some(VerdictPayload::Missingness(m)) = &verdict.verdict {
            cover_sem.insert(
                (
                    GroupKey::of_verdict(verdict),
                    verdict.identity.query_id.clone(),
                    verdict.identity.sample_index,
                ),
                m.cover_sem,
            );
        }
    }

    let x_bins: Vec<String> = (1..=5).map(|s| s.to_string()).collect();
    let lex_bin_labels: Vec<String> = (0..LEX_BINS)
        .map(|i| {
            format!(
                "[{:.1},{}",
                i as f64 / LEX_BINS as f64,
                if i == LEX_BINS - 1 {
                    "1.0]".to_string()
                } else {
                    format!("{:.1})", (i + 1) as f64 / LEX_BINS as f64)
                }
            )
        })
        .collect();
    let sem_bin_labels: Vec<String> = (1..=5).map(|s| s.to_string()).collect();

    let mut lex_series: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
    let mut sem_series: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
    let (mut lex_total, mut lex_excluded) = (0usize, 0usize);
    let (mut sem_total, mut sem_excluded) = (0usize, 0usize);

    for (key, queries) in &samples {
        // The reference model's own rows are not a coverage subject.
        if key.model == reference_model {
            continue;
        }
        let label = key.label();
        for (query_id, by_index) in queries {
            let Some(reference) = references.get(&(key.dataset.clone(), query_id.clone())) else {
                lex_excluded += by_index.len();
                sem_excluded += by_index.len();
                continue;
            };
            for (sample_index, record) in by_index {
                let Some(help) = helpfulness.get(&(key.clone(), query_id.clone(), *sample_index))
                else {
                    lex_excluded += 1;
                    sem_excluded += 1;
                    continue;
                };
                let x = (*help as usize) - 1;

                let lex = metrics::cover_lex(&record.response_text, reference);
                let cells = lex_series
                    .entry(label.clone())
                    .or_insert_with(|| vec![vec![0; 5]; LEX_BINS]);
                cells[lex_bin(lex)][x] += 1;
                lex_total += 1;

                match cover_sem.get(&(key.clone(), query_id.clone(), *sample_index)) {
                    Some(sem) => {
                        let cells = sem_series
                            .entry(label.clone())
                            .or_insert_with(|| vec![vec![0; 5]; 5]);
                        cells[(*sem as usize) - 1][x] += 1;
                        sem_total += 1;
                    }
                    None => sem_excluded += 1,
                }
            }
        }
    }

    Ok((
        HeatmapSpec {
            metric: "cover_lex".into(),
            reference_model: reference_model.into(),
            x_label: "helpfulness".into(),
            x_bins: x_bins.clone(),
            y_bins: lex_bin_labels,
            series: lex_series,
            total: lex_total,
            excluded: lex_excluded,
        },
        HeatmapSpec {
            metric: "cover_sem".into(),
            reference_model: reference_model.into(),
            x_label: "helpfulness".into(),
            x_bins,
            y_bins: sem_bin_labels,
            series: sem_series,
            total: sem_total,
            excluded: sem_excluded,
        },
    ))
}

// ---------------------------------------------------------------------------
// Max-Sim histogram (figure 4)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSpec {
    pub metric: String,
    pub reference_model: String,
    pub bin_edges: Vec<f64>,
    /// Per series label: per-bin query counts. Counts sum to the number of
    /// contributing queries.
    pub series: BTreeMap<String, Vec<usize>>,
    pub excluded: BTreeMap<String, usize>,
}

/// Histogram of per-query maximum similarity to the reference response,
/// with the reference model's own per-query Self-Sim max as the top row.
pub fn build_max_sim_histogram(
    generations: &[GenerationRecord],
    reference_model: &str,
    reference_sample_index: u32,
    bins: usize,
) -> Result<HistogramSpec> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least 1 bin".into()));
    }
    let samples = index_samples(generations);
    let references = reference_texts(&samples, reference_model, reference_sample_index);
    if references.is_empty() {
        return Err(Error::MissingData(format!(
            "no direct generations found for reference model {reference_model}"
        )));
    }
    let bin_of = |value: f64| ((value * bins as f64) as usize).min(bins - 1);

    let mut series: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    for (key, queries) in &samples {
        let is_reference = key.model == reference_model && key.strategy == "direct";
        let label = if is_reference {
            format!("{}/self_sim_max", key.label())
        } else {
            format!("{}/max_sim", key.label())
        };
        let mut counts = vec![0usize; bins];
        let mut skipped = 0usize;
        for (query_id, by_index) in queries {
            let texts: Vec<&str> = by_index.values().map(|r| r.response_text.as_str()).collect();
            let value = if is_reference {
                if texts.len() < 2 {
                    skipped += 1;
                    continue;
                }
                metrics::self_sim(&texts)?.max
            } else {
                match references.get(&(key.dataset.clone(), query_id.clone())) {
                    Some(reference) => metrics::cross_sim(&texts, reference)?.max,
                    None => {
                        skipped += 1;
                        continue;
                    }
                }
            };
            counts[bin_of(value)] += 1;
        }
        series.insert(label.clone(), counts);
        excluded.insert(label, skipped);
    }
    Ok(HistogramSpec {
        metric: "max_sim".into(),
        reference_model: reference_model.into(),
        bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        series,
        excluded,
    })
}

// ---------------------------------------------------------------------------
// Full-scale targets (documented, not asserted)
// ---------------------------------------------------------------------------

/// Reference values observed at full scale (7B models, frontier judge).
/// Desk-scale runs are not expected to reproduce them; `report
/// --compare-full-scale` prints them next to computed values.
pub const FULL_SCALE_TARGETS: &[(&str, &str, f64)] = &[
    ("conflictingqa/llama2-chat/direct", "self_sim_mean", 0.36),
    ("conflictingqa/llama2-chat/direct", "mean_length", 412.0),
    ("conflictingqa/llama2-chat/direct", "helpfulness", 4.78),
    (
        "conflictingqa/llama2-base/urial_summary",
        "chat_sim_max",
        0.31,
    ),
    ("lima_oe/llama2-base/urial_summary", "chat_sim_max", 0.33),
    ("lima_oe/llama2-chat/direct", "self_sim_mean", 0.34),
];

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportSummary {
    pub files: Vec<String>,
    pub exclusions: usize,
}

pub struct ReportOptions {
    pub reference_models: Vec<String>,
    pub reference_sample_index: u32,
    pub expected_samples: usize,
    pub figure4_bins: usize,
    /// Which figure specs to emit (2, 3, 4). Tables are always emitted.
    pub figures: Vec<u8>,
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn quality_csv(rows: &[QualityTableRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "dataset",
            "model",
            "strategy",
            "teacher",
            "judge",
            "n_pairs",
            "excluded",
            "length",
            "helpfulness",
            "clarity",
            "factuality",
            "depth",
            "engagement",
        ])
        .map_err(csv_error)?;
    for row in rows {
        writer
            .write_record([
                row.key.dataset.as_str(),
                row.key.model.as_str(),
                row.key.strategy.as_str(),
                row.key.teacher.as_str(),
                row.judge_model.as_str(),
                &row.n_pairs.to_string(),
                &row.excluded.to_string(),
                &row.mean_length.to_string(),
                &format!("{:.2}", row.helpfulness),
                &format!("{:.2}", row.clarity),
                &format!("{:.2}", row.factuality),
                &format!("{:.2}", row.depth),
                &format!("{:.2}", row.engagement),
            ])
            .map_err(csv_error)?;
    }
    String::from_utf8(writer.into_inner().map_err(csv_error)?).map_err(csv_error)
}

fn diversity_csv(rows: &[DiversityTableRow], reference_models: &[String]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "dataset".to_string(),
        "model".to_string(),
        "strategy".to_string(),
        "teacher".to_string(),
        "n_queries".to_string(),
        "excluded".to_string(),
        "length".to_string(),
        "self_sim_mean".to_string(),
        "self_sim_min".to_string(),
        "self_sim_max".to_string(),
    ];
    for model in reference_models {
        header.push(format!("{model}_sim_max"));
        header.push(format!("{model}_sim_mean"));
    }
    writer.write_record(&header).map_err(csv_error)?;
    for row in rows {
        let mut cells = vec![
            row.key.dataset.clone(),
            row.key.model.clone(),
            row.key.strategy.clone(),
            row.key.teacher.clone(),
            row.n_queries.to_string(),
            row.excluded.to_string(),
            row.mean_length.to_string(),
            format!("{:.2}", row.self_sim_mean),
            format!("{:.2}", row.self_sim_min),
            format!("{:.2}", row.self_sim_max),
        ];
        for model in reference_models {
            let (max, mean) = row.reference_sims.get(model).copied().unwrap_or((0.0, 0.0));
            cells.push(format!("{max:.2}"));
            cells.push(format!("{mean:.2}"));
        }
        writer.write_record(&cells).map_err(csv_error)?;
    }
    String::from_utf8(writer.into_inner().map_err(csv_error)?).map_err(csv_error)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Load every generation record, sorted canonically.
pub fn load_generations(store: &RunStore) -> Result<Vec<GenerationRecord>> {
    let mut records = Vec::new();
    for path in RunStore::list_records(&store.generations_dir())? {
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        records.push(serde_json::from_str::<GenerationRecord>(&raw)?);
    }
    records.sort_by(|a, b| {
        (
            &a.dataset,
            &a.model_id,
            &a.strategy,
            &a.query_id,
            a.sample_index,
        )
            .cmp(&(&b.dataset, &b.model_id, &b.strategy, &b.query_id, b.sample_index))
    });
    Ok(records)
}

/// Build and write every requested report artifact. Returns the files
/// written plus the total exclusion tally (for the partial-success exit
/// code).
pub fn write_reports(store: &RunStore, options: &ReportOptions) -> Result<ReportSummary> {
    let generations = load_generations(store)?;
    if generations.is_empty() {
        return Err(Error::MissingData(
            "run store has no generations; run generate first".into(),
        ));
    }
    let quality = load_verdicts(store, "quality")?;
    let stance = load_verdicts(store, "stance")?;
    let missingness = load_verdicts(store, "missingness")?;

    // Reports reflect exactly this invocation: drop stale artifacts first.
    let reports_dir = store.reports_dir();
    if reports_dir.exists() {
        std::fs::remove_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    }
    let mut summary = ReportSummary::default();
    let emit = |name: &str, contents: &str, summary: &mut ReportSummary| -> Result<()> {
        let path = reports_dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        summary.files.push(name.to_string());
        Ok(())
    };

    if !quality.is_empty() {
        let rows = build_quality_table(&generations, &quality)?;
        summary.exclusions += rows.iter().map(|r| r.excluded).sum::<usize>();
        emit("quality_table.csv", &quality_csv(&rows)?, &mut summary)?;
    }

    let diversity = build_diversity_table(
        &generations,
        &options.reference_models,
        options.reference_sample_index,
    )?;
    summary.exclusions += diversity.iter().map(|r| r.excluded).sum::<usize>();
    emit(
        "diversity_table.csv",
        &diversity_csv(&diversity, &options.reference_models)?,
        &mut summary,
    )?;

    if options.figures.contains(&2) {
        if quality.is_empty() {
            return Err(Error::MissingData(
                "figure 2 needs quality verdicts (helpfulness axis); run judge first".into(),
            ));
        }
        for reference in &options.reference_models {
            let (lex, sem) = build_coverage_heatmap(
                &generations,
                &quality,
                &missingness,
                reference,
                options.reference_sample_index,
            )?;
            summary.exclusions += lex.excluded + sem.excluded;
            emit(
                &format!("figure2_coverage_lex_{reference}.json"),
                &to_json(&lex)?,
                &mut summary,
            )?;
            emit(
                &format!("figure2_coverage_sem_{reference}.json"),
                &to_json(&sem)?,
                &mut summary,
            )?;
        }
    }
    if options.figures.contains(&3) {
        if stance.is_empty() {
            return Err(Error::MissingData(
                "figure 3 needs stance verdicts; run judge with the stance protocol first".into(),
            ));
        }
        let report = build_stance_report(&stance, options.expected_samples)?;
        summary.exclusions += report.excluded_queries.values().sum::<usize>()
            + report.parse_failures.values().sum::<usize>();
        emit("figure3_stance.json", &to_json(&report)?, &mut summary)?;
    }
    if options.figures.contains(&4) {
        for reference in &options.reference_models {
            let histogram = build_max_sim_histogram(
                &generations,
                reference,
                options.reference_sample_index,
                options.figure4_bins,
            )?;
            summary.exclusions += histogram.excluded.values().sum::<usize>();
            emit(
                &format!("figure4_max_sim_{reference}.json"),
                &to_json(&histogram)?,
                &mut summary,
            )?;
        }
    }
    Ok(summary)
}
