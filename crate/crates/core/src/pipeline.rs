//! Orchestration: resolve each job's prerequisites (teacher answers,
//! embeddings, summaries), build prompts, sample models, and run judge
//! protocols over the run store.
//!
//! Everything is cache-backed, so interrupting and re-running a command
//! completes only the missing records.

use crate::config::{JobStrategy, RunConfig};
use crate::corpus::{load_dataset, Dataset, DatasetKind, Query};
use crate::error::{Error, Result};
use crate::judge::{JudgeClient, VerdictIdentity, VerdictPayload};
use crate::modelio::{run_parallel, GenerationRecord, ModelClient, PromptInput, RecordContext};
use crate::promptkit::{
    self, render_fewshot, render_summary_prompt, render_zero_shot, Demo, DemoPools,
    PromptStrategy, StrategyKind,
};
use crate::retrieval::{EmbeddingClient, Index};
use crate::runstore::RunStore;
use std::collections::BTreeMap;
use std::str::FromStr;

/// Dataset name used for the fixed example-query corpus.
pub const URIAL_DATASET: &str = "urial_examples";

#[derive(Debug, Default, Clone)]
pub struct GenerateSummary {
    pub records: usize,
    pub jobs: usize,
}

#[derive(Debug, Default, Clone)]
pub struct JudgeSummary {
    pub verdicts: usize,
    pub parse_failures: usize,
}

fn load_job_dataset(config: &RunConfig, name: &str) -> Result<Dataset> {
    let path = config
        .datasets
        .get(name)
        .ok_or_else(|| Error::Config(format!("dataset {name:?} not configured")))?;
    let kind = DatasetKind::from_str(name)?;
    load_dataset(path, kind)
}

fn model_client(config: &RunConfig, model: &str) -> Result<ModelClient> {
    let endpoint = config
        .models
        .get(model)
        .ok_or_else(|| Error::Config(format!("model {model:?} not configured")))?;
    Ok(endpoint.client(model))
}

fn judge_client(config: &RunConfig) -> Result<JudgeClient> {
    let judge = config
        .judge
        .as_ref()
        .ok_or_else(|| Error::Config("no [judge] section configured".into()))?;
    Ok(JudgeClient::new(&judge.model, &judge.endpoint).with_api_key(judge.api_key()))
}

fn direct_input(client: &ModelClient, text: &str) -> PromptInput {
    match client.route {
        crate::modelio::RouteKind::Chat => PromptInput::Chat(text.to_string()),
        crate::modelio::RouteKind::Completion => PromptInput::Completion(text.to_string()),
    }
}

/// Sample a model directly (native route) on a list of queries, returning
/// the records. Used for teacher answers and `direct` jobs.
fn sample_direct(
    client: &ModelClient,
    dataset_name: &str,
    queries: &[(String, String)],
    config: &RunConfig,
    store: &RunStore,
) -> Result<Vec<GenerationRecord>> {
    let jobs: Vec<_> = queries.to_vec();
    let results = run_parallel(jobs, config.concurrency, |(query_id, text)| {
        let ctx = RecordContext {
            query_id,
            dataset: dataset_name.to_string(),
            strategy: "direct".into(),
            teacher_model: None,
            demo_ids: Vec::new(),
        };
        client.complete(&ctx, &direct_input(client, &text), &config.sampling, store)
    });
    let mut records = Vec::new();
    for result in results {
        records.extend(result?);
    }
    Ok(records)
}

/// Teacher answer text per query id: the first sample of a direct run.
fn teacher_answer_map(records: &[GenerationRecord]) -> BTreeMap<String, String> {
    records
        .iter()
        .filter(|r| r.sample_index == 0)
        .map(|r| (r.query_id.clone(), r.response_text.clone()))
        .collect()
}

/// Summaries of teacher answers via the judge, keyed by query id.
fn summarize_answers(
    judge: &JudgeClient,
    store: &RunStore,
    dataset_name: &str,
    teacher_model: &str,
    queries: &[(String, String)],
    answers: &BTreeMap<String, String>,
    concurrency: usize,
) -> Result<BTreeMap<String, String>> {
    let jobs: Vec<(String, String)> = queries.to_vec();
    let results = run_parallel(jobs, concurrency, |(query_id, query_text)| {
        let answer = answers
            .get(&query_id)
            .ok_or_else(|| Error::MissingData(format!("no teacher answer for {query_id}")))?;
        let identity = VerdictIdentity {
            dataset: dataset_name.to_string(),
            query_id: query_id.clone(),
            model_id: teacher_model.to_string(),
            strategy: "direct".into(),
            teacher_model: None,
            sample_index: 0,
            reference_model: None,
        };
        let record = judge.summarize(store, &identity, &query_text, answer)?;
        match record.verdict {
            Some(VerdictPayload::Summary(s)) => Ok((query_id, s.text)),
            _ => Err(Error::JudgeParse {
                kind: "summary".into(),
                message: format!("summarizer failed for {query_id}"),
            }),
        }
    });
    results.into_iter().collect()
}

fn build_query_index(
    embedding: &EmbeddingClient,
    task_prompt: &str,
    items: &[(String, String)],
    concurrency: usize,
) -> Result<Index> {
    let jobs: Vec<_> = items.to_vec();
    let task = task_prompt.to_string();
    let vectors = run_parallel(jobs, concurrency, |(id, text)| {
        embedding.embed(&text, &task).map(|v| (id, v))
    });
    let mut index = Index::new(task_prompt);
    for vector in vectors {
        let (id, v) = vector?;
        index.insert(id, v)?;
    }
    Ok(index)
}

/// The fixed example queries as (id, text) pairs.
fn urial_queries() -> Vec<(String, String)> {
    promptkit::urial_human_demos()
        .into_iter()
        .map(|d| (d.id, d.query_text))
        .collect()
}

fn dataset_pairs(dataset: &Dataset) -> Vec<(String, String)> {
    dataset
        .queries
        .iter()
        .map(|q| (q.id.clone(), q.text.clone()))
        .collect()
}

/// Run every configured job, filling the run store.
pub fn generate(config: &RunConfig, run_id: &str) -> Result<GenerateSummary> {
    let store = RunStore::open(&config.runs_dir, run_id)?;
    config.freeze_into(&store)?;

    let mut datasets: BTreeMap<String, Dataset> = BTreeMap::new();
    for job in &config.jobs {
        if !datasets.contains_key(&job.dataset) {
            datasets.insert(job.dataset.clone(), load_job_dataset(config, &job.dataset)?);
        }
    }

    let mut summary = GenerateSummary::default();
    // Teacher direct records per (dataset, teacher), produced on demand.
    let mut teacher_runs: BTreeMap<(String, String), Vec<GenerationRecord>> = BTreeMap::new();

    for job in &config.jobs {
        summary.jobs += 1;
        let dataset = &datasets[&job.dataset];
        let client = model_client(config, &job.model)?;
        match job.parsed_strategy()? {
            JobStrategy::Direct => {
                let records = sample_direct(
                    &client,
                    &job.dataset,
                    &dataset_pairs(dataset),
                    config,
                    &store,
                )?;
                summary.records += records.len();
                teacher_runs.insert((job.dataset.clone(), job.model.clone()), records);
            }
            JobStrategy::Phi(kind) => {
                summary.records +=
                    run_phi_job(config, &store, job, kind, dataset, &client, &mut teacher_runs)?;
            }
        }
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_phi_job(
    config: &RunConfig,
    store: &RunStore,
    job: &crate::config::Job,
    kind: StrategyKind,
    dataset: &Dataset,
    client: &ModelClient,
    teacher_runs: &mut BTreeMap<(String, String), Vec<GenerationRecord>>,
) -> Result<usize> {
    if client.route != crate::modelio::RouteKind::Completion {
        return Err(Error::Config(format!(
            "strategy {} renders completion prompts; model {} is on the chat route",
            kind.as_str(),
            job.model
        )));
    }

    // Prerequisite teacher answers.
    let teacher = job.teacher.clone();
    let mut teacher_answers_x: BTreeMap<String, String> = BTreeMap::new();
    let mut urial_demos: Vec<Demo> = Vec::new();
    let mut test_summaries: BTreeMap<String, String> = BTreeMap::new();

    let needs_teacher_on_x = matches!(
        kind,
        StrategyKind::RandomTeacher
            | StrategyKind::KnnTeacher
            | StrategyKind::OracleKnnTeacher
            | StrategyKind::UrialSummary
    );
    if needs_teacher_on_x {
        let teacher_model = teacher.as_ref().expect("validated");
        let key = (job.dataset.clone(), teacher_model.clone());
        if !teacher_runs.contains_key(&key) {
            let teacher_client = model_client(config, teacher_model)?;
            let records = sample_direct(
                &teacher_client,
                &job.dataset,
                &dataset_pairs(dataset),
                config,
                store,
            )?;
            teacher_runs.insert(key.clone(), records);
        }
        teacher_answers_x = teacher_answer_map(&teacher_runs[&key]);
    }

    match kind {
        StrategyKind::UrialHuman => {
            urial_demos = promptkit::urial_human_demos();
        }
        StrategyKind::UrialTeacher | StrategyKind::UrialSummary => {
            let teacher_model = teacher.as_ref().expect("validated");
            let teacher_client = model_client(config, teacher_model)?;
            let queries = urial_queries();
            let records = sample_direct(&teacher_client, URIAL_DATASET, &queries, config, store)?;
            let answers = teacher_answer_map(&records);
            let summaries = if kind == StrategyKind::UrialSummary {
                let judge = judge_client(config)?;
                let demo_summaries = summarize_answers(
                    &judge,
                    store,
                    URIAL_DATASET,
                    teacher_model,
                    &queries,
                    &answers,
                    config.concurrency,
                )?;
                test_summaries = summarize_answers(
                    &judge,
                    store,
                    &job.dataset,
                    teacher_model,
                    &dataset_pairs(dataset),
                    &teacher_answers_x,
                    config.concurrency,
                )?;
                Some(demo_summaries)
            } else {
                None
            };
            for (id, text) in &queries {
                urial_demos.push(Demo {
                    id: id.clone(),
                    query_text: text.clone(),
                    response_text: answers
                        .get(id)
                        .ok_or_else(|| Error::MissingData(format!("no teacher answer for {id}")))?
                        .clone(),
                    summary_text: summaries.as_ref().map(|s| s[id].clone()),
                });
            }
        }
        _ => {}
    }

    // Embedding indexes for the dynamic strategies.
    let (query_index, answer_index) = match kind {
        StrategyKind::KnnTeacher | StrategyKind::OracleKnnTeacher => {
            let embedding_config = config.embedding.as_ref().expect("validated");
            let embedding = EmbeddingClient::new(
                &embedding_config.model,
                &embedding_config.endpoint,
                embedding_config.api_key(),
                &config.cache_dir,
            );
            if kind == StrategyKind::KnnTeacher {
                let index = build_query_index(
                    &embedding,
                    &embedding_config.query_task_prompt,
                    &dataset_pairs(dataset),
                    config.concurrency,
                )?;
                (Some(index), None)
            } else {
                let answers: Vec<(String, String)> = teacher_answers_x
                    .iter()
                    .map(|(id, text)| (id.clone(), text.clone()))
                    .collect();
                let index = build_query_index(
                    &embedding,
                    &embedding_config.answer_task_prompt,
                    &answers,
                    config.concurrency,
                )?;
                (None, Some(index))
            }
        }
        _ => (None, None),
    };

    let strategy = PromptStrategy {
        kind,
        k: config.generate.k,
        seed: config.generate.demo_seed,
        teacher_model: teacher.clone(),
        knn_order: config.generate.knn_order,
    };
    let pools = DemoPools {
        queries: dataset,
        query_index: query_index.as_ref(),
        answer_index: answer_index.as_ref(),
        teacher_answers: &teacher_answers_x,
        urial_demos: &urial_demos,
    };

    let jobs: Vec<Query> = dataset.queries.clone();
    let results = run_parallel(jobs, config.concurrency, |query| {
        let teacher_response = teacher_answers_x.get(&query.id).map(String::as_str);
        let demos = promptkit::select_demos(&strategy, &query, &pools, teacher_response)?;
        let rendered = match kind {
            StrategyKind::ZeroShot => render_zero_shot(&query),
            StrategyKind::UrialSummary => {
                let test_summary = test_summaries.get(&query.id).ok_or_else(|| {
                    Error::MissingData(format!("no test summary for {}", query.id))
                })?;
                render_summary_prompt(&demos, &query, test_summary)?
            }
            _ => render_fewshot(&demos, &query, kind)?,
        };
        let ctx = RecordContext {
            query_id: query.id.clone(),
            dataset: query.dataset.clone(),
            strategy: kind.as_str().to_string(),
            teacher_model: teacher.clone(),
            demo_ids: rendered.demo_ids.clone(),
        };
        client.complete(
            &ctx,
            &PromptInput::Completion(rendered.text),
            &config.sampling,
            store,
        )
    });
    let mut count = 0;
    for result in results {
        count += result?.len();
    }
    Ok(count)
}

/// Query text lookup across configured datasets plus the example corpus.
fn query_texts(config: &RunConfig) -> Result<BTreeMap<(String, String), String>> {
    let mut map = BTreeMap::new();
    for name in config.datasets.keys() {
        let dataset = load_job_dataset(config, name)?;
        for query in dataset.queries {
            map.insert((name.clone(), query.id), query.text);
        }
    }
    for (id, text) in urial_queries() {
        map.insert((URIAL_DATASET.to_string(), id), text);
    }
    Ok(map)
}

/// Run the configured judge protocols over everything in the run store.
pub fn judge(config: &RunConfig, run_id: &str) -> Result<JudgeSummary> {
    let store = RunStore::open(&config.runs_dir, run_id)?;
    config.freeze_into(&store)?;
    let judge_config = config
        .judge
        .as_ref()
        .ok_or_else(|| Error::Config("no [judge] section configured".into()))?;
    let judge = judge_client(config)?;
    let texts = query_texts(config)?;

    let generations = crate::report::load_generations(&store)?;
    if generations.is_empty() {
        return Err(Error::MissingData(
            "run store has no generations; run generate first".into(),
        ));
    }
    // Only evaluation datasets are judged; the example corpus is demo
    // material.
    let subjects: Vec<&GenerationRecord> = generations
        .iter()
        .filter(|r| config.datasets.contains_key(&r.dataset))
        .collect();

    let reference = judge_config.reference_model.as_deref();
    let reference_texts: BTreeMap<(String, String), String> = generations
        .iter()
        .filter(|r| {
            Some(r.model_id.as_str()) == reference
                && r.strategy == "direct"
                && r.sample_index == config.report.reference_sample_index
        })
        .map(|r| ((r.dataset.clone(), r.query_id.clone()), r.response_text.clone()))
        .collect();

    let mut summary = JudgeSummary::default();
    for protocol in &judge_config.protocols {
        let needs_reference = matches!(protocol.as_str(), "missingness" | "structural");
        if needs_reference && reference.is_none() {
            return Err(Error::Config(format!(
                "protocol {protocol} needs judge.reference_model"
            )));
        }
        let work: Vec<&GenerationRecord> = match protocol.as_str() {
            "quality" | "stance" => subjects.clone(),
            // Pair protocols compare non-reference samples to the
            // reference answer; structural rates the first sample only.
            "missingness" => subjects
                .iter()
                .copied()
                .filter(|r| Some(r.model_id.as_str()) != reference)
                .collect(),
            "structural" => subjects
                .iter()
                .copied()
                .filter(|r| Some(r.model_id.as_str()) != reference && r.sample_index == 0)
                .collect(),
            other => {
                return Err(Error::Config(format!("unknown judge protocol {other:?}")))
            }
        };
        let results = run_parallel(work, config.concurrency, |record| {
            let query_text = texts
                .get(&(record.dataset.clone(), record.query_id.clone()))
                .ok_or_else(|| {
                    Error::MissingData(format!(
                        "query text for {}/{} not found",
                        record.dataset, record.query_id
                    ))
                })?;
            let mut identity = VerdictIdentity {
                dataset: record.dataset.clone(),
                query_id: record.query_id.clone(),
                model_id: record.model_id.clone(),
                strategy: record.strategy.clone(),
                teacher_model: record.teacher_model.clone(),
                sample_index: record.sample_index,
                reference_model: None,
            };
            match protocol.as_str() {
                "quality" => judge.judge_quality(&store, &identity, query_text, &record.response_text),
                "stance" => judge.judge_stance(&store, &identity, query_text, &record.response_text),
                "missingness" | "structural" => {
                    identity.reference_model = reference.map(str::to_string);
                    let reference_text = reference_texts
                        .get(&(record.dataset.clone(), record.query_id.clone()))
                        .ok_or_else(|| {
                            Error::MissingData(format!(
                                "reference answer for {}/{} not in run store",
                                record.dataset, record.query_id
                            ))
                        })?;
                    if protocol == "missingness" {
                        judge.judge_missingness(
                            &store,
                            &identity,
                            query_text,
                            reference_text,
                            &record.response_text,
                        )
                    } else {
                        judge.judge_structural(
                            &store,
                            &identity,
                            &record.response_text,
                            reference_text,
                        )
                    }
                }
                _ => unreachable!(),
            }
        });
        for result in results {
            let record = result?;
            summary.verdicts += 1;
            if record.is_parse_failure() {
                summary.parse_failures += 1;
            }
        }
    }
    Ok(summary)
}
