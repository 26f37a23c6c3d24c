//! Builds atomic-evidence cases from raw narratives and verifies that the
//! decomposition preserves diagnostic signal.
//!
//! A constructor model splits a raw case into two indexed fact lists
//! (patient history vs. examinations). The split is only trusted after
//! mechanical validation — index contiguity, non-empty bodies, no fact
//! present in both lists — because a sloppy decomposition would silently
//! corrupt every downstream coverage number. The companion sanity check
//! diagnoses each case twice from static input (original narrative vs.
//! concatenated facts) and compares success rates: a material gap means
//! the decomposition lost information.

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashSet;
use thiserror::Error;

use crate::case::{validate_fact_list, CaseError, CaseRecord, Category, TaskKind};
use crate::evaluation::{judge_direct, judge_differential, EvaluationError};
use crate::gateway::{ContextWindow, Endpoint, GatewayError, Message};
use crate::orchestrator::{run_static_upper_bound, run_static_with_input, ConsultationTranscript};
use crate::prompt;

/// Correction sent when the constructor's reply is not parseable JSON.
const CONSTRUCTION_RETRY: &str = "Your previous output could not be parsed. Respond with a single JSON object of the form {\"patient_facts\": [\"1. ...\"], \"exam_facts\": [\"1. ...\"]} and nothing else.";

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid narrative JSON in `{path}`: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("constructor output is not a patient_facts/exam_facts JSON object: {detail}")]
    UnparseableConstruction { detail: String, raw: String },
    #[error("{list} fact list breaks the indexing rules: {reason}")]
    IndexingViolation { list: Category, reason: String },
    #[error("fact duplicated across patient and exam lists: {text:?}")]
    CrossListDuplicate { text: String },
    #[error("case `{case_id}` has no original text to sanity-check against")]
    MissingOriginalText { case_id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

#[derive(Debug, Deserialize)]
struct ConstructionReply {
    patient_facts: Vec<String>,
    exam_facts: Vec<String>,
}

/// Accept a bare JSON object or one embedded in prose/code fences.
fn parse_reply(raw: &str) -> Result<ConstructionReply, String> {
    let trimmed = raw.trim();
    if let Ok(reply) = serde_json::from_str::<ConstructionReply>(trimmed) {
        return Ok(reply);
    }
    if let (Some(start), Some(end)) = (trimmed.find('{'), trimmed.rfind('}')) {
        if start < end {
            if let Ok(reply) = serde_json::from_str::<ConstructionReply>(&trimmed[start..=end]) {
                return Ok(reply);
            }
        }
    }
    Err("expected a JSON object with `patient_facts` and `exam_facts` string arrays".to_string())
}

/// Enforce the decomposition rules the constructor was given: contiguous
/// `1. `-style indexing with non-empty bodies per list, and no fact body
/// appearing in both lists (bodies are compared so the positional index
/// prefixes cannot mask a duplicate).
fn validate_lists(patient: &[String], exam: &[String]) -> Result<(), ConstructionError> {
    let patient = validate_fact_list(patient, Category::Patient)
        .map_err(|reason| ConstructionError::IndexingViolation { list: Category::Patient, reason })?;
    let exam = validate_fact_list(exam, Category::Exam)
        .map_err(|reason| ConstructionError::IndexingViolation { list: Category::Exam, reason })?;
    let patient_bodies: HashSet<&str> = patient.iter().map(|e| e.body()).collect();
    if let Some(dup) = exam.iter().find(|e| patient_bodies.contains(e.body())) {
        return Err(ConstructionError::CrossListDuplicate { text: dup.body().to_string() });
    }
    Ok(())
}

/// Decompose one raw case (as JSON text) into validated patient and exam
/// fact lists. An unparseable constructor reply is corrected once before
/// failing; rule violations fail immediately, since re-asking a model that
/// followed the format but broke the rules rarely converges.
pub async fn atomize(
    original_case_json: &str,
    constructor: &Endpoint,
) -> Result<(Vec<String>, Vec<String>), ConstructionError> {
    let rendered =
        prompt::render(prompt::CONSTRUCTION, &[("case_json", original_case_json)]);
    let first = constructor
        .complete(&constructor.request(
            "",
            vec![Message::environment(&rendered)],
            ContextWindow::Unlimited,
        ))
        .await?;
    let reply = match parse_reply(&first.text) {
        Ok(reply) => reply,
        Err(detail) => {
            tracing::warn!(%detail, "constructor reply unparseable; correcting once");
            let retry = constructor.request(
                "",
                vec![
                    Message::environment(&rendered),
                    Message::agent(&first.text),
                    Message::environment(CONSTRUCTION_RETRY),
                ],
                ContextWindow::Unlimited,
            );
            let second = constructor.complete(&retry).await?;
            parse_reply(&second.text).map_err(|detail| {
                ConstructionError::UnparseableConstruction { detail, raw: second.text }
            })?
        }
    };
    validate_lists(&reply.patient_facts, &reply.exam_facts)?;
    Ok((reply.patient_facts, reply.exam_facts))
}

/// Identity of a case being constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub case_id: String,
    pub dataset: String,
    pub task_kind: TaskKind,
    pub reference_diagnosis: String,
}

/// Atomize one narrative and wrap the result in a fully validated case,
/// keeping the original text for later sanity checks.
pub async fn build_case(
    meta: &CaseMeta,
    original_text: &str,
    constructor: &Endpoint,
) -> Result<CaseRecord, ConstructionError> {
    let (patient, exam) = atomize(original_text, constructor).await?;
    let mut record = CaseRecord::new(
        &meta.case_id,
        &meta.dataset,
        meta.task_kind,
        &meta.reference_diagnosis,
        patient,
        exam,
    )?;
    record.original_text = Some(original_text.to_string());
    Ok(record)
}

/// One raw input case awaiting decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeCase {
    pub case_id: String,
    pub dataset: String,
    pub task_kind: TaskKind,
    pub reference_diagnosis: String,
    pub original_text: String,
}

/// Read a JSON array of raw narrative cases.
pub fn load_narratives(path: &std::path::Path) -> Result<Vec<NarrativeCase>, ConstructionError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConstructionError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| ConstructionError::Json { path: path.display().to_string(), source })
}

/// Result of constructing a batch: the cases that validated, plus one
/// (case_id, reason) entry per narrative that did not.
#[derive(Debug)]
pub struct ConstructionOutcome {
    pub cases: Vec<CaseRecord>,
    pub failures: Vec<(String, String)>,
}

/// Atomize narratives concurrently (up to `parallelism` at once, one
/// constructor session each). A narrative that fails construction is
/// reported, not fatal; output order follows input order.
pub async fn construct_cases(
    narratives: &[NarrativeCase],
    constructor: &Endpoint,
    parallelism: usize,
) -> ConstructionOutcome {
    assert!(parallelism >= 1, "parallelism must be at least 1");
    let results: Vec<(String, Result<CaseRecord, ConstructionError>)> =
        futures::stream::iter(narratives.iter().map(|narrative| {
            let constructor = constructor.session();
            async move {
                let meta = CaseMeta {
                    case_id: narrative.case_id.clone(),
                    dataset: narrative.dataset.clone(),
                    task_kind: narrative.task_kind,
                    reference_diagnosis: narrative.reference_diagnosis.clone(),
                };
                let built = build_case(&meta, &narrative.original_text, &constructor).await;
                (narrative.case_id.clone(), built)
            }
        }))
        .buffered(parallelism)
        .collect()
        .await;

    let mut outcome = ConstructionOutcome { cases: Vec::new(), failures: Vec::new() };
    for (case_id, result) in results {
        match result {
            Ok(case) => outcome.cases.push(case),
            Err(e) => {
                tracing::warn!(%case_id, error = %e, "construction failed");
                outcome.failures.push((case_id, e.to_string()));
            }
        }
    }
    outcome
}

/// Evidence-count summary of a constructed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub cases: usize,
    pub mean_patient_evidences: f64,
    pub mean_exam_evidences: f64,
}

/// Per-dataset means of patient and exam evidence counts.
pub fn dataset_stats(cases: &[CaseRecord]) -> Vec<DatasetStats> {
    let mut groups: BTreeMap<&str, Vec<&CaseRecord>> = BTreeMap::new();
    for case in cases {
        groups.entry(case.dataset.as_str()).or_default().push(case);
    }
    groups
        .into_iter()
        .map(|(dataset, cases)| {
            let n = cases.len() as f64;
            DatasetStats {
                dataset: dataset.to_string(),
                cases: cases.len(),
                mean_patient_evidences: cases
                    .iter()
                    .map(|c| c.patient_evidences.len() as f64)
                    .sum::<f64>()
                    / n,
                mean_exam_evidences: cases
                    .iter()
                    .map(|c| c.exam_evidences.len() as f64)
                    .sum::<f64>()
                    / n,
            }
        })
        .collect()
}

/// Paired success rates for one dataset: diagnosing from the original
/// narrative vs. from the concatenated atomic facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityRow {
    pub dataset: String,
    pub cases: usize,
    pub sr_original_pct: f64,
    pub sr_concatenated_pct: f64,
    /// Absolute gap between the two rates, in percentage points.
    pub gap_pct: f64,
}

async fn judged_verdict(
    case: &CaseRecord,
    transcript: &ConsultationTranscript,
    judge: &Endpoint,
) -> Result<bool, ConstructionError> {
    if !transcript.succeeded() {
        return Ok(false);
    }
    let result = match case.task_kind {
        TaskKind::Direct => {
            judge_direct(&transcript.final_diagnosis, &case.reference_diagnosis, judge).await?
        }
        TaskKind::Differential => {
            judge_differential(&transcript.final_items, &case.reference_diagnosis, judge).await?
        }
    };
    Ok(result.verdict)
}

/// Diagnose every case twice from static input — original narrative, then
/// concatenated facts — and report paired success rates per dataset.
///
/// Cases run sequentially (original before concatenated) with endpoints
/// forked per case, so scripted replays are position-stable.
pub async fn sanity_check(
    cases: &[CaseRecord],
    reasoner: &Endpoint,
    judge: &Endpoint,
) -> Result<Vec<SanityRow>, ConstructionError> {
    struct Tally {
        cases: usize,
        original_correct: usize,
        concatenated_correct: usize,
    }
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();

    for case in cases {
        let original = case.original_text.as_deref().ok_or_else(|| {
            ConstructionError::MissingOriginalText { case_id: case.case_id.clone() }
        })?;
        let case_reasoner = reasoner.session();
        let case_judge = judge.session();

        let on_original = run_static_with_input(
            case,
            original,
            &case_reasoner,
            "Original narrative provided upfront; no interaction.",
        )
        .await;
        let on_concatenated = run_static_upper_bound(case, &case_reasoner).await;

        let tally = tallies.entry(case.dataset.clone()).or_insert(Tally {
            cases: 0,
            original_correct: 0,
            concatenated_correct: 0,
        });
        tally.cases += 1;
        if judged_verdict(case, &on_original, &case_judge).await? {
            tally.original_correct += 1;
        }
        if judged_verdict(case, &on_concatenated, &case_judge).await? {
            tally.concatenated_correct += 1;
        }
    }

    Ok(tallies
        .into_iter()
        .map(|(dataset, t)| {
            let n = t.cases as f64;
            let sr_original_pct = 100.0 * t.original_correct as f64 / n;
            let sr_concatenated_pct = 100.0 * t.concatenated_correct as f64 / n;
            SanityRow {
                dataset,
                cases: t.cases,
                sr_original_pct,
                sr_concatenated_pct,
                gap_pct: (sr_original_pct - sr_concatenated_pct).abs(),
            }
        })
        .collect())
}
