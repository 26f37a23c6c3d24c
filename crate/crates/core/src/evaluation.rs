//! Scores finished consultations: exact evidence-coverage arithmetic, LLM
//! judges for diagnostic correctness, and aggregation into report rows.
//!
//! Coverage needs no model in the loop — simulator replies cite evidence
//! indices, so the collected set is counted, not estimated. Correctness
//! does need one: a judge endpoint compares the final answer against the
//! reference diagnosis, with deliberately rigid output parsing (yes/no for
//! direct tasks, `\boxed{score}` per candidate for differentials) so that
//! a sloppy judge surfaces as a flag rather than a silent misgrade.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{relevant_set, CaseRecord, EvidenceKey, RelevantEvidenceSet, TaskKind};
use crate::gateway::{ContextWindow, Endpoint, GatewayError, Message};
use crate::orchestrator::ConsultationTranscript;
use crate::prompt;
use crate::strategies::Strategy;

/// Reminder sent when the direct judge answers with anything but yes/no.
const DIRECT_JUDGE_RETRY: &str = "Answer with a single word: Yes or No.";

/// Reminder sent when the differential judge emits too few boxed scores.
const DIFFERENTIAL_JUDGE_RETRY: &str =
    "Restate your evaluation, giving exactly one \\boxed{score} per candidate diagnosis, in the order listed.";

#[derive(Debug, Error)]
pub enum EvaluationError {
    /// The case declares no relevant evidence, so coverage is undefined.
    #[error("case {case_id} has an empty relevant-evidence set")]
    EmptyRelevantSet { case_id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Evidence coverage as an exact ratio of set sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcrResult {
    /// `|revealed ∩ relevant|`.
    pub collected: usize,
    /// `|relevant|`; never zero.
    pub relevant: usize,
}

impl IcrResult {
    pub fn fraction(&self) -> f64 {
        self.collected as f64 / self.relevant as f64
    }

    pub fn percentage(&self) -> f64 {
        100.0 * self.fraction()
    }
}

/// Count how much of the decision-relevant evidence was actually revealed.
///
/// Keys outside the relevant set are ignored; duplicates cannot occur
/// because both sides are sets.
pub fn compute_icr(
    revealed: &[EvidenceKey],
    relevant: &RelevantEvidenceSet,
) -> Result<IcrResult, EvaluationError> {
    if relevant.keys.is_empty() {
        return Err(EvaluationError::EmptyRelevantSet { case_id: relevant.case_id.clone() });
    }
    // Set intersection: a key revealed twice still counts once.
    let collected = revealed
        .iter()
        .filter(|key| relevant.keys.contains(key))
        .collect::<BTreeSet<_>>()
        .len();
    Ok(IcrResult { collected, relevant: relevant.keys.len() })
}

/// One judged answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrResult {
    /// Filled by [`score_case`]; empty when a judge is called standalone.
    pub case_id: String,
    pub task_kind: TaskKind,
    pub verdict: bool,
    /// Differential only: five scores in {0,1,2}, one per rank, missing
    /// candidates scored 0.
    pub per_item_scores: Option<Vec<u8>>,
    /// The judge's last raw output, kept for audit.
    pub judge_raw: String,
    pub flags: Vec<String>,
}

/// Whether a differential score list earns a correct verdict: only an exact
/// match (score 2) in the top slot counts.
pub fn differential_verdict(scores: &[u8]) -> bool {
    scores.first() == Some(&2)
}

fn judge_request(judge: &Endpoint, messages: Vec<Message>) -> crate::gateway::ChatRequest {
    // Judges get the whole instruction as a single environment message (no
    // role prompt) and are always pinned to temperature 0.
    let mut request = judge.request("", messages, ContextWindow::Unlimited);
    request.temperature = 0.0;
    request
}

fn normalize_yes_no(raw: &str) -> Option<bool> {
    let trimmed = raw.trim().to_lowercase();
    if trimmed.starts_with("yes") {
        Some(true)
    } else if trimmed.starts_with("no") {
        Some(false)
    } else {
        None
    }
}

/// Grade a single-diagnosis answer against the reference. Unparseable judge
/// output is re-prompted once, then degrades to an incorrect verdict with a
/// flag rather than an error.
pub async fn judge_direct(
    prediction: &str,
    reference: &str,
    judge: &Endpoint,
) -> Result<SrResult, EvaluationError> {
    let rendered = prompt::render(
        prompt::JUDGE_DIRECT,
        &[("answer", reference), ("diagnosis", prediction)],
    );
    let first = judge
        .complete(&judge_request(judge, vec![Message::environment(&rendered)]))
        .await?;
    if let Some(verdict) = normalize_yes_no(&first.text) {
        return Ok(SrResult {
            case_id: String::new(),
            task_kind: TaskKind::Direct,
            verdict,
            per_item_scores: None,
            judge_raw: first.text,
            flags: Vec::new(),
        });
    }

    let retry = judge_request(
        judge,
        vec![
            Message::environment(&rendered),
            Message::agent(&first.text),
            Message::environment(DIRECT_JUDGE_RETRY),
        ],
    );
    let second = judge.complete(&retry).await?;
    let (verdict, flags) = match normalize_yes_no(&second.text) {
        Some(v) => (v, vec!["judge_reprompted".to_string()]),
        None => (false, vec!["judge_unparseable".to_string()]),
    };
    Ok(SrResult {
        case_id: String::new(),
        task_kind: TaskKind::Direct,
        verdict,
        per_item_scores: None,
        judge_raw: second.text,
        flags,
    })
}

static BOXED_SCORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\boxed\{\s*(-?\d+)\s*\}").expect("valid regex"));

fn parse_boxed_scores(raw: &str) -> Vec<i64> {
    BOXED_SCORE
        .captures_iter(raw)
        .filter_map(|c| c[1].parse::<i64>().ok())
        .collect()
}

/// Grade a ranked differential against the reference. Tolerates one to five
/// candidates (absent ranks score 0); verdict is top-1 exact match.
pub async fn judge_differential(
    predictions: &[String],
    reference: &str,
    judge: &Endpoint,
) -> Result<SrResult, EvaluationError> {
    if predictions.is_empty() {
        return Ok(SrResult {
            case_id: String::new(),
            task_kind: TaskKind::Differential,
            verdict: false,
            per_item_scores: Some(vec![0; 5]),
            judge_raw: String::new(),
            flags: vec!["empty_differential".to_string()],
        });
    }
    let ranked: Vec<&String> = predictions.iter().take(5).collect();
    let student_answer = ranked
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}. {d}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let rendered = prompt::render(
        prompt::JUDGE_DIFFERENTIAL,
        &[("student_answer", &student_answer), ("final_diagnosis", reference)],
    );

    let mut flags = Vec::new();
    let first = judge
        .complete(&judge_request(judge, vec![Message::environment(&rendered)]))
        .await?;
    let mut raw = first.text;
    let mut scores = parse_boxed_scores(&raw);
    if scores.len() < ranked.len() {
        let retry = judge_request(
            judge,
            vec![
                Message::environment(&rendered),
                Message::agent(&raw),
                Message::environment(DIFFERENTIAL_JUDGE_RETRY),
            ],
        );
        let second = judge.complete(&retry).await?;
        raw = second.text;
        scores = parse_boxed_scores(&raw);
        flags.push("judge_reprompted".to_string());
        if scores.len() < ranked.len() {
            flags.push("judge_missing_scores".to_string());
        }
    }

    // One score per provided rank, clamped into the rubric's range; ranks
    // beyond the provided candidates score 0 by definition.
    let mut per_item = Vec::with_capacity(5);
    for i in 0..5 {
        if i >= ranked.len() {
            per_item.push(0);
            continue;
        }
        match scores.get(i) {
            Some(&s) if (0..=2).contains(&s) => per_item.push(s as u8),
            Some(&s) => {
                flags.push(format!("judge_score_out_of_range:{s}"));
                per_item.push(s.clamp(0, 2) as u8);
            }
            None => per_item.push(0),
        }
    }
    let verdict = differential_verdict(&per_item);
    Ok(SrResult {
        case_id: String::new(),
        task_kind: TaskKind::Differential,
        verdict,
        per_item_scores: Some(per_item),
        judge_raw: raw,
        flags,
    })
}

/// Everything the metrics file records about one consultation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub model: String,
    pub task_kind: TaskKind,
    pub collected: usize,
    pub relevant: usize,
    pub icr: f64,
    pub sr: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_item_scores: Option<Vec<u8>>,
    pub turns_used: u32,
    pub verifier_rounds: u32,
    pub flags: Vec<String>,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Score one finished consultation: exact coverage, then a judge call for
/// correctness. Failed episodes skip the judge and score incorrect.
pub async fn score_case(
    case: &CaseRecord,
    transcript: &ConsultationTranscript,
    judge: &Endpoint,
) -> Result<CaseMetrics, EvaluationError> {
    let relevant = relevant_set(case);
    let icr = compute_icr(&transcript.revealed, &relevant)?;

    let mut flags = transcript.coercion_flags.clone();
    if transcript.wrong_arity {
        flags.push("differential_wrong_arity".to_string());
    }

    let (sr, per_item_scores) = if transcript.succeeded() {
        let judged = match case.task_kind {
            TaskKind::Direct => {
                judge_direct(&transcript.final_diagnosis, &case.reference_diagnosis, judge).await?
            }
            TaskKind::Differential => {
                judge_differential(&transcript.final_items, &case.reference_diagnosis, judge)
                    .await?
            }
        };
        flags.extend(judged.flags);
        (judged.verdict, judged.per_item_scores)
    } else {
        (false, None)
    };

    Ok(CaseMetrics {
        case_id: case.case_id.clone(),
        dataset: case.dataset.clone(),
        strategy: transcript.strategy,
        model: transcript.model_label.clone(),
        task_kind: case.task_kind,
        collected: icr.collected,
        relevant: icr.relevant,
        icr: icr.fraction(),
        sr,
        per_item_scores,
        turns_used: transcript.turns_used,
        verifier_rounds: transcript.verifier_rounds,
        flags,
        failed: transcript.failed.is_some(),
        error: transcript.failed.as_ref().map(|f| format!("{}: {}", f.stage, f.error)),
    })
}

/// One aggregated report row. Percentages are unweighted means over the
/// group's cases (failed episodes count as incorrect but keep their
/// measured coverage and turn spend).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub strategy: Strategy,
    pub cases: usize,
    pub failures: usize,
    /// Success rate of the static upper bound for the same dataset and
    /// model, when such a run is present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ub_pct: Option<f64>,
    pub icr_pct: f64,
    pub sr_pct: f64,
    /// Relative loss against the upper bound: (UB − SR) / UB × 100.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_pct: Option<f64>,
    pub mean_turns: f64,
    pub mean_verifier_rounds: f64,
}

/// Fold per-case metrics into one row per (dataset, model, strategy),
/// pairing each interactive row with the static upper bound run on the
/// same dataset and model when one exists.
pub fn aggregate(results: &[CaseMetrics]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(String, String, &'static str), Vec<&CaseMetrics>> = BTreeMap::new();
    for row in results {
        groups
            .entry((row.dataset.clone(), row.model.clone(), row.strategy.label()))
            .or_default()
            .push(row);
    }

    let mut rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|((dataset, model, _), cases)| {
            let n = cases.len() as f64;
            let mean = |f: &dyn Fn(&CaseMetrics) -> f64| cases.iter().map(|c| f(c)).sum::<f64>() / n;
            ReportRow {
                dataset,
                model,
                strategy: cases[0].strategy,
                cases: cases.len(),
                failures: cases.iter().filter(|c| c.failed).count(),
                ub_pct: None,
                icr_pct: mean(&|c| c.icr) * 100.0,
                sr_pct: mean(&|c| if c.sr { 1.0 } else { 0.0 }) * 100.0,
                drop_pct: None,
                mean_turns: mean(&|c| c.turns_used as f64),
                mean_verifier_rounds: mean(&|c| c.verifier_rounds as f64),
            }
        })
        .collect();

    let upper_bounds: BTreeMap<(String, String), f64> = rows
        .iter()
        .filter(|r| r.strategy == Strategy::StaticUb)
        .map(|r| ((r.dataset.clone(), r.model.clone()), r.sr_pct))
        .collect();
    for row in &mut rows {
        if row.strategy == Strategy::StaticUb {
            continue;
        }
        if let Some(&ub) = upper_bounds.get(&(row.dataset.clone(), row.model.clone())) {
            row.ub_pct = Some(ub);
            if ub > 0.0 {
                row.drop_pct = Some((ub - row.sr_pct) / ub * 100.0);
            }
        }
    }
    rows
}

/// Coverage distributions conditioned on the diagnostic outcome: ten bins
/// of width 0.1 over [0, 1], the top bin closed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcrHistogram {
    pub success: [usize; 10],
    pub failure: [usize; 10],
}

impl IcrHistogram {
    pub fn total(&self) -> usize {
        self.success.iter().sum::<usize>() + self.failure.iter().sum::<usize>()
    }
}

fn icr_bin(icr: f64) -> usize {
    ((icr * 10.0).floor() as usize).min(9)
}

/// Bucket every case's coverage by whether its diagnosis was judged
/// correct.
pub fn icr_histograms(results: &[CaseMetrics]) -> IcrHistogram {
    let mut histogram = IcrHistogram { success: [0; 10], failure: [0; 10] };
    for row in results {
        let side =
            if row.sr { &mut histogram.success } else { &mut histogram.failure };
        side[icr_bin(row.icr)] += 1;
    }
    histogram
}

/// One (model, strategy) point for coverage-vs-correctness scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model: String,
    pub strategy: Strategy,
    pub mean_icr: f64,
    pub mean_sr: f64,
}

/// Collapse per-case metrics to one mean point per (model, strategy).
pub fn scatter_points(results: &[CaseMetrics]) -> Vec<ScatterPoint> {
    let mut groups: BTreeMap<(String, &'static str), Vec<&CaseMetrics>> = BTreeMap::new();
    for row in results {
        groups.entry((row.model.clone(), row.strategy.label())).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((model, _), cases)| {
            let n = cases.len() as f64;
            ScatterPoint {
                model,
                strategy: cases[0].strategy,
                mean_icr: cases.iter().map(|c| c.icr).sum::<f64>() / n,
                mean_sr: cases.iter().filter(|c| c.sr).count() as f64 / n,
            }
        })
        .collect()
}
