//! The simulated patient and simulated reporter: evidence-grounded
//! responders plus the revealed-evidence tracker that feeds coverage
//! scoring.
//!
//! Both responders are stateless by construction — every call builds a
//! fresh request carrying only the current question under a one-message
//! context window at temperature 0 — so nothing from earlier turns can leak
//! into a reply.

use std::collections::BTreeSet;

use crate::case::{AtomicEvidence, CaseRecord, EvidenceKey};
use crate::gateway::{ChatRequest, ContextWindow, Endpoint, GatewayError, Message};
use crate::prompt;
use crate::text::{leading_index, section_after};

/// Canonical reply when the patient output is unusable even after the
/// format-reminder retry.
pub const UNCERTAIN_RESPONSE: &str = "I'm sorry, I don't have that information.";

/// Appended to the re-prompt after a malformed patient output.
const PATIENT_FORMAT_REMINDER: &str = "\n\nREMINDER: Answer using exactly this format:\n[REFERENCE] <the exact evidence string(s) you rely on, including the index, or N/A>\n[RESPONSE] <your reply as the patient>";

#[derive(Debug, thiserror::Error)]
pub enum EnvironmentError {
    #[error("questions and test requests must be non-empty")]
    EmptyInput,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// A simulated patient's answer to one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientReply {
    /// Cited patient-category evidences, at most two.
    pub referenced: Vec<EvidenceKey>,
    pub response_text: String,
    /// Full model output.
    pub raw: String,
    /// Cited indices that do not exist in the case: logged, never credited.
    pub unknown_references: Vec<u32>,
    /// True when both parse attempts failed and the uncertain fallback was
    /// substituted.
    pub tag_parse_failed: bool,
    /// Total model latency behind this reply (zero under scripted backends).
    pub latency_ms: u64,
}

/// A simulated reporter's answer to one test request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReporterReply {
    /// Matched exam-category evidences; unlike the patient, uncapped.
    pub referenced: Vec<EvidenceKey>,
    /// The matched fact strings exactly as stored in the case, one per
    /// line — or "Normal" when nothing matched.
    pub response_text: String,
    /// True iff no known exam index parsed from the output.
    pub is_normal_fallback: bool,
    /// Full model output.
    pub raw: String,
    pub unknown_references: Vec<u32>,
    /// Total model latency behind this reply (zero under scripted backends).
    pub latency_ms: u64,
}

/// Evidence disclosed so far in one consultation.
///
/// Grows monotonically; the per-turn log keeps only genuinely new pairs, so
/// folding the log reproduces the full set exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RevealedSet {
    pairs: BTreeSet<EvidenceKey>,
    log: Vec<(u32, Vec<EvidenceKey>)>,
}

impl RevealedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tracker whose entire contents were provided before any
    /// interaction, logged under turn 0 — used by the static mode, where
    /// every evidence is handed over upfront.
    pub fn upfront(keys: impl IntoIterator<Item = EvidenceKey>) -> Self {
        let pairs: BTreeSet<EvidenceKey> = keys.into_iter().collect();
        let log = if pairs.is_empty() {
            Vec::new()
        } else {
            vec![(0, pairs.iter().copied().collect())]
        };
        Self { pairs, log }
    }

    /// Union-insert `reply_refs` under `turn`, returning the genuinely new
    /// pairs. Idempotent for already-revealed pairs.
    pub fn record_reveal(&mut self, turn: u32, reply_refs: &[EvidenceKey]) -> Vec<EvidenceKey> {
        debug_assert!(turn >= 1, "turns are 1-based");
        let new: Vec<EvidenceKey> =
            reply_refs.iter().copied().filter(|k| self.pairs.insert(*k)).collect();
        if !new.is_empty() {
            self.log.push((turn, new.clone()));
        }
        new
    }

    pub fn pairs(&self) -> &BTreeSet<EvidenceKey> {
        &self.pairs
    }

    /// Per-turn reveal history: (turn, newly revealed pairs).
    pub fn log(&self) -> &[(u32, Vec<EvidenceKey>)] {
        &self.log
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The indexed fact lines injected into a simulator prompt.
fn evidence_block(evidences: &[AtomicEvidence]) -> String {
    evidences.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n")
}

/// The exact request a patient call sends: fresh history (just the
/// question), one-message window, temperature 0.
pub fn patient_request(case: &CaseRecord, question: &str, endpoint: &Endpoint) -> ChatRequest {
    let prompt = prompt::render(
        prompt::PATIENT,
        &[("patient_evidences", &evidence_block(&case.patient_evidences))],
    );
    let mut request =
        endpoint.request(prompt, vec![Message::environment(question)], ContextWindow::last(1));
    request.temperature = 0.0;
    request
}

/// The exact request a reporter call sends; stateless like the patient's.
pub fn reporter_request(case: &CaseRecord, test_request: &str, endpoint: &Endpoint) -> ChatRequest {
    let prompt = prompt::render(
        prompt::REPORTER,
        &[("examination_evidences", &evidence_block(&case.exam_evidences))],
    );
    let mut request =
        endpoint.request(prompt, vec![Message::environment(test_request)], ContextWindow::last(1));
    request.temperature = 0.0;
    request
}

/// Ask the simulated patient one question.
///
/// Parses the `[REFERENCE]`/`[RESPONSE]` tags, maps each referenced line to
/// an evidence index by its leading integer, and caps grounded references
/// at two. A malformed output earns one re-prompt with a format reminder;
/// if that also fails, the reply degrades to an uncertain answer with no
/// references rather than failing the consultation.
pub async fn patient_respond(
    case: &CaseRecord,
    question: &str,
    endpoint: &Endpoint,
) -> Result<PatientReply, EnvironmentError> {
    if question.trim().is_empty() {
        return Err(EnvironmentError::EmptyInput);
    }

    let request = patient_request(case, question, endpoint);
    let first = endpoint.complete(&request).await?;
    let mut latency_ms = first.latency.as_millis() as u64;
    if let Some(mut reply) = parse_patient_output(&first.text, case) {
        reply.latency_ms = latency_ms;
        return Ok(reply);
    }

    tracing::warn!(case_id = %case.case_id, "malformed patient output; re-prompting once");
    let reminder_question = format!("{question}{PATIENT_FORMAT_REMINDER}");
    let retry_request = patient_request(case, &reminder_question, endpoint);
    let retry = endpoint.complete(&retry_request).await?;
    latency_ms += retry.latency.as_millis() as u64;
    if let Some(mut reply) = parse_patient_output(&retry.text, case) {
        reply.latency_ms = latency_ms;
        return Ok(reply);
    }

    tracing::warn!(case_id = %case.case_id, "patient output unusable twice; uncertain fallback");
    Ok(PatientReply {
        referenced: Vec::new(),
        response_text: UNCERTAIN_RESPONSE.to_string(),
        raw: retry.text,
        unknown_references: Vec::new(),
        tag_parse_failed: true,
        latency_ms,
    })
}

/// Ask the simulated reporter for one test result.
///
/// Matched facts are returned exactly as stored in the case (the model's
/// own wording is kept only as `raw`); when no known exam index parses, the
/// reply is the "Normal" fallback.
pub async fn reporter_respond(
    case: &CaseRecord,
    test_request: &str,
    endpoint: &Endpoint,
) -> Result<ReporterReply, EnvironmentError> {
    if test_request.trim().is_empty() {
        return Err(EnvironmentError::EmptyInput);
    }

    let request = reporter_request(case, test_request, endpoint);
    let completion = endpoint.complete(&request).await?;
    let mut reply = parse_reporter_output(&completion.text, case);
    reply.latency_ms = completion.latency.as_millis() as u64;
    Ok(reply)
}

/// Parse one patient output; `None` means neither tag was found.
fn parse_patient_output(raw: &str, case: &CaseRecord) -> Option<PatientReply> {
    let reference = section_after(raw, "[REFERENCE]", &["[RESPONSE]"]);
    let response = section_after(raw, "[RESPONSE]", &["[REFERENCE]"]);
    if reference.is_none() && response.is_none() {
        return None;
    }

    let mut referenced = Vec::new();
    let mut unknown = Vec::new();
    if let Some(section) = reference {
        for (pos, line) in section.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
            // An explicit leading N/A declares "nothing to cite" and wins.
            if line.eq_ignore_ascii_case("n/a") {
                if pos == 0 {
                    referenced.clear();
                    unknown.clear();
                    break;
                }
                continue;
            }
            match leading_index(line) {
                Some(i) if (1..=case.patient_evidences.len() as u32).contains(&i) => {
                    let key = EvidenceKey::patient(i);
                    if !referenced.contains(&key) {
                        referenced.push(key);
                    }
                }
                Some(i) => {
                    tracing::warn!(case_id = %case.case_id, index = i, "unknown patient reference dropped");
                    unknown.push(i);
                }
                None => {}
            }
        }
    }
    // The cap applies to grounded citations: at most two evidences may
    // support one reply.
    referenced.truncate(2);

    let response_text = match response {
        Some(r) if !r.is_empty() => r.to_string(),
        _ => UNCERTAIN_RESPONSE.to_string(),
    };

    Some(PatientReply {
        referenced,
        response_text,
        raw: raw.to_string(),
        unknown_references: unknown,
        tag_parse_failed: false,
        latency_ms: 0,
    })
}

fn parse_reporter_output(raw: &str, case: &CaseRecord) -> ReporterReply {
    let mut referenced: Vec<EvidenceKey> = Vec::new();
    let mut unknown = Vec::new();
    for line in raw.lines() {
        let Some(i) = leading_index(line) else { continue };
        if (1..=case.exam_evidences.len() as u32).contains(&i) {
            let key = EvidenceKey::exam(i);
            if !referenced.contains(&key) {
                referenced.push(key);
            }
        } else {
            tracing::warn!(case_id = %case.case_id, index = i, "unknown exam reference dropped");
            unknown.push(i);
        }
    }

    if referenced.is_empty() {
        return ReporterReply {
            referenced,
            response_text: "Normal".to_string(),
            is_normal_fallback: true,
            raw: raw.to_string(),
            unknown_references: unknown,
            latency_ms: 0,
        };
    }

    let response_text = referenced
        .iter()
        .filter_map(|k| case.evidence(k))
        .map(|e| e.text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    ReporterReply {
        referenced,
        response_text,
        is_normal_fallback: false,
        raw: raw.to_string(),
        unknown_references: unknown,
        latency_ms: 0,
    }
}
