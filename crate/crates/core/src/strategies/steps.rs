//! Model-calling steps shared by the strategies: doctor turns, organizer
//! summaries, reasoner diagnoses, and verifier verdicts.
//!
//! Every step applies the same resilience policy: one re-prompt naming the
//! problem, then a hard error (doctor steps) or a documented fail-safe
//! (verifier verdicts default to Pass so runs always terminate).

use crate::case::TaskKind;
use crate::gateway::{ContextWindow, Endpoint, GatewayError, Message};
use crate::prompt;
use crate::text::{section_after, split_enumerated_items};

use super::action::{parse_action, ActionParseError, DoctorAction, Grammar};
use super::{task_description, task_output_format};

/// Task framing shared by every doctor-side prompt in one consultation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoctorTask {
    pub kind: TaskKind,
    pub max_turns: u32,
}

/// Interaction-budget position shown to the verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnState {
    pub used: u32,
    pub max: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("doctor output unusable even after a retry: {0}")]
    Action(ActionParseError),
    #[error("organizer output had no usable [SUMMARY] section after a retry")]
    MissingSummaryTag { raw: String },
    #[error("reasoner output had no usable [DIAGNOSIS] section after a retry")]
    MissingDiagnosisTag { raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One successfully parsed doctor turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub action: DoctorAction,
    /// The raw output the action was parsed from.
    pub raw: String,
    /// True when the first output was malformed and the retry succeeded.
    pub reprompted: bool,
    /// Total model latency behind this turn (zero under scripted backends).
    pub latency_ms: u64,
}

/// One organizer call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryOutcome {
    pub summary: String,
    pub thought: Option<String>,
    pub raw: String,
    pub reprompted: bool,
    /// Total model latency behind this call (zero under scripted backends).
    pub latency_ms: u64,
}

/// One reasoner call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosisOutcome {
    /// The `[DIAGNOSIS]` payload as written.
    pub text: String,
    /// Enumerated diagnoses: the parsed list for differential tasks, the
    /// single payload for direct ones.
    pub items: Vec<String>,
    /// Differential payload that still did not hold five items after the
    /// retry; judged as-is, flagged in the report.
    pub wrong_arity: bool,
    pub thought: Option<String>,
    pub raw: String,
    pub reprompted: bool,
    /// Total model latency behind this call (zero under scripted backends).
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pass,
    Incomplete,
}

/// One verifier call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub decision: Decision,
    /// Non-empty exactly when the decision is Incomplete.
    pub feedback: String,
    pub thought: String,
    /// True when the decision was forced: Incomplete at the final turn, or
    /// an unparseable verdict defaulted to Pass.
    pub coerced: bool,
    pub raw: String,
    /// Total model latency behind this call (zero under scripted backends).
    pub latency_ms: u64,
}

fn doctor_prompt(template: &str, task: DoctorTask) -> String {
    prompt::render(
        template,
        &[
            ("task_description", task_description(task.kind)),
            ("max_turns", &task.max_turns.to_string()),
            ("task_output_format", task_output_format(task.kind)),
        ],
    )
}

fn action_reminder(err: &ActionParseError, grammar: Grammar) -> String {
    let legal = match grammar {
        Grammar::Plain => "[QUERY], [TEST], or [DIAGNOSIS]",
        Grammar::ThoughtAct => "[THOUGHT] followed by exactly one of [QUERY], [TEST], or [DIAGNOSIS]",
        Grammar::CollectorFinish => "[QUERY], [TEST], or [FINISH]",
    };
    format!("Your previous output could not be used ({err}). Respond again using the required format: {legal}.")
}

/// One doctor turn: render, call, parse; on a malformed output, re-prompt
/// once with the malformed text and a correction, then fail hard.
async fn doctor_step(
    template: &str,
    grammar: Grammar,
    history: &[Message],
    task: DoctorTask,
    endpoint: &Endpoint,
) -> Result<StepOutcome, StrategyError> {
    let role_prompt = doctor_prompt(template, task);
    let request = endpoint.request(&role_prompt, history.to_vec(), ContextWindow::Unlimited);
    let first = endpoint.complete(&request).await?;
    let mut latency_ms = first.latency.as_millis() as u64;
    let raw = first.text;
    let first_err = match parse_action(&raw, grammar) {
        Ok(action) => return Ok(StepOutcome { action, raw, reprompted: false, latency_ms }),
        Err(e) => e,
    };

    tracing::warn!(error = %first_err, "malformed doctor output; re-prompting once");
    let mut retry_history = history.to_vec();
    retry_history.push(Message::agent(&raw));
    retry_history.push(Message::environment(action_reminder(&first_err, grammar)));
    let retry = endpoint.request(&role_prompt, retry_history, ContextWindow::Unlimited);
    let second = endpoint.complete(&retry).await?;
    latency_ms += second.latency.as_millis() as u64;
    let raw = second.text;
    match parse_action(&raw, grammar) {
        Ok(action) => Ok(StepOutcome { action, raw, reprompted: true, latency_ms }),
        Err(e) => Err(StrategyError::Action(e)),
    }
}

/// Direct-acting doctor turn.
pub async fn baseline_step(
    history: &[Message],
    task: DoctorTask,
    endpoint: &Endpoint,
) -> Result<StepOutcome, StrategyError> {
    doctor_step(prompt::DOCTOR_BASELINE, Grammar::Plain, history, task, endpoint).await
}

/// Thought-then-act doctor turn.
pub async fn react_step(
    history: &[Message],
    task: DoctorTask,
    endpoint: &Endpoint,
) -> Result<StepOutcome, StrategyError> {
    doctor_step(prompt::DOCTOR_REACT, Grammar::ThoughtAct, history, task, endpoint).await
}

/// Evidence-gathering turn for the collect phase: may finish, never
/// diagnoses.
pub async fn collector_step(
    history: &[Message],
    task: DoctorTask,
    endpoint: &Endpoint,
) -> Result<StepOutcome, StrategyError> {
    doctor_step(prompt::COLLECTOR, Grammar::CollectorFinish, history, task, endpoint).await
}

fn extract_summary(raw: &str) -> Option<(String, Option<String>)> {
    let summary = section_after(raw, "[SUMMARY]", &["[THOUGHT]"]).filter(|s| !s.is_empty())?;
    let thought = section_after(raw, "[THOUGHT]", &["[SUMMARY]"]).map(str::to_string);
    Some((summary.to_string(), thought))
}

/// Condense a finished collection dialogue into a structured clinical
/// summary. The organizer's `[THOUGHT]` block is captured for the
/// transcript but excluded from the returned summary.
pub async fn summarize(dialogue: &str, endpoint: &Endpoint) -> Result<SummaryOutcome, StrategyError> {
    let request = endpoint.request(
        prompt::ORGANIZER,
        vec![Message::environment(dialogue)],
        ContextWindow::Unlimited,
    );
    let first = endpoint.complete(&request).await?;
    let mut latency_ms = first.latency.as_millis() as u64;
    let raw = first.text;
    if let Some((summary, thought)) = extract_summary(&raw) {
        return Ok(SummaryOutcome { summary, thought, raw, reprompted: false, latency_ms });
    }

    tracing::warn!("organizer output had no [SUMMARY] section; re-prompting once");
    let retry = endpoint.request(
        prompt::ORGANIZER,
        vec![
            Message::environment(dialogue),
            Message::agent(&raw),
            Message::environment(
                "Your previous output had no [SUMMARY] section. Respond again with a [THOUGHT] section followed by a [SUMMARY] section.",
            ),
        ],
        ContextWindow::Unlimited,
    );
    let second = endpoint.complete(&retry).await?;
    latency_ms += second.latency.as_millis() as u64;
    let raw = second.text;
    match extract_summary(&raw) {
        Some((summary, thought)) => {
            Ok(SummaryOutcome { summary, thought, raw, reprompted: true, latency_ms })
        }
        None => Err(StrategyError::MissingSummaryTag { raw }),
    }
}

struct ParsedDiagnosis {
    text: String,
    items: Vec<String>,
    wrong_arity: bool,
    thought: Option<String>,
}

fn extract_diagnosis(raw: &str, kind: TaskKind) -> Option<ParsedDiagnosis> {
    let payload = section_after(raw, "[DIAGNOSIS]", &["[THOUGHT]"]).filter(|s| !s.is_empty())?;
    let thought = section_after(raw, "[THOUGHT]", &["[DIAGNOSIS]"]).map(str::to_string);
    let (items, wrong_arity) = match kind {
        TaskKind::Direct => (vec![payload.to_string()], false),
        TaskKind::Differential => {
            let items = split_enumerated_items(payload);
            let wrong = items.len() != 5;
            (items, wrong)
        }
    };
    Some(ParsedDiagnosis { text: payload.to_string(), items, wrong_arity, thought })
}

/// Turn a clinical summary (or upfront evidence narrative) into a final
/// diagnosis.
///
/// A missing `[DIAGNOSIS]` section or a differential list without five
/// items earns one re-prompt; after that, a missing section is a hard
/// error while a wrong-arity list is accepted as-is and flagged.
pub async fn diagnose_from_summary(
    summary: &str,
    kind: TaskKind,
    endpoint: &Endpoint,
) -> Result<DiagnosisOutcome, StrategyError> {
    let role_prompt = prompt::render(
        prompt::REASONER,
        &[
            ("task_description", task_description(kind)),
            ("task_output_format", task_output_format(kind)),
        ],
    );
    let request = endpoint.request(
        &role_prompt,
        vec![Message::environment(summary)],
        ContextWindow::Unlimited,
    );
    let completion = endpoint.complete(&request).await?;
    let mut latency_ms = completion.latency.as_millis() as u64;
    let raw = completion.text;
    let first = extract_diagnosis(&raw, kind);
    if let Some(parsed) = &first {
        if !parsed.wrong_arity {
            return Ok(DiagnosisOutcome {
                text: parsed.text.clone(),
                items: parsed.items.clone(),
                wrong_arity: false,
                thought: parsed.thought.clone(),
                raw,
                reprompted: false,
                latency_ms,
            });
        }
    }

    tracing::warn!("unusable reasoner output; re-prompting once");
    let retry = endpoint.request(
        &role_prompt,
        vec![
            Message::environment(summary),
            Message::agent(&raw),
            Message::environment(format!(
                "Your previous output was not usable. Respond again with a [DIAGNOSIS] section containing the {}.",
                task_output_format(kind)
            )),
        ],
        ContextWindow::Unlimited,
    );
    let completion = endpoint.complete(&retry).await?;
    latency_ms += completion.latency.as_millis() as u64;
    let raw = completion.text;
    match extract_diagnosis(&raw, kind) {
        Some(parsed) => {
            if parsed.wrong_arity {
                tracing::warn!(items = parsed.items.len(), "differential list still lacks five items; judging as-is");
            }
            Ok(DiagnosisOutcome {
                text: parsed.text,
                items: parsed.items,
                wrong_arity: parsed.wrong_arity,
                thought: parsed.thought,
                raw,
                reprompted: true,
                latency_ms,
            })
        }
        None => Err(StrategyError::MissingDiagnosisTag { raw }),
    }
}

fn verifier_input(summary: &str, diagnosis: &str, turns: TurnState) -> String {
    format!(
        "Case summary:\n{summary}\n\nProposed diagnosis:\n{diagnosis}\n\nTurn {}/{}.",
        turns.used, turns.max
    )
}

fn parse_verdict(raw: &str) -> Option<(Decision, String, String)> {
    let decision_text = section_after(raw, "[DECISION]", &["[FEEDBACK]", "[THOUGHT]"])?;
    let upper = decision_text.to_uppercase();
    let decision = if upper.contains("INCOMPLETE") || upper.contains("REJECT") {
        Decision::Incomplete
    } else if upper.contains("PASS") {
        Decision::Pass
    } else {
        return None;
    };
    let feedback = section_after(raw, "[FEEDBACK]", &["[DECISION]", "[THOUGHT]"])
        .unwrap_or("")
        .to_string();
    let thought = section_after(raw, "[THOUGHT]", &["[DECISION]", "[FEEDBACK]"])
        .unwrap_or("")
        .to_string();
    Some((decision, feedback, thought))
}

/// Judge whether a proposed diagnosis is sufficiently supported.
///
/// Two coercions keep runs terminating: Incomplete at the final turn is
/// forced to Pass (the verifier may not extend an exhausted budget), and a
/// verdict that stays unparseable after the retry defaults to Pass. Both
/// set the `coerced` flag so reports can audit them.
pub async fn verify(
    summary: &str,
    diagnosis: &str,
    turns: TurnState,
    kind: TaskKind,
    endpoint: &Endpoint,
) -> Result<Verdict, StrategyError> {
    let role_prompt = prompt::render(prompt::VERIFIER, &[("task_description", task_description(kind))]);
    let input = verifier_input(summary, diagnosis, turns);
    let request = endpoint.request(
        &role_prompt,
        vec![Message::environment(&input)],
        ContextWindow::Unlimited,
    );
    let completion = endpoint.complete(&request).await?;
    let mut latency_ms = completion.latency.as_millis() as u64;
    let raw = completion.text;

    let parsed = match parse_verdict(&raw) {
        Some(p) => Some((p, raw)),
        None => {
            tracing::warn!("unparseable verifier verdict; re-prompting once");
            let retry = endpoint.request(
                &role_prompt,
                vec![
                    Message::environment(&input),
                    Message::agent(&raw),
                    Message::environment(
                        "Your previous output was not usable. Respond again with [THOUGHT], then [DECISION] containing PASS or INCOMPLETE, then [FEEDBACK].",
                    ),
                ],
                ContextWindow::Unlimited,
            );
            let completion = endpoint.complete(&retry).await?;
            latency_ms += completion.latency.as_millis() as u64;
            let raw = completion.text;
            parse_verdict(&raw).map(|p| (p, raw))
        }
    };

    let Some(((decision, feedback, thought), raw)) = parsed else {
        tracing::warn!("verifier verdict unparseable twice; defaulting to Pass");
        return Ok(Verdict {
            decision: Decision::Pass,
            feedback: String::new(),
            thought: String::new(),
            coerced: true,
            raw: String::new(),
            latency_ms,
        });
    };

    match decision {
        Decision::Incomplete if turns.used >= turns.max => {
            tracing::info!("Incomplete at the final turn coerced to Pass");
            Ok(Verdict {
                decision: Decision::Pass,
                feedback: String::new(),
                thought,
                coerced: true,
                raw,
                latency_ms,
            })
        }
        Decision::Incomplete => {
            let feedback = if feedback.is_empty() {
                tracing::warn!("Incomplete verdict without feedback; substituting a generic request");
                "Critical supporting information is still missing; continue gathering evidence."
                    .to_string()
            } else {
                feedback
            };
            Ok(Verdict {
                decision: Decision::Incomplete,
                feedback,
                thought,
                coerced: false,
                raw,
                latency_ms,
            })
        }
        Decision::Pass => Ok(Verdict {
            decision: Decision::Pass,
            feedback: String::new(),
            thought,
            coerced: false,
            raw,
            latency_ms,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptEntry;
    use crate::strategies::ActionKind;

    fn task() -> DoctorTask {
        DoctorTask { kind: TaskKind::Direct, max_turns: 16 }
    }

    fn history() -> Vec<Message> {
        vec![Message::environment("Begin the consultation.")]
    }

    #[tokio::test]
    async fn baseline_step_parses_a_scripted_diagnosis() {
        let (ep, backend) = Endpoint::scripted("doc", vec![ScriptEntry::any("[DIAGNOSIS] Measles")]);
        let out = baseline_step(&history(), task(), &ep).await.unwrap();
        assert_eq!(out.action.kind, ActionKind::Diagnosis);
        assert_eq!(out.action.payload, "Measles");
        assert!(!out.reprompted);
        let sent = backend.received();
        assert!(sent[0].role_prompt.contains("cannot exceed 16 total turns"));
        assert!(sent[0].role_prompt.contains("single most likely final diagnosis"));
    }

    #[tokio::test]
    async fn malformed_doctor_output_is_reprompted_with_the_failure() {
        let (ep, backend) = Endpoint::scripted(
            "doc",
            vec![ScriptEntry::any("thinking out loud"), ScriptEntry::any("[QUERY] Any fever?")],
        );
        let out = baseline_step(&history(), task(), &ep).await.unwrap();
        assert_eq!(out.action.kind, ActionKind::Query);
        assert!(out.reprompted);
        let sent = backend.received();
        assert_eq!(sent.len(), 2);
        let retry = &sent[1].messages;
        assert_eq!(retry[retry.len() - 2].text, "thinking out loud");
        assert!(retry.last().unwrap().text.contains("could not be used"));
    }

    #[tokio::test]
    async fn doctor_failing_twice_is_a_hard_error() {
        let (ep, _) = Endpoint::scripted("doc", vec![ScriptEntry::any("???"), ScriptEntry::any("!!!")]);
        match baseline_step(&history(), task(), &ep).await {
            Err(StrategyError::Action(ActionParseError::NoActionTag)) => {}
            other => panic!("expected hard parse error, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn react_step_requires_the_thought_block() {
        let (ep, _) = Endpoint::scripted(
            "doc",
            vec![
                ScriptEntry::any("[QUERY] no thought first"),
                ScriptEntry::any("[THOUGHT] narrow it down\n[QUERY] Any rash?"),
            ],
        );
        let out = react_step(&history(), task(), &ep).await.unwrap();
        assert_eq!(out.action.thought.as_deref(), Some("narrow it down"));
        assert!(out.reprompted);
    }

    #[tokio::test]
    async fn collector_step_accepts_finish_and_rejects_diagnosis() {
        let (ep, _) = Endpoint::scripted(
            "doc",
            vec![
                ScriptEntry::any("[DIAGNOSIS] jumping ahead"),
                ScriptEntry::any("[THOUGHT] done\n[FINISH]"),
            ],
        );
        let out = collector_step(&history(), task(), &ep).await.unwrap();
        assert_eq!(out.action.kind, ActionKind::Finish);
        assert!(out.reprompted);
    }

    #[tokio::test]
    async fn summarize_returns_only_the_summary_block() {
        let (ep, _) = Endpoint::scripted(
            "org",
            vec![ScriptEntry::any("[THOUGHT] organize by system\n[SUMMARY] Chief complaint: fever.")],
        );
        let out = summarize("Doctor: ...\nPatient: ...", &ep).await.unwrap();
        assert_eq!(out.summary, "Chief complaint: fever.");
        assert_eq!(out.thought.as_deref(), Some("organize by system"));
    }

    #[tokio::test]
    async fn summarize_fails_after_two_tagless_outputs() {
        let (ep, backend) = Endpoint::scripted(
            "org",
            vec![ScriptEntry::any("no tags"), ScriptEntry::any("still none")],
        );
        match summarize("dialogue", &ep).await {
            Err(StrategyError::MissingSummaryTag { raw }) => assert_eq!(raw, "still none"),
            other => panic!("expected MissingSummaryTag, got {other:?}"),
        }
        assert_eq!(backend.received().len(), 2);
    }

    #[tokio::test]
    async fn direct_diagnosis_extracts_the_payload() {
        let (ep, backend) = Endpoint::scripted(
            "rsn",
            vec![ScriptEntry::any("[THOUGHT] classic picture\n[DIAGNOSIS] Measles")],
        );
        let out = diagnose_from_summary("fever and rash", TaskKind::Direct, &ep).await.unwrap();
        assert_eq!(out.text, "Measles");
        assert_eq!(out.items, vec!["Measles"]);
        assert!(!out.wrong_arity);
        assert!(backend.received()[0].role_prompt.contains("single most likely final diagnosis"));
    }

    #[tokio::test]
    async fn differential_diagnosis_parses_five_items() {
        let (ep, _) = Endpoint::scripted(
            "rsn",
            vec![ScriptEntry::any(
                "[DIAGNOSIS] 1. Measles\n2. Rubella\n3. Scarlet fever\n4. Roseola\n5. Kawasaki disease",
            )],
        );
        let out =
            diagnose_from_summary("fever and rash", TaskKind::Differential, &ep).await.unwrap();
        assert_eq!(out.items.len(), 5);
        assert_eq!(out.items[0], "Measles");
        assert!(!out.wrong_arity);
    }

    #[tokio::test]
    async fn four_item_differential_is_reprompted_then_flagged() {
        let four = "[DIAGNOSIS] 1. A\n2. B\n3. C\n4. D";
        let (ep, backend) =
            Endpoint::scripted("rsn", vec![ScriptEntry::any(four), ScriptEntry::any(four)]);
        let out = diagnose_from_summary("summary", TaskKind::Differential, &ep).await.unwrap();
        assert!(out.wrong_arity);
        assert_eq!(out.items.len(), 4);
        assert!(out.reprompted);
        assert!(backend.received()[1].messages.last().unwrap().text.contains("five"));
    }

    #[tokio::test]
    async fn missing_diagnosis_tag_twice_is_a_hard_error() {
        let (ep, _) = Endpoint::scripted("rsn", vec![ScriptEntry::any("x"), ScriptEntry::any("y")]);
        assert!(matches!(
            diagnose_from_summary("s", TaskKind::Direct, &ep).await,
            Err(StrategyError::MissingDiagnosisTag { .. })
        ));
    }

    #[tokio::test]
    async fn verifier_pass_has_empty_feedback() {
        let (ep, backend) = Endpoint::scripted(
            "ver",
            vec![ScriptEntry::any("[THOUGHT] sufficient\n[DECISION] PASS\n[FEEDBACK]")],
        );
        let v = verify("s", "Measles", TurnState { used: 3, max: 16 }, TaskKind::Direct, &ep)
            .await
            .unwrap();
        assert_eq!(v.decision, Decision::Pass);
        assert_eq!(v.feedback, "");
        assert!(!v.coerced);
        assert!(backend.received()[0].messages[0].text.contains("Turn 3/16."));
    }

    #[tokio::test]
    async fn verifier_incomplete_carries_feedback() {
        let (ep, _) = Endpoint::scripted(
            "ver",
            vec![ScriptEntry::any("[DECISION] INCOMPLETE\n[FEEDBACK] need biopsy result")],
        );
        let v = verify("s", "X", TurnState { used: 3, max: 16 }, TaskKind::Direct, &ep)
            .await
            .unwrap();
        assert_eq!(v.decision, Decision::Incomplete);
        assert_eq!(v.feedback, "need biopsy result");
    }

    #[tokio::test]
    async fn reject_counts_as_incomplete() {
        let (ep, _) = Endpoint::scripted(
            "ver",
            vec![ScriptEntry::any("[DECISION] REJECT\n[FEEDBACK] ask about travel")],
        );
        let v = verify("s", "X", TurnState { used: 2, max: 16 }, TaskKind::Direct, &ep)
            .await
            .unwrap();
        assert_eq!(v.decision, Decision::Incomplete);
    }

    #[tokio::test]
    async fn incomplete_at_final_turn_is_coerced_to_pass() {
        let (ep, _) = Endpoint::scripted(
            "ver",
            vec![ScriptEntry::any("[DECISION] INCOMPLETE\n[FEEDBACK] want an MRI")],
        );
        let v = verify("s", "X", TurnState { used: 16, max: 16 }, TaskKind::Direct, &ep)
            .await
            .unwrap();
        assert_eq!(v.decision, Decision::Pass);
        assert!(v.coerced);
        assert_eq!(v.feedback, "");
    }

    #[tokio::test]
    async fn unparseable_verdict_twice_defaults_to_pass_with_flag() {
        let (ep, backend) = Endpoint::scripted(
            "ver",
            vec![ScriptEntry::any("shrug"), ScriptEntry::any("[DECISION] maybe?")],
        );
        let v = verify("s", "X", TurnState { used: 2, max: 16 }, TaskKind::Direct, &ep)
            .await
            .unwrap();
        assert_eq!(v.decision, Decision::Pass);
        assert!(v.coerced);
        assert_eq!(backend.received().len(), 2);
    }

    #[tokio::test]
    async fn incomplete_without_feedback_gets_a_generic_request() {
        let (ep, _) = Endpoint::scripted("ver", vec![ScriptEntry::any("[DECISION] INCOMPLETE")]);
        let v = verify("s", "X", TurnState { used: 2, max: 16 }, TaskKind::Direct, &ep)
            .await
            .unwrap();
        assert_eq!(v.decision, Decision::Incomplete);
        assert!(!v.feedback.is_empty());
    }
}
