//! Runs one consultation end-to-end — interactive or static — enforcing the
//! turn budget and producing the transcript.
//!
//! Turn accounting: Query, Test, and Finish each consume one interaction
//! turn; Diagnosis and all organizer/reasoner/verifier calls are internal
//! reasoning and consume none. Re-prompts never consume a turn. When the
//! budget runs out before a diagnosis, the run is not scored as
//! undiagnosed: a final-turn notice forces the diagnosis path.

mod transcript;

pub use transcript::{
    ConsultationTranscript, FailureRecord, RoleBinding, TranscriptEvent, TranscriptTurn,
};

use futures::StreamExt;

use crate::case::CaseRecord;
use crate::environment::{patient_respond, reporter_respond, RevealedSet};
use crate::gateway::{Endpoint, Message};
use crate::strategies::{
    collector_step, baseline_step, diagnose_from_summary, react_step, summarize, verify,
    ActionKind, Decision, DiagnosisOutcome, DoctorTask, RoleAssignment, StepOutcome, Strategy,
    TurnState,
};
use crate::text::split_enumerated_items;

/// Interaction-turn cap applied when a run does not configure its own.
pub const DEFAULT_MAX_TURNS: u32 = 16;

/// Opening environment message that hands the floor to the doctor.
pub const KICKOFF_MESSAGE: &str = "Begin the consultation.";

/// Notice sent to a direct-acting doctor when the budget runs out.
const FORCED_DIAGNOSIS_NOTICE: &str =
    "FINAL TURN: The interaction budget is exhausted. Provide your final diagnosis now using [DIAGNOSIS].";

/// Notice recorded when a collection phase is cut off by the budget.
const COLLECTION_CLOSED_NOTICE: &str =
    "FINAL TURN: The interaction budget is exhausted. Proceeding to the final diagnosis.";

/// Second, last-resort instruction when the doctor ignores the final-turn
/// notice.
const DIAGNOSIS_ONLY_REMINDER: &str =
    "The interaction budget is exhausted. Respond only with [DIAGNOSIS] followed by your final answer.";

/// Prefix for verifier feedback injected into the collector's context.
pub const SUPERVISOR_FEEDBACK_PREFIX: &str = "SUPERVISOR FEEDBACK: ";

/// The interaction-turn allowance of one consultation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnBudget {
    pub max_turns: u32,
    pub used: u32,
}

impl TurnBudget {
    pub fn new(max_turns: u32) -> Self {
        assert!(max_turns >= 1, "a consultation needs at least one turn");
        Self { max_turns, used: 0 }
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.max_turns
    }

    pub fn remaining(&self) -> u32 {
        self.max_turns - self.used
    }

    /// Consume one turn, returning its 1-based number.
    fn charge(&mut self) -> u32 {
        debug_assert!(!self.exhausted(), "charging an exhausted budget");
        self.used += 1;
        self.used
    }
}

impl Default for TurnBudget {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_TURNS)
    }
}

/// The simulated patient and reporter backing one run.
#[derive(Debug, Clone)]
pub struct EnvironmentEndpoints {
    pub patient: Endpoint,
    pub reporter: Endpoint,
}

impl EnvironmentEndpoints {
    /// Fork both endpoints for one consultation.
    pub fn session(&self) -> Self {
        Self { patient: self.patient.session(), reporter: self.reporter.session() }
    }
}

/// Everything the patient narrative said, as one newline-joined block:
/// patient facts then exam facts, ascending index, prefixes stripped so the
/// result reads as prose rather than a numbered protocol.
pub fn concatenated_evidence(case: &CaseRecord) -> String {
    case.patient_evidences
        .iter()
        .chain(case.exam_evidences.iter())
        .map(|e| e.body())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug)]
struct EpisodeError {
    stage: &'static str,
    error: String,
}

impl EpisodeError {
    fn new(stage: &'static str, error: impl std::fmt::Display) -> Self {
        Self { stage, error: error.to_string() }
    }

    fn record(&self) -> FailureRecord {
        FailureRecord { stage: self.stage.to_string(), error: self.error.clone() }
    }
}

enum CollectEnd {
    Finished,
    BudgetExhausted,
}

/// Sequential state machine for a single consultation.
struct Engine<'a> {
    case: &'a CaseRecord,
    strategy: Strategy,
    roles: RoleAssignment,
    environment: Option<EnvironmentEndpoints>,
    task: DoctorTask,
    budget: TurnBudget,
    tracker: RevealedSet,
    /// The doctor-visible conversation (role prompt excluded).
    history: Vec<Message>,
    /// Doctor↔environment exchanges rendered for the organizer.
    dialogue: Vec<String>,
    turns: Vec<TranscriptTurn>,
    next_seq: u32,
    verifier_rounds: u32,
    coercion_flags: Vec<String>,
    final_diagnosis: String,
    final_items: Vec<String>,
    wrong_arity: bool,
}

impl<'a> Engine<'a> {
    fn new(
        case: &'a CaseRecord,
        strategy: Strategy,
        roles: RoleAssignment,
        environment: Option<EnvironmentEndpoints>,
        max_turns: u32,
    ) -> Self {
        Self {
            case,
            strategy,
            roles,
            environment,
            task: DoctorTask { kind: case.task_kind, max_turns },
            budget: TurnBudget::new(max_turns),
            tracker: RevealedSet::new(),
            history: vec![Message::environment(KICKOFF_MESSAGE)],
            dialogue: Vec::new(),
            turns: Vec::new(),
            next_seq: 0,
            verifier_rounds: 0,
            coercion_flags: Vec::new(),
            final_diagnosis: String::new(),
            final_items: Vec::new(),
            wrong_arity: false,
        }
    }

    fn push_event(&mut self, event: TranscriptEvent, latency_ms: u64) {
        self.next_seq += 1;
        self.turns.push(TranscriptTurn { seq: self.next_seq, latency_ms, event });
    }

    fn role_bindings(&self) -> Vec<RoleBinding> {
        let mut roles: Vec<RoleBinding> = self
            .roles
            .manifest()
            .into_iter()
            .map(|(role, endpoint, model_id, temperature)| RoleBinding {
                role: role.name().to_string(),
                endpoint,
                model_id,
                temperature,
            })
            .collect();
        if let Some(env) = &self.environment {
            for (name, ep) in [("patient", &env.patient), ("reporter", &env.reporter)] {
                roles.push(RoleBinding {
                    role: name.to_string(),
                    endpoint: ep.name.clone(),
                    model_id: ep.model_id.clone(),
                    // Simulator calls are pinned to temperature 0 regardless
                    // of the endpoint default.
                    temperature: 0.0,
                });
            }
        }
        roles
    }

    fn into_transcript(self, failed: Option<FailureRecord>) -> ConsultationTranscript {
        ConsultationTranscript {
            case_id: self.case.case_id.clone(),
            dataset: self.case.dataset.clone(),
            strategy: self.strategy,
            task_kind: self.case.task_kind,
            model_label: self.roles.model_label(self.strategy),
            roles: self.role_bindings(),
            max_turns: self.budget.max_turns,
            turns_used: self.budget.used,
            verifier_rounds: self.verifier_rounds,
            coercion_flags: self.coercion_flags,
            final_diagnosis: self.final_diagnosis,
            final_items: self.final_items,
            wrong_arity: self.wrong_arity,
            revealed: self.tracker.pairs().iter().copied().collect(),
            reveal_log: self.tracker.log().to_vec(),
            failed,
            turns: self.turns,
        }
    }

    fn patient_endpoint(&self) -> Result<Endpoint, EpisodeError> {
        self.environment
            .as_ref()
            .map(|e| e.patient.clone())
            .ok_or_else(|| EpisodeError::new("config", "interactive run without environment endpoints"))
    }

    fn reporter_endpoint(&self) -> Result<Endpoint, EpisodeError> {
        self.environment
            .as_ref()
            .map(|e| e.reporter.clone())
            .ok_or_else(|| EpisodeError::new("config", "interactive run without environment endpoints"))
    }

    /// One doctor model call under the strategy's grammar.
    async fn doctor_turn(&mut self) -> Result<StepOutcome, EpisodeError> {
        let collector = self
            .roles
            .collector
            .clone()
            .ok_or_else(|| EpisodeError::new("config", "collector role unbound"))?;
        let result = match self.strategy {
            Strategy::Baseline => baseline_step(&self.history, self.task, &collector).await,
            Strategy::React => react_step(&self.history, self.task, &collector).await,
            Strategy::Sc | Strategy::Refine => {
                collector_step(&self.history, self.task, &collector).await
            }
            Strategy::StaticUb => {
                return Err(EpisodeError::new("config", "static mode has no doctor turns"))
            }
        };
        result.map_err(|e| EpisodeError::new("doctor", e))
    }

    async fn dispatch_query(&mut self, out: StepOutcome) -> Result<(), EpisodeError> {
        let turn = self.budget.charge();
        self.push_event(
            TranscriptEvent::DoctorAction {
                action: ActionKind::Query,
                payload: out.action.payload.clone(),
                thought: out.action.thought.clone(),
                interaction_turn: Some(turn),
                reprompted: out.reprompted,
            },
            out.latency_ms,
        );
        let patient = self.patient_endpoint()?;
        let reply = patient_respond(self.case, &out.action.payload, &patient)
            .await
            .map_err(|e| EpisodeError::new("patient", e))?;
        let newly = self.tracker.record_reveal(turn, &reply.referenced);
        self.push_event(
            TranscriptEvent::PatientReply {
                text: reply.response_text.clone(),
                newly_revealed: newly,
                unknown_references: reply.unknown_references.clone(),
                tag_parse_failed: reply.tag_parse_failed,
            },
            reply.latency_ms,
        );
        self.history.push(Message::agent(&out.raw));
        self.history.push(Message::environment(&reply.response_text));
        self.dialogue.push(format!("Doctor: {}", out.action.payload));
        self.dialogue.push(format!("Patient: {}", reply.response_text));
        Ok(())
    }

    async fn dispatch_test(&mut self, out: StepOutcome) -> Result<(), EpisodeError> {
        let turn = self.budget.charge();
        self.push_event(
            TranscriptEvent::DoctorAction {
                action: ActionKind::Test,
                payload: out.action.payload.clone(),
                thought: out.action.thought.clone(),
                interaction_turn: Some(turn),
                reprompted: out.reprompted,
            },
            out.latency_ms,
        );
        let reporter = self.reporter_endpoint()?;
        let reply = reporter_respond(self.case, &out.action.payload, &reporter)
            .await
            .map_err(|e| EpisodeError::new("reporter", e))?;
        let newly = self.tracker.record_reveal(turn, &reply.referenced);
        self.push_event(
            TranscriptEvent::ReporterReply {
                text: reply.response_text.clone(),
                newly_revealed: newly,
                unknown_references: reply.unknown_references.clone(),
                normal_fallback: reply.is_normal_fallback,
            },
            reply.latency_ms,
        );
        self.history.push(Message::agent(&out.raw));
        self.history.push(Message::environment(&reply.response_text));
        self.dialogue.push(format!("Doctor: {}", out.action.payload));
        self.dialogue.push(format!("Medical Analyst: {}", reply.response_text));
        Ok(())
    }

    /// Record a doctor-issued diagnosis as the final answer (costs no turn).
    fn accept_diagnosis(&mut self, out: StepOutcome) {
        let payload = out.action.payload;
        let (items, wrong_arity) = enumerate_diagnosis(&payload, self.case.task_kind);
        self.push_event(
            TranscriptEvent::DoctorAction {
                action: ActionKind::Diagnosis,
                payload: payload.clone(),
                thought: out.action.thought,
                interaction_turn: None,
                reprompted: out.reprompted,
            },
            out.latency_ms,
        );
        self.history.push(Message::agent(&out.raw));
        self.final_diagnosis = payload;
        self.final_items = items;
        self.wrong_arity = wrong_arity;
    }

    /// Record a reasoner-issued diagnosis as the final answer.
    fn accept_reasoner_diagnosis(&mut self, diagnosis: DiagnosisOutcome) {
        self.push_event(
            TranscriptEvent::Diagnosis {
                text: diagnosis.text.clone(),
                items: diagnosis.items.clone(),
                wrong_arity: diagnosis.wrong_arity,
                reprompted: diagnosis.reprompted,
            },
            diagnosis.latency_ms,
        );
        self.final_diagnosis = diagnosis.text;
        self.final_items = diagnosis.items;
        self.wrong_arity = diagnosis.wrong_arity;
    }

    /// Baseline/react loop: act until a diagnosis lands or the budget forces
    /// one.
    async fn run_direct(&mut self) -> Result<(), EpisodeError> {
        loop {
            if self.budget.exhausted() {
                return self.forced_final().await;
            }
            let out = self.doctor_turn().await?;
            match out.action.kind {
                ActionKind::Query => self.dispatch_query(out).await?,
                ActionKind::Test => self.dispatch_test(out).await?,
                ActionKind::Diagnosis => {
                    self.accept_diagnosis(out);
                    return Ok(());
                }
                ActionKind::Finish => unreachable!("grammar excludes Finish for direct strategies"),
            }
        }
    }

    /// Budget ran out with no diagnosis: demand one, allowing a single
    /// corrective nudge if the doctor tries to keep interacting.
    async fn forced_final(&mut self) -> Result<(), EpisodeError> {
        self.history.push(Message::environment(FORCED_DIAGNOSIS_NOTICE));
        self.push_event(TranscriptEvent::Notice { text: FORCED_DIAGNOSIS_NOTICE.into() }, 0);

        let out = self.doctor_turn().await?;
        if out.action.kind == ActionKind::Diagnosis {
            self.accept_diagnosis(out);
            return Ok(());
        }

        // A well-formed but non-terminal action: void it (no environment
        // dispatch, no turn charge) and demand the diagnosis once more.
        self.push_event(
            TranscriptEvent::DoctorAction {
                action: out.action.kind,
                payload: out.action.payload.clone(),
                thought: out.action.thought.clone(),
                interaction_turn: None,
                reprompted: out.reprompted,
            },
            out.latency_ms,
        );
        self.push_event(
            TranscriptEvent::Notice {
                text: "Action voided: the interaction budget is exhausted.".into(),
            },
            0,
        );
        self.history.push(Message::agent(&out.raw));
        self.history.push(Message::environment(DIAGNOSIS_ONLY_REMINDER));

        let out = self.doctor_turn().await?;
        if out.action.kind == ActionKind::Diagnosis {
            self.accept_diagnosis(out);
            Ok(())
        } else {
            Err(EpisodeError::new(
                "forced_final",
                "doctor kept interacting after the final-turn notice",
            ))
        }
    }

    /// Gather evidence until the collector finishes or the budget closes
    /// the phase.
    async fn collect_phase(&mut self) -> Result<CollectEnd, EpisodeError> {
        loop {
            if self.budget.exhausted() {
                self.push_event(
                    TranscriptEvent::Notice { text: COLLECTION_CLOSED_NOTICE.into() },
                    0,
                );
                return Ok(CollectEnd::BudgetExhausted);
            }
            let out = self.doctor_turn().await?;
            match out.action.kind {
                ActionKind::Query => self.dispatch_query(out).await?,
                ActionKind::Test => self.dispatch_test(out).await?,
                ActionKind::Finish => {
                    let turn = self.budget.charge();
                    self.push_event(
                        TranscriptEvent::DoctorAction {
                            action: ActionKind::Finish,
                            payload: String::new(),
                            thought: out.action.thought.clone(),
                            interaction_turn: Some(turn),
                            reprompted: out.reprompted,
                        },
                        out.latency_ms,
                    );
                    self.history.push(Message::agent(&out.raw));
                    return Ok(CollectEnd::Finished);
                }
                ActionKind::Diagnosis => {
                    unreachable!("grammar excludes Diagnosis for collectors")
                }
            }
        }
    }

    /// Summarize the dialogue so far, then diagnose from the summary.
    async fn organize_and_diagnose(
        &mut self,
    ) -> Result<(String, DiagnosisOutcome), EpisodeError> {
        let organizer = self
            .roles
            .organizer
            .clone()
            .ok_or_else(|| EpisodeError::new("config", "organizer role unbound"))?;
        let reasoner = self
            .roles
            .reasoner
            .clone()
            .ok_or_else(|| EpisodeError::new("config", "reasoner role unbound"))?;

        let dialogue = self.dialogue.join("\n");
        let summary = summarize(&dialogue, &organizer)
            .await
            .map_err(|e| EpisodeError::new("organizer", e))?;
        self.push_event(
            TranscriptEvent::Summary {
                text: summary.summary.clone(),
                thought: summary.thought.clone(),
                reprompted: summary.reprompted,
            },
            summary.latency_ms,
        );

        let diagnosis = diagnose_from_summary(&summary.summary, self.case.task_kind, &reasoner)
            .await
            .map_err(|e| EpisodeError::new("reasoner", e))?;
        Ok((summary.summary, diagnosis))
    }

    /// Collect → organize → diagnose.
    async fn run_sc(&mut self) -> Result<(), EpisodeError> {
        self.collect_phase().await?;
        let (_, diagnosis) = self.organize_and_diagnose().await?;
        self.accept_reasoner_diagnosis(diagnosis);
        Ok(())
    }

    /// Collect → organize → diagnose → verify, resuming collection with
    /// supervisor feedback on every Incomplete verdict. Terminates because
    /// an Incomplete verdict is only possible while budget remains (the
    /// verifier coerces at the final turn) and resumed collection always
    /// consumes budget.
    async fn run_refine(&mut self) -> Result<(), EpisodeError> {
        let verifier = self
            .roles
            .verifier
            .clone()
            .ok_or_else(|| EpisodeError::new("config", "verifier role unbound"))?;
        loop {
            self.collect_phase().await?;
            let (summary, diagnosis) = self.organize_and_diagnose().await?;
            self.verifier_rounds += 1;
            let verdict = verify(
                &summary,
                &diagnosis.text,
                TurnState { used: self.budget.used, max: self.budget.max_turns },
                self.case.task_kind,
                &verifier,
            )
            .await
            .map_err(|e| EpisodeError::new("verifier", e))?;
            self.push_event(
                TranscriptEvent::Verdict {
                    decision: verdict.decision,
                    feedback: verdict.feedback.clone(),
                    coerced: verdict.coerced,
                },
                verdict.latency_ms,
            );
            if verdict.coerced {
                self.coercion_flags
                    .push(format!("verifier_decision_coerced_round_{}", self.verifier_rounds));
            }
            match verdict.decision {
                Decision::Pass => {
                    self.accept_reasoner_diagnosis(diagnosis);
                    return Ok(());
                }
                Decision::Incomplete => {
                    self.history.push(Message::environment(format!(
                        "{SUPERVISOR_FEEDBACK_PREFIX}{}",
                        verdict.feedback
                    )));
                }
            }
        }
    }
}

/// Enumerate a doctor-written diagnosis payload for judging: the parsed
/// list for differential tasks (flagging a count other than five), the
/// payload itself for direct ones.
fn enumerate_diagnosis(payload: &str, kind: crate::case::TaskKind) -> (Vec<String>, bool) {
    match kind {
        crate::case::TaskKind::Direct => (vec![payload.to_string()], false),
        crate::case::TaskKind::Differential => {
            let items = split_enumerated_items(payload);
            let wrong = items.len() != 5;
            if wrong {
                tracing::warn!(items = items.len(), "differential answer does not hold five items");
            }
            (items, wrong)
        }
    }
}

/// Run one interactive consultation. Failures never panic or abort: they
/// are embedded in the returned transcript.
pub async fn run_interactive(
    case: &CaseRecord,
    strategy: Strategy,
    roles: &RoleAssignment,
    environment: &EnvironmentEndpoints,
    max_turns: u32,
) -> ConsultationTranscript {
    let mut engine =
        Engine::new(case, strategy, roles.clone(), Some(environment.clone()), max_turns);
    if !strategy.interactive() {
        return engine.into_transcript(Some(FailureRecord {
            stage: "config".into(),
            error: "static mode cannot be run interactively".into(),
        }));
    }
    if let Err(e) = roles.validate_for(strategy) {
        return engine.into_transcript(Some(FailureRecord {
            stage: "config".into(),
            error: e.to_string(),
        }));
    }
    let outcome = match strategy {
        Strategy::Baseline | Strategy::React => engine.run_direct().await,
        Strategy::Sc => engine.run_sc().await,
        Strategy::Refine => engine.run_refine().await,
        Strategy::StaticUb => unreachable!("rejected above"),
    };
    match outcome {
        Ok(()) => engine.into_transcript(None),
        Err(e) => {
            tracing::warn!(case_id = %case.case_id, stage = e.stage, error = %e.error, "episode failed");
            engine.into_transcript(Some(e.record()))
        }
    }
}

/// Run the non-interactive mode on an arbitrary upfront narrative. The
/// revealed set is the full case by construction; zero interaction turns.
pub async fn run_static_with_input(
    case: &CaseRecord,
    input: &str,
    reasoner: &Endpoint,
    notice: &str,
) -> ConsultationTranscript {
    let roles = RoleAssignment { reasoner: Some(reasoner.clone()), ..RoleAssignment::default() };
    let mut engine = Engine::new(case, Strategy::StaticUb, roles, None, DEFAULT_MAX_TURNS);
    engine.tracker = RevealedSet::upfront(case.all_keys());
    engine.push_event(TranscriptEvent::Notice { text: notice.into() }, 0);
    match diagnose_from_summary(input, case.task_kind, reasoner).await {
        Ok(diagnosis) => {
            engine.accept_reasoner_diagnosis(diagnosis);
            engine.into_transcript(None)
        }
        Err(e) => {
            let err = EpisodeError::new("reasoner", e);
            tracing::warn!(case_id = %case.case_id, error = %err.error, "static episode failed");
            engine.into_transcript(Some(err.record()))
        }
    }
}

/// Run the static upper-bound mode: every evidence is provided upfront and
/// the reasoner diagnoses in one shot.
pub async fn run_static_upper_bound(
    case: &CaseRecord,
    reasoner: &Endpoint,
) -> ConsultationTranscript {
    run_static_with_input(
        case,
        &concatenated_evidence(case),
        reasoner,
        "All case evidence provided upfront; no interaction.",
    )
    .await
}

/// Run a batch of consultations concurrently (up to `parallelism` at once).
///
/// Output order matches input order; every endpoint is session-forked per
/// case so scripted replays stay independent; failures are isolated to
/// their own transcript.
pub async fn run_batch(
    cases: &[CaseRecord],
    strategy: Strategy,
    roles: &RoleAssignment,
    environment: Option<&EnvironmentEndpoints>,
    max_turns: u32,
    parallelism: usize,
) -> Vec<ConsultationTranscript> {
    assert!(parallelism >= 1, "parallelism must be at least 1");
    futures::stream::iter(cases.iter().map(|case| {
        let roles = roles.session();
        let environment = environment.map(EnvironmentEndpoints::session);
        async move {
            match strategy {
                Strategy::StaticUb => match roles.reasoner.as_ref() {
                    Some(reasoner) => run_static_upper_bound(case, reasoner).await,
                    None => Engine::new(case, strategy, roles.clone(), None, max_turns)
                        .into_transcript(Some(FailureRecord {
                            stage: "config".into(),
                            error: "static mode requires the reasoner role".into(),
                        })),
                },
                _ => match environment.as_ref() {
                    Some(env) => run_interactive(case, strategy, &roles, env, max_turns).await,
                    None => Engine::new(case, strategy, roles.clone(), None, max_turns)
                        .into_transcript(Some(FailureRecord {
                            stage: "config".into(),
                            error: "interactive strategies require patient and reporter endpoints"
                                .into(),
                        })),
                },
            }
        }
    }))
    .buffered(parallelism)
    .collect()
    .await
}
