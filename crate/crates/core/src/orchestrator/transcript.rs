//! The durable record of one consultation: every doctor action, responder
//! reply, internal reasoning product, and notice, in order, plus the final
//! diagnosis and the revealed-evidence accounting.

use serde::{Deserialize, Serialize};

use crate::case::{EvidenceKey, TaskKind};
use crate::strategies::{ActionKind, Decision, Strategy};

/// Which endpoint played a role in this consultation, with the temperature
/// its calls defaulted to (simulator calls are always pinned to 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleBinding {
    pub role: String,
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
}

/// One transcript entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEvent {
    /// A parsed doctor output (any role holding the action grammar).
    DoctorAction {
        action: ActionKind,
        payload: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thought: Option<String>,
        /// Position in the interaction budget for turn-consuming actions;
        /// absent for Diagnosis and for actions voided by an exhausted
        /// budget.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interaction_turn: Option<u32>,
        reprompted: bool,
    },
    PatientReply {
        text: String,
        newly_revealed: Vec<EvidenceKey>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        unknown_references: Vec<u32>,
        tag_parse_failed: bool,
    },
    ReporterReply {
        text: String,
        newly_revealed: Vec<EvidenceKey>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        unknown_references: Vec<u32>,
        normal_fallback: bool,
    },
    /// Organizer output (summary text only; its thought is logged here too).
    Summary {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thought: Option<String>,
        reprompted: bool,
    },
    /// Reasoner output.
    Diagnosis {
        text: String,
        items: Vec<String>,
        wrong_arity: bool,
        reprompted: bool,
    },
    /// Verifier output.
    Verdict {
        decision: Decision,
        feedback: String,
        coerced: bool,
    },
    /// Harness-injected milestone (e.g. the final-turn notice).
    Notice { text: String },
}

/// One ordered transcript entry with its sequence number and model latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub seq: u32,
    pub latency_ms: u64,
    #[serde(flatten)]
    pub event: TranscriptEvent,
}

/// Why an episode could not produce a diagnosis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    /// Which stage failed: config, doctor, patient, reporter, organizer,
    /// reasoner, verifier, forced_final.
    pub stage: String,
    pub error: String,
}

/// Complete record of one consultation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationTranscript {
    pub case_id: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub task_kind: TaskKind,
    /// Grouping label: single model id, or distinct role models joined by
    /// `->` (collector first).
    pub model_label: String,
    pub roles: Vec<RoleBinding>,
    pub max_turns: u32,
    /// Environment-consuming turns actually spent (Query/Test/Finish).
    pub turns_used: u32,
    pub turns: Vec<TranscriptTurn>,
    /// Collect→verify rounds completed (0 outside the verify loop).
    pub verifier_rounds: u32,
    /// Audit trail of forced decisions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coercion_flags: Vec<String>,
    /// Empty exactly when `failed` is set.
    pub final_diagnosis: String,
    /// Enumerated form of the final diagnosis (one item for direct tasks).
    pub final_items: Vec<String>,
    /// Differential answer that did not hold five items.
    pub wrong_arity: bool,
    /// All evidence pairs revealed during the consultation, sorted.
    pub revealed: Vec<EvidenceKey>,
    /// (turn, newly revealed pairs) — folding this reproduces `revealed`.
    pub reveal_log: Vec<(u32, Vec<EvidenceKey>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<FailureRecord>,
}

impl ConsultationTranscript {
    /// Doctor-action entries, in order.
    pub fn doctor_actions(&self) -> impl Iterator<Item = &TranscriptTurn> {
        self.turns
            .iter()
            .filter(|t| matches!(t.event, TranscriptEvent::DoctorAction { .. }))
    }

    /// Environment-consuming turns recorded in the transcript body (used by
    /// the budget-law checks; must agree with `turns_used`).
    pub fn counted_interaction_turns(&self) -> u32 {
        self.turns
            .iter()
            .filter(|t| {
                matches!(
                    t.event,
                    TranscriptEvent::DoctorAction { interaction_turn: Some(_), .. }
                )
            })
            .count() as u32
    }

    pub fn succeeded(&self) -> bool {
        self.failed.is_none()
    }
}
