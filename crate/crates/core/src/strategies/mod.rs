//! The doctor-side inquiry strategies and their building blocks.
//!
//! Four strategies share one action grammar: the direct-acting doctor
//! (baseline), the thought-then-act doctor (react), collect–summarize–
//! diagnose (sc), and collect–summarize–diagnose–verify with feedback-driven
//! re-collection (refine). A fifth, non-interactive mode (static-ub) hands
//! the reasoner every evidence upfront and serves as the coverage ceiling.
//!
//! Note: the "never repeat a question" rule is enforced at the prompt level
//! only; there is deliberately no programmatic duplicate detection.

mod action;
mod steps;

pub use action::{ActionKind, ActionParseError, DoctorAction, Grammar, parse_action};
pub use steps::{
    baseline_step, collector_step, diagnose_from_summary, react_step, summarize, verify,
    Decision, DiagnosisOutcome, DoctorTask, StepOutcome, StrategyError, SummaryOutcome,
    TurnState, Verdict,
};

use crate::case::TaskKind;
use crate::gateway::Endpoint;

/// The five run modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Baseline,
    React,
    Sc,
    Refine,
    StaticUb,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Baseline, Strategy::React, Strategy::Sc, Strategy::Refine, Strategy::StaticUb];

    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::React => "react",
            Strategy::Sc => "sc",
            Strategy::Refine => "refine",
            Strategy::StaticUb => "static-ub",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.label() == s)
    }

    /// Whether this mode talks to the patient/reporter at all.
    pub fn interactive(&self) -> bool {
        !matches!(self, Strategy::StaticUb)
    }

    /// Roles that must be bound to run this strategy.
    pub fn required_roles(&self) -> &'static [Role] {
        match self {
            Strategy::Baseline | Strategy::React => &[Role::Collector],
            Strategy::Sc => &[Role::Collector, Role::Organizer, Role::Reasoner],
            Strategy::Refine => {
                &[Role::Collector, Role::Organizer, Role::Reasoner, Role::Verifier]
            }
            Strategy::StaticUb => &[Role::Reasoner],
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The doctor-side roles an endpoint can play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Collector,
    Organizer,
    Reasoner,
    Verifier,
}

impl Role {
    pub fn name(&self) -> &'static str {
        match self {
            Role::Collector => "collector",
            Role::Organizer => "organizer",
            Role::Reasoner => "reasoner",
            Role::Verifier => "verifier",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("strategy `{strategy}` requires the `{role}` role to be bound to an endpoint")]
pub struct MissingRole {
    pub strategy: Strategy,
    pub role: Role,
}

/// Which endpoint plays which doctor-side role.
///
/// Different roles may be served by different models — the pairing of one
/// model as collector with another as organizer/reasoner/verifier is a
/// first-class configuration.
#[derive(Debug, Clone, Default)]
pub struct RoleAssignment {
    pub collector: Option<Endpoint>,
    pub organizer: Option<Endpoint>,
    pub reasoner: Option<Endpoint>,
    pub verifier: Option<Endpoint>,
}

impl RoleAssignment {
    pub fn collector_only(collector: Endpoint) -> Self {
        Self { collector: Some(collector), ..Self::default() }
    }

    pub fn get(&self, role: Role) -> Option<&Endpoint> {
        match role {
            Role::Collector => self.collector.as_ref(),
            Role::Organizer => self.organizer.as_ref(),
            Role::Reasoner => self.reasoner.as_ref(),
            Role::Verifier => self.verifier.as_ref(),
        }
    }

    /// Check that every role the strategy needs is bound.
    pub fn validate_for(&self, strategy: Strategy) -> Result<(), MissingRole> {
        for &role in strategy.required_roles() {
            if self.get(role).is_none() {
                return Err(MissingRole { strategy, role });
            }
        }
        Ok(())
    }

    /// Fork every bound endpoint for one consultation.
    pub fn session(&self) -> Self {
        let fork = |e: &Option<Endpoint>| e.as_ref().map(Endpoint::session);
        Self {
            collector: fork(&self.collector),
            organizer: fork(&self.organizer),
            reasoner: fork(&self.reasoner),
            verifier: fork(&self.verifier),
        }
    }

    /// Human-readable model label for report grouping: the single model id
    /// when all roles agree, otherwise the distinct ids in role order
    /// joined by `->` (collector first).
    pub fn model_label(&self, strategy: Strategy) -> String {
        let mut ids: Vec<&str> = Vec::new();
        for &role in strategy.required_roles() {
            if let Some(ep) = self.get(role) {
                if !ids.contains(&ep.model_id.as_str()) {
                    ids.push(&ep.model_id);
                }
            }
        }
        if ids.is_empty() {
            "unbound".to_string()
        } else {
            ids.join("->")
        }
    }

    /// (role, endpoint name, model id, temperature) for every bound role —
    /// recorded in transcripts so each run documents exactly what answered.
    pub fn manifest(&self) -> Vec<(Role, String, String, f64)> {
        [Role::Collector, Role::Organizer, Role::Reasoner, Role::Verifier]
            .into_iter()
            .filter_map(|role| {
                self.get(role).map(|ep| {
                    (role, ep.name.clone(), ep.model_id.clone(), ep.default_temperature)
                })
            })
            .collect()
    }
}

/// Task framing injected into the doctor/reasoner/verifier prompts.
pub fn task_description(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Direct => {
            "Your task is to determine the patient's single most likely final diagnosis."
        }
        TaskKind::Differential => {
            "Your task is to determine the five most likely diagnoses for the patient, ranked from most to least likely."
        }
    }
}

/// Output shape injected wherever the prompts announce the diagnosis format.
pub fn task_output_format(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Direct => "single most likely final diagnosis",
        TaskKind::Differential => {
            "five most likely diagnoses, ranked from most to least likely, numbered 1 to 5, one per line"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptEntry;

    #[test]
    fn labels_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_label(s.label()), Some(s));
        }
        assert_eq!(Strategy::from_label("nonsense"), None);
        assert_eq!(Strategy::StaticUb.label(), "static-ub");
    }

    #[test]
    fn serde_uses_kebab_labels() {
        assert_eq!(serde_json::to_string(&Strategy::StaticUb).unwrap(), "\"static-ub\"");
        assert_eq!(serde_json::from_str::<Strategy>("\"refine\"").unwrap(), Strategy::Refine);
    }

    #[test]
    fn role_requirements_match_strategies() {
        let (ep, _) = Endpoint::scripted("only", vec![]);
        let collector_only = RoleAssignment::collector_only(ep.clone());
        assert!(collector_only.validate_for(Strategy::Baseline).is_ok());
        assert!(collector_only.validate_for(Strategy::React).is_ok());
        let err = collector_only.validate_for(Strategy::Refine).unwrap_err();
        assert_eq!(err.role, Role::Organizer);
        let err = collector_only.validate_for(Strategy::StaticUb).unwrap_err();
        assert_eq!(err.role, Role::Reasoner);
    }

    #[test]
    fn model_label_collapses_identical_ids_and_orders_mixed_ones() {
        let (m1, _) = Endpoint::scripted("m1", vec![ScriptEntry::any("x")]);
        let (m2, _) = Endpoint::scripted("m2", vec![ScriptEntry::any("x")]);
        let homogeneous = RoleAssignment {
            collector: Some(m1.clone()),
            organizer: Some(m1.clone()),
            reasoner: Some(m1.clone()),
            verifier: Some(m1.clone()),
        };
        assert_eq!(homogeneous.model_label(Strategy::Refine), "m1");
        let paired = RoleAssignment {
            collector: Some(m1.clone()),
            organizer: Some(m2.clone()),
            reasoner: Some(m2.clone()),
            verifier: Some(m2),
        };
        assert_eq!(paired.model_label(Strategy::Refine), "m1->m2");
        assert_eq!(paired.model_label(Strategy::Baseline), "m1");
    }
}
