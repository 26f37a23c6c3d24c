//! The doctor-side action grammar: `[QUERY]`, `[TEST]`, `[DIAGNOSIS]`,
//! `[FINISH]`, with an optional `[THOUGHT]` block.

use crate::text::section_after;

/// What the doctor chose to do this turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Query,
    Test,
    Diagnosis,
    Finish,
}

impl ActionKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ActionKind::Query => "[QUERY]",
            ActionKind::Test => "[TEST]",
            ActionKind::Diagnosis => "[DIAGNOSIS]",
            ActionKind::Finish => "[FINISH]",
        }
    }
}

/// A parsed doctor action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoctorAction {
    pub kind: ActionKind,
    /// Question text, test request, or diagnosis text; always empty for
    /// Finish (any trailing text after `[FINISH]` is ignored).
    pub payload: String,
    pub thought: Option<String>,
}

/// Which action set a role may use.
///
/// `Plain` is the direct-acting doctor; `ThoughtAct` additionally demands a
/// leading `[THOUGHT]` block; `CollectorFinish` is the evidence-gathering
/// role that may stop collecting but never diagnoses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grammar {
    Plain,
    ThoughtAct,
    CollectorFinish,
}

impl Grammar {
    pub fn allows(&self, kind: ActionKind) -> bool {
        match self {
            Grammar::Plain | Grammar::ThoughtAct => kind != ActionKind::Finish,
            Grammar::CollectorFinish => kind != ActionKind::Diagnosis,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ActionParseError {
    #[error("no action tag found in the output")]
    NoActionTag,
    #[error("action {0:?} is not allowed for this role")]
    IllegalAction(ActionKind),
    #[error("a leading [THOUGHT] block is required before the action")]
    MissingThought,
    #[error("action {0:?} carried an empty payload")]
    EmptyPayload(ActionKind),
}

const ACTION_TAGS: [(&str, ActionKind); 4] = [
    ("[QUERY]", ActionKind::Query),
    ("[TEST]", ActionKind::Test),
    ("[DIAGNOSIS]", ActionKind::Diagnosis),
    ("[FINISH]", ActionKind::Finish),
];

/// All tags that terminate a section, action tags plus `[THOUGHT]`.
const SECTION_TAGS: [&str; 5] = ["[QUERY]", "[TEST]", "[DIAGNOSIS]", "[FINISH]", "[THOUGHT]"];

/// Byte positions of every action-tag occurrence, in text order.
fn tag_occurrences(raw: &str) -> Vec<(usize, &'static str, ActionKind)> {
    let mut hits = Vec::new();
    for (tag, kind) in ACTION_TAGS {
        let mut from = 0;
        while let Some(p) = raw[from..].find(tag) {
            hits.push((from + p, tag, kind));
            from += p + tag.len();
        }
    }
    hits.sort_by_key(|(pos, _, _)| *pos);
    hits
}

/// Parse a doctor output under the given grammar.
///
/// When several action tags appear, the first one in text order is honored
/// and the rest are logged as an anomaly; the payload stops at the next
/// tag. The `[THOUGHT]` block, when present before the action, is captured
/// verbatim.
pub fn parse_action(raw: &str, grammar: Grammar) -> Result<DoctorAction, ActionParseError> {
    let hits = tag_occurrences(raw);
    let Some(&(pos, tag, kind)) = hits.first() else {
        return Err(ActionParseError::NoActionTag);
    };
    if hits.len() > 1 {
        tracing::warn!(
            honored = tag,
            extra = hits.len() - 1,
            "multiple action tags in one output; honoring the first"
        );
    }
    if !grammar.allows(kind) {
        return Err(ActionParseError::IllegalAction(kind));
    }

    let thought = raw
        .find("[THOUGHT]")
        .filter(|&tp| tp < pos)
        .and_then(|_| section_after(raw, "[THOUGHT]", &SECTION_TAGS))
        .map(str::to_string);
    if grammar == Grammar::ThoughtAct && thought.is_none() {
        return Err(ActionParseError::MissingThought);
    }

    let payload = if kind == ActionKind::Finish {
        String::new()
    } else {
        let body = section_after(raw, tag, &SECTION_TAGS).unwrap_or("");
        if body.is_empty() {
            return Err(ActionParseError::EmptyPayload(kind));
        }
        body.to_string()
    };

    Ok(DoctorAction { kind, payload, thought })
}
