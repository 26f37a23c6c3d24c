//! Atomic-evidence case representation: loading, validation, persistence.
//!
//! A case is a bag of indexed, self-contained clinical facts split into a
//! patient list (symptoms, history, demographics) and an exam list
//! (examinations, labs, imaging), plus a reference diagnosis. Fact strings
//! carry their `"N. "` index prefix verbatim because the simulator prompts
//! inject the indexed lines and responders echo them back by index.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Which simulator owns an evidence item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Patient,
    Exam,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Patient => write!(f, "patient"),
            Category::Exam => write!(f, "exam"),
        }
    }
}

/// Identity of one evidence item within a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidenceKey {
    pub category: Category,
    pub index: u32,
}

impl EvidenceKey {
    pub fn patient(index: u32) -> Self {
        Self { category: Category::Patient, index }
    }

    pub fn exam(index: u32) -> Self {
        Self { category: Category::Exam, index }
    }
}

/// One indexed, self-contained clinical fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicEvidence {
    /// 1-based position within its category.
    pub index: u32,
    /// Full fact string including the `"N. "` prefix.
    pub text: String,
    pub category: Category,
}

impl AtomicEvidence {
    pub fn key(&self) -> EvidenceKey {
        EvidenceKey { category: self.category, index: self.index }
    }

    /// Fact text with the `"N. "` index prefix removed.
    pub fn body(&self) -> &str {
        let prefix = format!("{}. ", self.index);
        self.text.strip_prefix(&prefix).unwrap_or(&self.text)
    }
}

/// Whether the case expects a single diagnosis or a ranked list of five.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Direct,
    Differential,
}

/// One diagnostic case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub dataset: String,
    pub task_kind: TaskKind,
    pub reference_diagnosis: String,
    pub patient_evidences: Vec<AtomicEvidence>,
    pub exam_evidences: Vec<AtomicEvidence>,
    /// Pre-atomization narrative, kept for the construction sanity check.
    pub original_text: Option<String>,
    /// Optional curated subset overriding "all evidences are relevant".
    pub relevant_override: Option<RelevantOverride>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RelevantOverride {
    #[serde(default)]
    pub patient: Vec<u32>,
    #[serde(default)]
    pub exam: Vec<u32>,
}

/// The evidence set a consultation is scored against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevantEvidenceSet {
    pub case_id: String,
    pub keys: BTreeSet<EvidenceKey>,
}

impl RelevantEvidenceSet {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &EvidenceKey) -> bool {
        self.keys.contains(key)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("malformed case `{case_id}` ({field}): {reason}")]
    MalformedCase { case_id: String, field: String, reason: String },
    #[error("duplicate case id `{0}`")]
    DuplicateCaseId(String),
    #[error("dataset at `{0}` contains no cases")]
    EmptyDataset(String),
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid case JSON in `{path}`: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// On-disk shape of one case object.
#[derive(Debug, Serialize, Deserialize)]
struct CaseFile {
    case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    task_kind: TaskKind,
    reference_diagnosis: String,
    patient_evidences: Vec<String>,
    exam_evidences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relevant_override: Option<RelevantOverride>,
}

impl CaseRecord {
    /// Build a validated record from raw fact strings.
    pub fn new(
        case_id: impl Into<String>,
        dataset: impl Into<String>,
        task_kind: TaskKind,
        reference_diagnosis: impl Into<String>,
        patient_facts: Vec<String>,
        exam_facts: Vec<String>,
    ) -> Result<Self, CaseError> {
        let record = CaseFile {
            case_id: case_id.into(),
            dataset: Some(dataset.into()),
            task_kind,
            reference_diagnosis: reference_diagnosis.into(),
            patient_evidences: patient_facts,
            exam_evidences: exam_facts,
            original_text: None,
            relevant_override: None,
        };
        validate_case(record, "")
    }

    pub fn evidence(&self, key: &EvidenceKey) -> Option<&AtomicEvidence> {
        let list = match key.category {
            Category::Patient => &self.patient_evidences,
            Category::Exam => &self.exam_evidences,
        };
        list.get(key.index as usize - 1)
    }

    pub fn evidence_count(&self) -> usize {
        self.patient_evidences.len() + self.exam_evidences.len()
    }

    /// All evidence keys of the case, patient then exam, ascending index.
    pub fn all_keys(&self) -> BTreeSet<EvidenceKey> {
        self.patient_evidences
            .iter()
            .chain(self.exam_evidences.iter())
            .map(AtomicEvidence::key)
            .collect()
    }
}

/// The set of evidences the case is scored against: everything the case
/// holds unless a curated override narrows it.
pub fn relevant_set(case: &CaseRecord) -> RelevantEvidenceSet {
    let keys = match &case.relevant_override {
        None => case.all_keys(),
        Some(ov) => ov
            .patient
            .iter()
            .map(|&i| EvidenceKey::patient(i))
            .chain(ov.exam.iter().map(|&i| EvidenceKey::exam(i)))
            .collect(),
    };
    RelevantEvidenceSet { case_id: case.case_id.clone(), keys }
}

/// Load and validate every case in a JSON file (one array of case objects).
///
/// `dataset_label` fills the dataset field for cases that do not carry
/// their own.
pub fn load_cases(path: impl AsRef<Path>, dataset_label: &str) -> Result<Vec<CaseRecord>, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    let raw: Vec<CaseFile> = serde_json::from_str(&text)
        .map_err(|source| CaseError::Json { path: path.display().to_string(), source })?;
    if raw.is_empty() {
        return Err(CaseError::EmptyDataset(path.display().to_string()));
    }

    let mut seen = HashSet::new();
    let mut cases = Vec::with_capacity(raw.len());
    for file in raw {
        if !seen.insert(file.case_id.clone()) {
            return Err(CaseError::DuplicateCaseId(file.case_id));
        }
        cases.push(validate_case(file, dataset_label)?);
    }
    Ok(cases)
}

/// Write cases back to the documented JSON schema (structural inverse of
/// [`load_cases`]).
pub fn save_cases(path: impl AsRef<Path>, cases: &[CaseRecord]) -> Result<(), CaseError> {
    let path = path.as_ref();
    let files: Vec<CaseFile> = cases
        .iter()
        .map(|c| CaseFile {
            case_id: c.case_id.clone(),
            dataset: Some(c.dataset.clone()),
            task_kind: c.task_kind,
            reference_diagnosis: c.reference_diagnosis.clone(),
            patient_evidences: c.patient_evidences.iter().map(|e| e.text.clone()).collect(),
            exam_evidences: c.exam_evidences.iter().map(|e| e.text.clone()).collect(),
            original_text: c.original_text.clone(),
            relevant_override: c.relevant_override.clone(),
        })
        .collect();
    let text = serde_json::to_string_pretty(&files)
        .map_err(|source| CaseError::Json { path: path.display().to_string(), source })?;
    std::fs::write(path, text)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })
}

/// Check that fact strings are indexed `1. `, `2. `, ... contiguously and
/// carry non-empty bodies.
pub fn validate_fact_list(
    facts: &[String],
    category: Category,
) -> Result<Vec<AtomicEvidence>, String> {
    let mut out = Vec::with_capacity(facts.len());
    for (pos, text) in facts.iter().enumerate() {
        let expected = pos as u32 + 1;
        let prefix = format!("{expected}. ");
        let body = text.strip_prefix(&prefix).ok_or_else(|| {
            format!("fact at position {} must start with `{prefix}`, got `{text}`", pos + 1)
        })?;
        if body.trim().is_empty() {
            return Err(format!("fact {expected} has an empty body"));
        }
        out.push(AtomicEvidence { index: expected, text: text.clone(), category });
    }
    Ok(out)
}

fn validate_case(file: CaseFile, dataset_label: &str) -> Result<CaseRecord, CaseError> {
    let malformed = |field: &str, reason: String| CaseError::MalformedCase {
        case_id: file.case_id.clone(),
        field: field.to_string(),
        reason,
    };

    if file.case_id.trim().is_empty() {
        return Err(CaseError::MalformedCase {
            case_id: "<unnamed>".into(),
            field: "case_id".into(),
            reason: "empty".into(),
        });
    }
    let dataset = match file.dataset.clone().filter(|d| !d.trim().is_empty()) {
        Some(d) => d,
        None if !dataset_label.trim().is_empty() => dataset_label.to_string(),
        None => return Err(malformed("dataset", "missing and no dataset label given".into())),
    };
    if file.reference_diagnosis.trim().is_empty() {
        return Err(malformed("reference_diagnosis", "empty".into()));
    }

    let patient = validate_fact_list(&file.patient_evidences, Category::Patient)
        .map_err(|r| malformed("patient_evidences", r))?;
    let exam = validate_fact_list(&file.exam_evidences, Category::Exam)
        .map_err(|r| malformed("exam_evidences", r))?;

    if patient.is_empty() && exam.is_empty() {
        return Err(malformed("evidences", "case has no evidence in either list".into()));
    }

    let patient_texts: HashSet<&str> = patient.iter().map(|e| e.text.as_str()).collect();
    if let Some(dup) = exam.iter().find(|e| patient_texts.contains(e.text.as_str())) {
        return Err(malformed(
            "exam_evidences",
            format!("fact `{}` duplicated across patient and exam lists", dup.text),
        ));
    }

    if let Some(ov) = &file.relevant_override {
        for &i in &ov.patient {
            if i == 0 || i as usize > patient.len() {
                return Err(malformed("relevant_override.patient", format!("index {i} not in case")));
            }
        }
        for &i in &ov.exam {
            if i == 0 || i as usize > exam.len() {
                return Err(malformed("relevant_override.exam", format!("index {i} not in case")));
            }
        }
        if ov.patient.is_empty() && ov.exam.is_empty() {
            return Err(malformed("relevant_override", "override selects no evidence".into()));
        }
    }

    Ok(CaseRecord {
        case_id: file.case_id,
        dataset,
        task_kind: file.task_kind,
        reference_diagnosis: file.reference_diagnosis,
        patient_evidences: patient,
        exam_evidences: exam,
        original_text: file.original_text,
        relevant_override: file.relevant_override,
    })
}
