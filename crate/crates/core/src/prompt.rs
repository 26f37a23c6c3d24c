//! Prompt templates and placeholder substitution.
//!
//! Templates live as plain text assets under `assets/prompts/` and are
//! embedded at compile time. Substitution replaces only the named
//! placeholders it is given; any other brace expression in a template
//! (e.g. the literal `\boxed{score}` in the differential judge rubric)
//! is left untouched.

/// Simulated patient role prompt. Slot: `{patient_evidences}`.
pub const PATIENT: &str = include_str!("../assets/prompts/patient.txt");

/// Simulated reporter role prompt. Slot: `{examination_evidences}`.
pub const REPORTER: &str = include_str!("../assets/prompts/reporter.txt");

/// Binary same-disease judge. Slots: `{answer}`, `{diagnosis}`.
pub const JUDGE_DIRECT: &str = include_str!("../assets/prompts/judge_direct.txt");

/// Five-item rubric judge. Slots: `{student_answer}`, `{final_diagnosis}`.
pub const JUDGE_DIFFERENTIAL: &str = include_str!("../assets/prompts/judge_differential.txt");

/// Atomic-fact construction prompt. Slot: `{case_json}`.
pub const CONSTRUCTION: &str = include_str!("../assets/prompts/construction.txt");

/// Direct-acting doctor prompt. Slots: `{task_description}`, `{max_turns}`,
/// `{task_output_format}`.
pub const DOCTOR_BASELINE: &str = include_str!("../assets/prompts/doctor_baseline.txt");

/// Thought-then-act doctor prompt. Same slots as the baseline prompt.
pub const DOCTOR_REACT: &str = include_str!("../assets/prompts/doctor_react.txt");

/// Information collector prompt (query/test/finish, no diagnosis).
pub const COLLECTOR: &str = include_str!("../assets/prompts/collector.txt");

/// Evidence organizer prompt (dialogue to structured summary).
pub const ORGANIZER: &str = include_str!("../assets/prompts/organizer.txt");

/// Diagnosis reasoner prompt (summary to diagnosis). Slots:
/// `{task_description}`, `{task_output_format}`.
pub const REASONER: &str = include_str!("../assets/prompts/reasoner.txt");

/// Diagnosis verifier prompt (sufficiency check with turn-limit override).
/// Slot: `{task_description}`.
pub const VERIFIER: &str = include_str!("../assets/prompts/verifier.txt");

/// Substitute `{name}` placeholders in a template.
///
/// Only the provided names are replaced; unknown brace expressions stay
/// verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_named_slots() {
        let out = render("hello {who}, {who} again; turn {n}", &[("who", "doc"), ("n", "3")]);
        assert_eq!(out, "hello doc, doc again; turn 3");
    }

    #[test]
    fn render_leaves_unknown_braces_alone() {
        let out = render(r"score \boxed{score} for {item}", &[("item", "x")]);
        assert_eq!(out, r"score \boxed{score} for x");
    }

    #[test]
    fn templates_carry_their_slots() {
        assert!(PATIENT.contains("{patient_evidences}"));
        assert!(REPORTER.contains("{examination_evidences}"));
        assert!(JUDGE_DIRECT.contains("{answer}") && JUDGE_DIRECT.contains("{diagnosis}"));
        assert!(
            JUDGE_DIFFERENTIAL.contains("{student_answer}")
                && JUDGE_DIFFERENTIAL.contains("{final_diagnosis}")
                && JUDGE_DIFFERENTIAL.contains(r"\boxed{score}")
        );
        assert!(CONSTRUCTION.contains("{case_json}"));
        for doctor in [DOCTOR_BASELINE, DOCTOR_REACT, COLLECTOR] {
            assert!(doctor.contains("{task_description}"));
            assert!(doctor.contains("{max_turns}"));
        }
        assert!(DOCTOR_BASELINE.contains("{task_output_format}"));
        assert!(DOCTOR_REACT.contains("{task_output_format}"));
        assert!(COLLECTOR.contains("[FINISH]"));
        assert!(ORGANIZER.contains("[SUMMARY]"));
        assert!(REASONER.contains("{task_output_format}"));
        assert!(VERIFIER.contains("[DECISION]"));
    }
}
