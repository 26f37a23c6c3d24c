//! Interactive evaluation harness for evidence-seeking diagnostic agents.
//!
//! A clinical case is decomposed into atomic, indexed evidence items split
//! between a patient history list and an examination list. A doctor agent
//! interrogates two simulated information sources — a patient (history) and
//! a medical analyst (examinations) — under a hard interaction-turn budget,
//! then commits to a diagnosis. Because every simulator reply cites the
//! evidence indices it drew on, the harness measures not just whether the
//! final diagnosis is right (success rate, decided by an LLM judge) but how
//! much of the decision-relevant evidence the agent actually uncovered
//! (information coverage), computed exactly from cited indices rather than
//! estimated by a model.
//!
//! The crate is organised bottom-up:
//!
//! - [`gateway`] — chat-completion backends (OpenAI-compatible HTTP and
//!   deterministic scripted replay), context windowing, rate limiting.
//! - [`case`] — case records, atomic evidence, relevant-evidence sets.
//! - [`environment`] — the patient and analyst simulators plus the revealed-
//!   evidence tracker.
//! - [`strategies`] — doctor action grammars and the collector / organizer /
//!   reasoner / verifier role steps that compose into strategies.
//! - [`orchestrator`] — runs whole consultations (interactive and static)
//!   and emits transcripts.
//! - [`evaluation`] — coverage and success-rate metrics, judge calls,
//!   aggregation into report rows.
//! - [`construction`] — builds atomic-evidence cases from raw narratives
//!   and sanity-checks the conversion.
//! - [`config`] — TOML run configuration.
//! - [`runner`] — ties a config to batches, metrics files, and reports.

pub mod case;
pub mod config;
pub mod construction;
pub mod environment;
pub mod evaluation;
pub mod gateway;
pub mod orchestrator;
pub mod prompt;
pub mod runner;
pub mod strategies;

pub(crate) mod text;
