//! Executes configured runs and persists their outputs.
//!
//! Layout per run: `<output_dir>/<run-id>/` holding `config.json`,
//! `transcripts.jsonl`, `metrics.jsonl`, `report.tsv`, and `report.json`,
//! where run-id is timestamp + strategy + dataset labels. Both JSONL files
//! open with a `"kind": "run_config"` header line so every file carries
//! its own provenance; the header (like the metric rows) contains no
//! timestamps, which is what makes scripted reruns byte-identical.
//!
//! Reporting (`load_metrics` → `build_report`) is a pure function of
//! stored JSONL — it never contacts a model endpoint.

use std::io::Write;
use std::path::{Path, PathBuf};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::case::{load_cases, relevant_set, CaseError, CaseRecord};
use crate::config::{ConfigError, ResolvedConfig};
use crate::evaluation::{
    aggregate, compute_icr, icr_histograms, scatter_points, score_case, CaseMetrics,
    IcrHistogram, ReportRow, ScatterPoint,
};
use crate::orchestrator::{run_batch, ConsultationTranscript};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("cannot write `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON in `{path}`: {detail}")]
    Json { path: String, detail: String },
    #[error("no metrics.jsonl found under the given directories")]
    NoInputs,
    #[error("invalid sweep limits: {0}")]
    InvalidSweep(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.display().to_string(), source }
}

/// Everything a finished run leaves behind, both on disk and in memory.
#[derive(Debug)]
pub struct RunOutput {
    pub run_dir: PathBuf,
    pub metrics: Vec<CaseMetrics>,
    pub report: Vec<ReportRow>,
    pub cases: usize,
    pub failures: usize,
}

/// Merged analysis of one or more runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub rows: Vec<ReportRow>,
    pub icr_histogram: IcrHistogram,
    pub scatter: Vec<ScatterPoint>,
}

/// One point of a turn-budget sweep: pooled means over every case at that
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_turns: u32,
    pub icr_pct: f64,
    pub sr_pct: f64,
}

const RUN_CONFIG_KIND: &str = "run_config";

/// Deterministic provenance header embedded in every JSONL output: the
/// resolved run settings and role bindings, but nothing time-dependent and
/// no secrets (endpoints are named; API keys live in env vars).
fn provenance_header(config: &ResolvedConfig) -> serde_json::Value {
    let mut roles: Vec<serde_json::Value> = config
        .roles
        .manifest()
        .into_iter()
        .map(|(role, endpoint, model_id, temperature)| {
            json!({
                "role": role.name(),
                "endpoint": endpoint,
                "model_id": model_id,
                "temperature": temperature,
            })
        })
        .collect();
    let mut push_extra = |role: &str, endpoint: &Option<crate::gateway::Endpoint>| {
        if let Some(ep) = endpoint {
            roles.push(json!({
                "role": role,
                "endpoint": ep.name,
                "model_id": ep.model_id,
                "temperature": ep.default_temperature,
            }));
        }
    };
    if let Some(env) = &config.environment {
        push_extra("patient", &Some(env.patient.clone()));
        push_extra("reporter", &Some(env.reporter.clone()));
    }
    push_extra("judge", &config.judge);
    push_extra("constructor", &config.constructor);

    json!({
        "kind": RUN_CONFIG_KIND,
        "strategy": config.strategy,
        "max_turns": config.max_turns,
        "parallelism": config.parallelism,
        "seed_label": config.seed_label,
        "datasets": config
            .datasets
            .iter()
            .map(|d| json!({ "label": d.label, "path": d.path }))
            .collect::<Vec<_>>(),
        "roles": roles,
        "config": config.provenance,
    })
}

fn sanitize_id_part(part: &str) -> String {
    part.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

/// Create `<output_dir>/<run-id>/`, suffixing the id if a same-second rerun
/// already claimed it.
fn create_run_dir(config: &ResolvedConfig) -> Result<PathBuf, RunnerError> {
    let timestamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    let datasets = config
        .datasets
        .iter()
        .map(|d| sanitize_id_part(&d.label))
        .collect::<Vec<_>>()
        .join("+");
    let base = format!("{timestamp}-{}-{datasets}", config.strategy.label());
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    for attempt in 0..1000u32 {
        let name = if attempt == 0 { base.clone() } else { format!("{base}-{attempt}") };
        let candidate = config.output_dir.join(name);
        match std::fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(source) => return Err(io_err(&candidate)(source)),
        }
    }
    Err(RunnerError::Io {
        path: config.output_dir.display().to_string(),
        source: std::io::Error::other("exhausted run-directory name attempts"),
    })
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    header: &serde_json::Value,
    rows: &[T],
) -> Result<(), RunnerError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut line = |value: String| -> Result<(), RunnerError> {
        writeln!(out, "{value}").map_err(io_err(path))
    };
    line(header.to_string())?;
    for row in rows {
        line(serde_json::to_string(row).expect("rows serialize"))?;
    }
    out.flush().map_err(io_err(path))
}

fn fmt_pct(value: f64) -> String {
    format!("{value:.1}")
}

fn fmt_opt_pct(value: Option<f64>) -> String {
    value.map(fmt_pct).unwrap_or_else(|| "-".to_string())
}

/// Render report rows as a tab-separated table (percentages to one
/// decimal), preceded by `# `-prefixed provenance comments.
pub fn render_report_tsv(rows: &[ReportRow], comments: &[String]) -> String {
    let mut out = String::new();
    for comment in comments {
        out.push_str("# ");
        out.push_str(comment);
        out.push('\n');
    }
    out.push_str(
        "dataset\tmodel\tstrategy\tcases\tfailures\tub_pct\ticr_pct\tsr_pct\tdrop_pct\tmean_turns\tmean_verifier_rounds\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.2}\t{:.2}\n",
            row.dataset,
            row.model,
            row.strategy,
            row.cases,
            row.failures,
            fmt_opt_pct(row.ub_pct),
            fmt_pct(row.icr_pct),
            fmt_pct(row.sr_pct),
            fmt_opt_pct(row.drop_pct),
            row.mean_turns,
            row.mean_verifier_rounds,
        ));
    }
    out
}

/// Metrics for a case whose judge call failed: coverage is still measured,
/// correctness is conservatively false.
fn unjudged_metrics(
    case: &CaseRecord,
    transcript: &ConsultationTranscript,
    error: String,
) -> CaseMetrics {
    let icr = compute_icr(&transcript.revealed, &relevant_set(case)).ok();
    let mut flags = transcript.coercion_flags.clone();
    flags.push("judge_failed".to_string());
    CaseMetrics {
        case_id: case.case_id.clone(),
        dataset: case.dataset.clone(),
        strategy: transcript.strategy,
        model: transcript.model_label.clone(),
        task_kind: case.task_kind,
        collected: icr.map_or(0, |i| i.collected),
        relevant: icr.map_or(0, |i| i.relevant),
        icr: icr.map_or(0.0, |i| i.fraction()),
        sr: false,
        per_item_scores: None,
        turns_used: transcript.turns_used,
        verifier_rounds: transcript.verifier_rounds,
        flags,
        failed: true,
        error: Some(error),
    }
}

/// Run every configured case under the configured strategy, score it, and
/// persist transcripts, metrics, and the aggregate report.
///
/// Episode and judge failures are isolated into their case's records;
/// the run itself only fails on configuration or I/O problems.
pub async fn execute_run(config: &ResolvedConfig) -> Result<RunOutput, RunnerError> {
    config.validate_for_run()?;

    let mut cases: Vec<CaseRecord> = Vec::new();
    for dataset in &config.datasets {
        cases.extend(load_cases(&dataset.path, &dataset.label)?);
    }

    let run_dir = create_run_dir(config)?;
    let header = provenance_header(config);

    let transcripts = run_batch(
        &cases,
        config.strategy,
        &config.roles,
        config.environment.as_ref(),
        config.max_turns,
        config.parallelism,
    )
    .await;

    // Judge concurrently, one judge session per case so scripted judges
    // replay independently; order is preserved.
    let judge = config.judge.clone().expect("validated");
    let metrics: Vec<CaseMetrics> = futures::stream::iter(
        cases.iter().zip(&transcripts).map(|(case, transcript)| {
            let judge = judge.session();
            async move {
                match score_case(case, transcript, &judge).await {
                    Ok(m) => m,
                    Err(e) => {
                        tracing::warn!(case_id = %case.case_id, error = %e, "judging failed");
                        unjudged_metrics(case, transcript, e.to_string())
                    }
                }
            }
        }),
    )
    .buffered(config.parallelism)
    .collect()
    .await;

    write_jsonl(&run_dir.join("transcripts.jsonl"), &header, &transcripts)?;
    write_jsonl(&run_dir.join("metrics.jsonl"), &header, &metrics)?;

    let report = aggregate(&metrics);
    let bundle = ReportBundle {
        rows: report.clone(),
        icr_histogram: icr_histograms(&metrics),
        scatter: scatter_points(&metrics),
    };

    let config_json = json!({
        "run_id": run_dir.file_name().and_then(|n| n.to_str()),
        "started_at": chrono::Utc::now().to_rfc3339(),
        "provenance": header,
    });
    let config_path = run_dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config_json).expect("serializes"))
        .map_err(io_err(&config_path))?;

    let tsv_path = run_dir.join("report.tsv");
    std::fs::write(&tsv_path, render_report_tsv(&report, &[header.to_string()]))
        .map_err(io_err(&tsv_path))?;
    let json_path = run_dir.join("report.json");
    let report_json = json!({ "provenance": header, "report": bundle });
    std::fs::write(&json_path, serde_json::to_string_pretty(&report_json).expect("serializes"))
        .map_err(io_err(&json_path))?;

    let failures = metrics.iter().filter(|m| m.failed).count();
    if failures > 0 {
        tracing::warn!(failures, cases = metrics.len(), "run finished with failed cases");
    }
    Ok(RunOutput { run_dir, cases: metrics.len(), failures, metrics, report })
}

/// Re-run the whole configuration once per turn limit and pool each run's
/// per-case results into one (limit, icr, sr) row.
pub async fn execute_sweep(
    config: &ResolvedConfig,
    limits: &[u32],
) -> Result<(Vec<SweepRow>, Vec<RunOutput>), RunnerError> {
    if limits.is_empty() {
        return Err(RunnerError::InvalidSweep("at least one turn limit is required".into()));
    }
    if limits.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RunnerError::InvalidSweep(format!(
            "limits must be strictly ascending, got {limits:?}"
        )));
    }
    if limits[0] < 1 {
        return Err(RunnerError::InvalidSweep("turn limits must be at least 1".into()));
    }

    let mut rows = Vec::with_capacity(limits.len());
    let mut outputs = Vec::with_capacity(limits.len());
    for &limit in limits {
        let mut swept = config.clone();
        swept.max_turns = limit;
        let output = execute_run(&swept).await?;
        let n = output.metrics.len() as f64;
        rows.push(SweepRow {
            max_turns: limit,
            icr_pct: 100.0 * output.metrics.iter().map(|m| m.icr).sum::<f64>() / n,
            sr_pct: 100.0 * output.metrics.iter().filter(|m| m.sr).count() as f64 / n,
        });
        outputs.push(output);
    }
    Ok((rows, outputs))
}

/// Render sweep rows as a small tab-separated table.
pub fn render_sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("max_turns\ticr_pct\tsr_pct\n");
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            row.max_turns,
            fmt_pct(row.icr_pct),
            fmt_pct(row.sr_pct)
        ));
    }
    out
}

/// Read every `<dir>/metrics.jsonl`, skipping provenance headers.
pub fn load_metrics(dirs: &[PathBuf]) -> Result<Vec<CaseMetrics>, RunnerError> {
    let mut rows = Vec::new();
    let mut found = false;
    for dir in dirs {
        let path = dir.join("metrics.jsonl");
        if !path.exists() {
            continue;
        }
        found = true;
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        for (number, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| RunnerError::Json {
                    path: path.display().to_string(),
                    detail: format!("line {}: {e}", number + 1),
                })?;
            if value.get("kind").and_then(|k| k.as_str()) == Some(RUN_CONFIG_KIND) {
                continue;
            }
            let row: CaseMetrics =
                serde_json::from_value(value).map_err(|e| RunnerError::Json {
                    path: path.display().to_string(),
                    detail: format!("line {}: {e}", number + 1),
                })?;
            rows.push(row);
        }
    }
    if !found {
        return Err(RunnerError::NoInputs);
    }
    Ok(rows)
}

/// Pure aggregation of already-stored metrics into the merged report.
pub fn build_report(metrics: &[CaseMetrics]) -> ReportBundle {
    ReportBundle {
        rows: aggregate(metrics),
        icr_histogram: icr_histograms(metrics),
        scatter: scatter_points(metrics),
    }
}

/// Write the merged report (`report.tsv`, `report.json`, `scatter.csv`)
/// into `dir`, recording the source run directories as provenance.
pub fn write_report_files(
    bundle: &ReportBundle,
    sources: &[PathBuf],
    dir: &Path,
) -> Result<(), RunnerError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let sources: Vec<String> = sources.iter().map(|p| p.display().to_string()).collect();

    let tsv_path = dir.join("report.tsv");
    let comment = format!("sources: {}", sources.join(", "));
    std::fs::write(&tsv_path, render_report_tsv(&bundle.rows, &[comment]))
        .map_err(io_err(&tsv_path))?;

    let json_path = dir.join("report.json");
    let payload = json!({ "sources": sources, "report": bundle });
    std::fs::write(&json_path, serde_json::to_string_pretty(&payload).expect("serializes"))
        .map_err(io_err(&json_path))?;

    let csv_path = dir.join("scatter.csv");
    let mut csv = String::from("model,strategy,mean_icr,mean_sr\n");
    for point in &bundle.scatter {
        csv.push_str(&format!(
            "{},{},{:.4},{:.4}\n",
            point.model,
            point.strategy,
            point.mean_icr,
            point.mean_sr
        ));
    }
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))
}
