//! Command-line front end for the consultation harness.
//!
//! Every subcommand except `report` starts from the same TOML configuration
//! file; the global flags override individual settings without editing it.
//! Configuration problems exit with code 2 so scripts can tell a bad setup
//! apart from a run that started and then hit trouble (exit 1). Per-case
//! failures inside a run are recorded in the output files and do not change
//! the exit code.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anamnesis_core::case::{load_cases, save_cases};
use anamnesis_core::config::{ConfigError, FileConfig, Overrides, ResolvedConfig};
use anamnesis_core::construction::{construct_cases, dataset_stats, load_narratives, sanity_check};
use anamnesis_core::runner::{
    build_report, execute_run, execute_sweep, load_metrics, render_report_tsv, render_sweep_tsv,
    write_report_files, RunnerError,
};
use anamnesis_core::strategies::Strategy;
use anyhow::Context;
use clap::{Parser, Subcommand};

/// Interactive evaluation harness for evidence-collecting diagnostic agents.
#[derive(Parser)]
#[command(name = "anamnesis", version, about)]
struct Cli {
    /// Path to the TOML configuration file.
    #[arg(long, global = true, default_value = "anamnesis.toml")]
    config: PathBuf,

    /// Override the configured strategy (baseline, react, sc, refine, static-ub).
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<Strategy>,

    /// Override the per-case interaction turn budget.
    #[arg(long, global = true)]
    max_turns: Option<u32>,

    /// Override how many cases run concurrently.
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    /// Rebind roles to endpoints, e.g. `--roles collector=fast,judge=strict`.
    #[arg(long, global = true)]
    roles: Option<RoleBindings>,

    /// Override the directory run artifacts are written under.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every configured dataset once and write run artifacts.
    Run,
    /// Repeat the run across ascending turn budgets and tabulate the trend.
    Sweep {
        /// Comma-separated turn budgets, strictly ascending (e.g. 2,4,8,16).
        #[arg(long, value_delimiter = ',', required = true)]
        limits: Vec<u32>,
    },
    /// Rebuild aggregate tables from previously written run directories.
    Report {
        /// Run directories containing a metrics.jsonl file.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory to write the merged report files into.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Split raw case narratives into atomic-evidence case files.
    Construct {
        /// JSON array of narratives: case_id, dataset, task_kind,
        /// reference_diagnosis, original_text.
        #[arg(long)]
        input: PathBuf,
        /// Where to write the constructed case file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Diagnose each case twice from static text — original narrative, then
    /// concatenated facts — and report the paired success rates.
    SanityCheck {
        /// Constructed case file to audit (must retain original_text).
        #[arg(long)]
        cases: PathBuf,
        /// Dataset label for cases that do not carry their own.
        #[arg(long, default_value = "sanity")]
        label: String,
    },
}

/// Comma-separated `role=endpoint` pairs, parsed while clap still owns the
/// error so malformed values surface as usage errors.
#[derive(Clone, Debug)]
struct RoleBindings(Vec<(String, String)>);

impl std::str::FromStr for RoleBindings {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut pairs = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (role, endpoint) = part
                .split_once('=')
                .ok_or_else(|| format!("expected role=endpoint, got `{part}`"))?;
            pairs.push((role.trim().to_string(), endpoint.trim().to_string()));
        }
        if pairs.is_empty() {
            return Err("expected at least one role=endpoint pair".into());
        }
        Ok(Self(pairs))
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_label(s).ok_or_else(|| {
        let known: Vec<&str> = Strategy::ALL.iter().map(|st| st.label()).collect();
        format!("unknown strategy `{s}`; expected one of: {}", known.join(", "))
    })
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match dispatch(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Exit 2 for configuration problems, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let config_error = err.downcast_ref::<ConfigError>().is_some()
        || matches!(err.downcast_ref::<RunnerError>(), Some(RunnerError::Config(_)));
    if config_error {
        2
    } else {
        1
    }
}

async fn dispatch(cli: Cli) -> anyhow::Result<()> {
    // `report` is pure over previously written JSONL and must not require a
    // config file to exist.
    if let Command::Report { runs, out } = &cli.command {
        return report(runs, out);
    }

    let mut file = FileConfig::load(&cli.config)
        .with_context(|| format!("loading {}", cli.config.display()))?;
    file.apply_overrides(&Overrides {
        strategy: cli.strategy,
        max_turns: cli.max_turns,
        parallelism: cli.parallelism,
        roles: cli.roles.map(|r| r.0).unwrap_or_default(),
        output_dir: cli.output_dir,
    })?;
    let config = file.resolve()?;

    match cli.command {
        Command::Run => run(&config).await,
        Command::Sweep { limits } => sweep(&config, &limits).await,
        Command::Construct { input, out } => construct(&config, &input, &out).await,
        Command::SanityCheck { cases, label } => check(&config, &cases, &label).await,
        Command::Report { .. } => unreachable!("handled above"),
    }
}

async fn run(config: &ResolvedConfig) -> anyhow::Result<()> {
    let output = execute_run(config).await?;
    print!("{}", render_report_tsv(&output.report, &[]));
    println!(
        "{} cases ({} failed) -> {}",
        output.cases,
        output.failures,
        output.run_dir.display()
    );
    Ok(())
}

async fn sweep(config: &ResolvedConfig, limits: &[u32]) -> anyhow::Result<()> {
    let (rows, outputs) = execute_sweep(config, limits).await?;
    let table = render_sweep_tsv(&rows);
    print!("{table}");

    let path = config.output_dir.join("sweep.tsv");
    std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    for output in &outputs {
        println!(
            "{} cases ({} failed) -> {}",
            output.cases,
            output.failures,
            output.run_dir.display()
        );
    }
    println!("sweep table -> {}", path.display());
    Ok(())
}

fn report(runs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let metrics = load_metrics(runs)?;
    let bundle = build_report(&metrics);
    write_report_files(&bundle, runs, out)?;
    print!("{}", render_report_tsv(&bundle.rows, &[]));
    println!("{} cases merged -> {}", metrics.len(), out.display());
    Ok(())
}

async fn construct(config: &ResolvedConfig, input: &Path, out: &Path) -> anyhow::Result<()> {
    config.validate_for_construct()?;
    let constructor = config.constructor.as_ref().expect("validated");

    let narratives = load_narratives(input)?;
    let outcome = construct_cases(&narratives, constructor, config.parallelism).await;
    save_cases(out, &outcome.cases)?;

    println!("dataset\tcases\tmean_patient_evidences\tmean_exam_evidences");
    for row in dataset_stats(&outcome.cases) {
        println!(
            "{}\t{}\t{:.2}\t{:.2}",
            row.dataset, row.cases, row.mean_patient_evidences, row.mean_exam_evidences
        );
    }
    for (case_id, reason) in &outcome.failures {
        eprintln!("construction failed for {case_id}: {reason}");
    }
    println!(
        "{} of {} cases constructed -> {}",
        outcome.cases.len(),
        narratives.len(),
        out.display()
    );
    Ok(())
}

async fn check(config: &ResolvedConfig, cases: &Path, label: &str) -> anyhow::Result<()> {
    config.validate_for_sanity_check()?;
    let reasoner = config.roles.reasoner.as_ref().expect("validated");
    let judge = config.judge.as_ref().expect("validated");

    let cases = load_cases(cases, label)?;
    let rows = sanity_check(&cases, reasoner, judge).await?;

    println!("dataset\tcases\tsr_original_pct\tsr_concatenated_pct\tgap_pct");
    for row in &rows {
        println!(
            "{}\t{}\t{:.1}\t{:.1}\t{:.1}",
            row.dataset, row.cases, row.sr_original_pct, row.sr_concatenated_pct, row.gap_pct
        );
    }
    Ok(())
}
