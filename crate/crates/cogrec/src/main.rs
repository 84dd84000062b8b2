//! `cogrec`: bootstrap rules, run single sessions, evaluate and plot.
//!
//! Exit codes: 0 ok, 2 config, 3 data, 4 provider, 5 internal invariant.
//! On failure the last stderr line is `{"error":<kind>,"code":<n>,"message":<text>}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cogrec::config::{Config, ConfigError, DatasetFormat, ProviderMode};
use cogrec::experiment::{
    bootstrap_memory, run_experiment, run_experiment_with_rules, Bootstrapped, EvalData, ExperimentError,
    ExperimentOutput, ExperimentSettings, Variant,
};
use cogrec::explain::{to_jsonl, SessionRecord};
use cogrec::gateway::Gateway;
use cogrec::loaders::{load_dataset, Dataset, LoadError};
use cogrec::manifest::RunManifest;
use cogrec::report::{Report, RunMeta};
use cogrec::rules_io::{self, RulesError};
use cogrec::{fixtures, plot, trace_view};
use cogrec_core::agent::{run_session, AgentError, SessionInput};
use cogrec_core::data::{DataError, DatasetStats, Interaction, UserId};
use cogrec_core::llm::{default_bootstrap_templates, BootstrapError, LanguageModel, ProviderError};

#[derive(Parser)]
#[command(name = "cogrec", version, about = "Rule-based recommender agent with model-assisted impasse resolution")]
struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Parallel session workers; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `provider.mode`: oracle, live or replay.
    #[arg(long, global = true)]
    provider: Option<ProviderMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the initial rules with the model and save them.
    Bootstrap,
    /// Run one user's session and print its reasoning steps.
    Run {
        /// User id; defaults to the first user in the dataset.
        #[arg(long)]
        user: Option<String>,
        /// Built-in fixture to use as the dataset (`case-study`).
        #[arg(long)]
        fixture: Option<String>,
        /// Number of recommendations; overrides `session.k`.
        #[arg(long)]
        k: Option<usize>,
        /// Free-text request passed to the model.
        #[arg(long, default_value = "")]
        query: String,
        /// Start from this rules file instead of bootstrapping.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Evaluate the configured variants.
    Eval {
        /// Overrides `experiment.max_users`.
        #[arg(long)]
        max_users: Option<usize>,
    },
    /// Evaluate an explicit list of variants.
    Ablate {
        /// Comma-separated variant names.
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        /// Overrides `experiment.max_users`.
        #[arg(long)]
        max_users: Option<usize>,
    },
    /// Render a saved session file as a numbered list of steps.
    Trace { file: PathBuf },
    /// Parse and validate a rules file.
    ValidateRules { file: PathBuf },
    /// Write SVG charts for a saved report.
    Plot { report: PathBuf },
    /// Repeat the command recorded in an output directory's manifest.
    Rerun {
        dir: PathBuf,
        /// Write into this directory instead of the recorded one.
        #[arg(long = "into")]
        into: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Config,
    Data,
    Provider,
    Invariant,
}

impl Kind {
    fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Provider => 4,
            Kind::Invariant => 5,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Provider => "provider",
            Kind::Invariant => "invariant",
        }
    }
}

/// A failure the caller caused, tagged with its kind.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
struct Tagged {
    kind: Kind,
    message: String,
}

fn fail(kind: Kind, message: impl Into<String>) -> anyhow::Error {
    Tagged { kind, message: message.into() }.into()
}

fn agent_kind(e: &AgentError) -> Kind {
    match e {
        AgentError::ZeroK => Kind::Config,
        AgentError::Bootstrap(_) => Kind::Provider,
        AgentError::Rule(_) => Kind::Data,
        AgentError::Engine(_) | AgentError::BuiltinRules(_) => Kind::Invariant,
    }
}

fn classify(e: &anyhow::Error) -> Kind {
    for cause in e.chain() {
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return t.kind;
        }
        if cause.is::<ConfigError>() {
            return Kind::Config;
        }
        if cause.is::<LoadError>() || cause.is::<DataError>() || cause.is::<RulesError>() {
            return Kind::Data;
        }
        if cause.is::<ProviderError>() || cause.is::<BootstrapError>() {
            return Kind::Provider;
        }
        if let Some(a) = cause.downcast_ref::<AgentError>() {
            return agent_kind(a);
        }
        if let Some(x) = cause.downcast_ref::<ExperimentError>() {
            return match x {
                ExperimentError::NoUsers => Kind::Data,
                ExperimentError::Agent(a) => agent_kind(a),
                ExperimentError::TooManyFailures { .. } => Kind::Invariant,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return Kind::Data;
        }
    }
    Kind::Invariant
}

fn error_line(kind: Kind, message: &str) -> String {
    serde_json::json!({ "error": kind.name(), "code": kind.code(), "message": message }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("cogrec=info")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            eprintln!("{}", error_line(Kind::Config, &first));
            return ExitCode::from(Kind::Config.code());
        }
    };
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            eprintln!("{}", error_line(kind, &format!("{e:#}")));
            ExitCode::from(kind.code())
        }
    }
}

/// Configuration with the command-line overrides applied.
fn effective_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
    }
    if let Some(mode) = cli.provider {
        config.provider.mode = mode;
    }
    config.validate()?;
    absolutize(&mut config)?;
    Ok(config)
}

/// Makes every configured path absolute so the written config.toml works
/// from any directory.
fn absolutize(config: &mut Config) -> anyhow::Result<()> {
    let paths = [
        &mut config.dataset.path,
        &mut config.dataset.items,
        &mut config.dataset.mapping,
        &mut config.session.rules_file,
        &mut config.provider.cache_dir,
    ];
    for p in paths.into_iter().flatten() {
        *p = std::path::absolute(&*p).with_context(|| format!("cannot resolve {}", p.display()))?;
    }
    Ok(())
}

fn execute(cli: Cli, argv: Vec<String>) -> anyhow::Result<()> {
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    match &cli.command {
        Command::Trace { file } => {
            let text = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
            let record = SessionRecord::from_json(&text).with_context(|| format!("{} is not a session file", file.display()))?;
            print!("{}", trace_view::render(&record));
            Ok(())
        }
        Command::ValidateRules { file } => {
            let pm = rules_io::load(file)?;
            println!("{}: {} rules OK", file.display(), pm.len());
            Ok(())
        }
        Command::Rerun { dir, into } => rerun(dir, into.as_deref()),
        Command::Plot { report } => {
            let config = effective_config(&cli)?;
            let text = std::fs::read_to_string(report).with_context(|| format!("cannot read {}", report.display()))?;
            let report = Report::from_json(&text).context("not a report file")?;
            write_manifest(&argv, &cli, &config)?;
            write_charts(&report, &cli.out)?;
            println!("charts written to {}", cli.out.display());
            Ok(())
        }
        Command::Bootstrap => {
            let config = effective_config(&cli)?;
            let data = load_dataset(&config)?;
            let gateway = gateway(&config, &data)?;
            write_manifest(&argv, &cli, &config)?;
            let session = config.session.to_session_config(false);
            let templates = default_bootstrap_templates();
            let b = bootstrap_memory(Some(&gateway), &data.catalog, &templates, &config.dataset.domain, &session)?;
            if b.report.added == 0 && config.session.bootstrap {
                return Err(fail(Kind::Provider, "bootstrap added no rules"));
            }
            rules_io::save(&b.memory, &cli.out.join("rules.soar"))?;
            write(&cli.out.join("calls.csv"), gateway.ledger().to_csv())?;
            for (template, reason) in &b.report.failed_templates {
                log::warn!("template {template} failed: {reason}");
            }
            println!(
                "{} rules ({} generated, {} added, {} duplicates, {} rejected lines) written to {}",
                b.memory.len(),
                b.report.generated,
                b.report.added,
                b.report.duplicates,
                b.report.rejected_lines,
                cli.out.join("rules.soar").display()
            );
            Ok(())
        }
        Command::Run { user, fixture, k, query, rules } => {
            let mut config = effective_config(&cli)?;
            match fixture.as_deref() {
                None => {}
                Some("case-study") => {
                    config.dataset.format = DatasetFormat::CaseStudy;
                    config.dataset.id = String::from("case-study");
                }
                Some(other) => return Err(fail(Kind::Config, format!("unknown fixture '{other}'"))),
            }
            if let Some(k) = k {
                config.session.k = *k;
            }
            if let Some(path) = rules {
                config.session.rules_file = Some(path.clone());
            }
            config.validate()?;
            absolutize(&mut config)?;
            let data = load_dataset(&config)?;
            let gateway = gateway(&config, &data)?;
            write_manifest(&argv, &cli, &config)?;
            let user = match user {
                Some(u) => UserId::new(u),
                None if config.dataset.format == DatasetFormat::CaseStudy => UserId::from(fixtures::CASE_STUDY_USER),
                None => data.interactions.first().map(|x| x.user.clone()).ok_or_else(|| fail(Kind::Data, "dataset has no users"))?,
            };
            let mut history: Vec<Interaction> = data.interactions.iter().filter(|x| x.user == user).cloned().collect();
            if history.is_empty() {
                return Err(fail(Kind::Data, format!("user {user} has no interactions")));
            }
            history.sort_by_key(|x| x.timestamp);
            let session = config.session.to_session_config(true);
            let mut pm = start_rules(&config, &gateway, &data)?.memory;
            let name = format!("u{user}");
            let input = SessionInput { session: &name, user, history: &history, query };
            let result = run_session(&input, &data.catalog, &mut pm, Some(&gateway), &session)?;
            let record = SessionRecord::new(&result, &data.catalog);
            write(&cli.out.join("session.json"), record.to_json())?;
            write(&cli.out.join("explanations.jsonl"), to_jsonl(&record.explanations))?;
            write(&cli.out.join("calls.csv"), gateway.ledger().to_csv())?;
            rules_io::save(&pm, &cli.out.join("rules-after.soar"))?;
            let steps = trace_view::render(&record);
            write(&cli.out.join("trace.txt"), steps.clone())?;
            print!("{steps}");
            for item in &record.items {
                println!("{:>3}. {} ({}) via {}", item.rank, item.title, item.item, item.resolution);
            }
            Ok(())
        }
        Command::Eval { max_users } => {
            let mut config = effective_config(&cli)?;
            if max_users.is_some() {
                config.experiment.max_users = *max_users;
            }
            let variants = config.experiment.variants.clone();
            evaluate(&argv, &cli, config, &variants, jobs)
        }
        Command::Ablate { variants, max_users } => {
            let mut config = effective_config(&cli)?;
            if max_users.is_some() {
                config.experiment.max_users = *max_users;
            }
            config.experiment.variants = variants.clone();
            config.validate()?;
            evaluate(&argv, &cli, config, variants, jobs)
        }
    }
}

fn write(path: &Path, text: String) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_manifest(argv: &[String], cli: &Cli, config: &Config) -> anyhow::Result<()> {
    RunManifest::new(argv.to_vec(), cli.config.as_deref(), config, &cli.out)
        .write(config)
        .with_context(|| format!("cannot write the manifest into {}", cli.out.display()))
}

fn write_charts(report: &Report, dir: &Path) -> anyhow::Result<()> {
    write(&dir.join("lcf.svg"), plot::lcf_chart(report))?;
    write(&dir.join("head-tail.svg"), plot::head_tail_chart(report))
}

fn gateway(config: &Config, data: &Dataset) -> anyhow::Result<Gateway> {
    if config.provider.mode == ProviderMode::Live && std::env::var_os(&config.provider.api_key_env).is_none() {
        return Err(fail(Kind::Provider, format!("live provider needs the {} environment variable", config.provider.api_key_env)));
    }
    if config.provider.mode == ProviderMode::Replay && config.provider.cache_dir.is_none() {
        return Err(fail(Kind::Config, "replay provider needs provider.cache_dir"));
    }
    Gateway::new(&config.provider, data.catalog.clone()).map_err(|e| fail(Kind::Provider, format!("cannot open the response cache: {e}")))
}

/// The session's starting rules: the configured rules file, or a bootstrap.
fn start_rules(config: &Config, model: &dyn LanguageModel, data: &Dataset) -> anyhow::Result<Bootstrapped> {
    if let Some(path) = &config.session.rules_file {
        let memory = rules_io::load(path)?;
        return Ok(Bootstrapped { memory, report: Default::default(), ledger: Default::default() });
    }
    let session = config.session.to_session_config(false);
    Ok(bootstrap_memory(Some(model), &data.catalog, &default_bootstrap_templates(), &config.dataset.domain, &session)?)
}

fn evaluate(argv: &[String], cli: &Cli, config: Config, names: &[String], jobs: usize) -> anyhow::Result<()> {
    let variants = names
        .iter()
        .map(|n| n.parse::<Variant>().map_err(|e| fail(Kind::Config, e)))
        .collect::<anyhow::Result<Vec<Variant>>>()?;
    let data = load_dataset(&config)?;
    let gateway = gateway(&config, &data)?;
    write_manifest(argv, cli, &config)?;
    let eval = EvalData::new(data.catalog.clone(), &data.interactions, config.experiment.max_users)?;
    let settings = ExperimentSettings {
        session: config.session.to_session_config(false),
        eval_k: config.experiment.eval_k,
        lcf_bucket: config.experiment.lcf_bucket,
        max_failure_rate: config.experiment.max_failure_rate,
        domain: config.dataset.domain.clone(),
        jobs,
        keep_explanations: true,
    };
    let model: &dyn LanguageModel = &gateway;
    let out: ExperimentOutput = match &config.session.rules_file {
        Some(path) => run_experiment_with_rules(&eval, &variants, Some(model), &settings, &rules_io::load(path)?)?,
        None => run_experiment(&eval, &variants, Some(model), &settings)?,
    };
    let stats = DatasetStats::of(&data.interactions);
    let meta = RunMeta {
        config_hash: config.hash(),
        seed: config.experiment.seed,
        provider_mode: config.provider.mode.as_str().to_string(),
        dataset_id: data.id.clone(),
        users: eval.splits.len(),
        items: stats.items,
        interactions: stats.interactions,
        sparsity: stats.sparsity(),
        eval_k: config.experiment.eval_k,
    };
    let report = Report::new(meta, &out);
    report.write(&cli.out).with_context(|| format!("cannot write the report into {}", cli.out.display()))?;
    write_charts(&report, &cli.out)?;
    write(&cli.out.join("calls.csv"), gateway.ledger().to_csv())?;
    let mut explanations = String::new();
    for v in &out.variants {
        for o in &v.outcomes {
            let records: Vec<_> = o.explanations.iter().map(|e| cogrec::explain::ExplanationRecord::new(&o.user, e)).collect();
            for line in to_jsonl(&records).lines() {
                explanations.push_str(&format!("{{\"variant\":{},\"explanation\":{line}}}\n", serde_json::json!(v.variant.name())));
            }
        }
    }
    write(&cli.out.join("explanations.jsonl"), explanations)?;
    if let Some(b) = &out.bootstrap {
        rules_io::save(&b.memory, &cli.out.join("rules.soar"))?;
    }
    print!("{}", report.table());
    Ok(())
}

/// Rebuilds the recorded command line against the recorded configuration.
fn rerun(dir: &Path, into: Option<&Path>) -> anyhow::Result<()> {
    let manifest = RunManifest::read(dir).with_context(|| format!("no manifest in {}", dir.display()))?;
    let mut argv = Vec::new();
    let mut recorded = manifest.command.into_iter();
    argv.push(recorded.next().unwrap_or_else(|| String::from("cogrec")));
    let mut recorded = recorded.peekable();
    while let Some(arg) = recorded.next() {
        if arg == "--config" || arg == "--out" {
            recorded.next();
        } else if !arg.starts_with("--config=") && !arg.starts_with("--out=") {
            argv.push(arg);
        }
    }
    argv.push(String::from("--config"));
    argv.push(dir.join("config.toml").display().to_string());
    argv.push(String::from("--out"));
    argv.push(into.unwrap_or(&manifest.output_dir).display().to_string());
    let cli = Cli::try_parse_from(&argv).map_err(|e| fail(Kind::Config, format!("recorded command is invalid: {e}")))?;
    if matches!(cli.command, Command::Rerun { .. }) {
        return Err(fail(Kind::Config, "recorded command is itself a rerun"));
    }
    execute(cli, argv)
}
