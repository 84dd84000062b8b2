//! Evaluation over leave-one-out splits: CogRec, its ablations and a
//! popularity baseline, with head/tail metrics and the call-frequency curve.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use cogrec_core::agent::{
    bootstrap, builtin_memory, run_session, AgentError, BootstrapReport, ChunkScope, Explanation, SessionConfig,
    SessionInput,
};
use cogrec_core::data::{head_tail_partition, split_leave_one_out, Catalog, HeadTail, Interaction, ItemId, Split, UserId};
use cogrec_core::engine::ProceduralMemory;
use cogrec_core::llm::{default_bootstrap_templates, BootstrapTemplate, LanguageModel, LedgerSlice};
use cogrec_core::metrics::{lcf_curve, rank_of, CurvePoint, MetricSums, RankingMetrics};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    NoBootstrap,
    NoChunking,
    NoSoar,
    /// The rule engine with the built-in rules and no model.
    RulesOnly,
    /// Most-interacted training items, ties by id.
    Popularity,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Full, Variant::NoBootstrap, Variant::NoChunking, Variant::NoSoar, Variant::RulesOnly, Variant::Popularity];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoBootstrap => "w/o-bootstrap",
            Variant::NoChunking => "w/o-chunking",
            Variant::NoSoar => "w/o-soar",
            Variant::RulesOnly => "rules-only",
            Variant::Popularity => "popularity",
        }
    }

    /// The session settings this variant runs with, or `None` when it does
    /// not use the agent.
    pub fn session_config(self, base: &SessionConfig) -> Option<SessionConfig> {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoBootstrap => c.bootstrap = false,
            Variant::NoChunking => c.chunking = false,
            Variant::NoSoar => c.soar = false,
            Variant::RulesOnly => {
                c.bootstrap = false;
                c.chunking = false;
            }
            Variant::Popularity => return None,
        }
        Some(c)
    }

    fn uses_model(self) -> bool {
        !matches!(self, Variant::RulesOnly | Variant::Popularity)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("no users to evaluate")]
    NoUsers,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{variant}: {failed} of {total} sessions failed, above the allowed rate {allowed}")]
    TooManyFailures { variant: Variant, failed: usize, total: usize, allowed: f64 },
}

/// Filtered interactions, their splits and the head/tail partition of the
/// training interactions.
pub struct EvalData {
    pub catalog: Arc<Catalog>,
    pub splits: Vec<Split>,
    pub head_tail: HeadTail,
    popularity: Vec<ItemId>,
}

impl EvalData {
    pub fn new(catalog: Arc<Catalog>, interactions: &[Interaction], max_users: Option<usize>) -> Result<Self, ExperimentError> {
        let mut splits = split_leave_one_out(interactions);
        if let Some(n) = max_users {
            splits.truncate(n);
        }
        if splits.is_empty() {
            return Err(ExperimentError::NoUsers);
        }
        let train: Vec<Interaction> = split_leave_one_out(interactions).into_iter().flat_map(|s| s.train).collect();
        let head_tail = head_tail_partition(&train);
        let mut counts: BTreeMap<&ItemId, usize> = BTreeMap::new();
        for x in &train {
            *counts.entry(&x.item).or_default() += 1;
        }
        let mut ranked: Vec<(&ItemId, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let popularity = ranked.into_iter().map(|(i, _)| i.clone()).collect();
        Ok(EvalData { catalog, splits, head_tail, popularity })
    }

    fn popular_unseen(&self, split: &Split, k: usize) -> Vec<ItemId> {
        let seen = split.train_items();
        self.popularity.iter().filter(|i| !seen.contains(*i)).take(k).cloned().collect()
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSettings {
    pub session: SessionConfig,
    pub eval_k: usize,
    pub lcf_bucket: usize,
    pub max_failure_rate: f64,
    pub domain: String,
    pub jobs: usize,
    /// Keep per-item explanations in the outcomes.
    pub keep_explanations: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            session: SessionConfig::default(),
            eval_k: 20,
            lcf_bucket: 50,
            max_failure_rate: 0.01,
            domain: String::from("movie"),
            jobs: 1,
            keep_explanations: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub user: UserId,
    pub test: ItemId,
    pub items: Vec<ItemId>,
    pub rank: Option<usize>,
    pub ledger: LedgerSlice,
    pub impasses: usize,
    pub chunks_learned: usize,
    pub fallback_items: usize,
    pub truncated: bool,
    pub explanations: Vec<Explanation>,
}

#[derive(Clone, Debug)]
pub struct VariantReport {
    pub variant: Variant,
    pub overall: RankingMetrics,
    pub head: RankingMetrics,
    pub tail: RankingMetrics,
    pub lcf: Vec<CurvePoint>,
    pub ledger: LedgerSlice,
    pub sessions: usize,
    pub failed: usize,
    pub impasses: usize,
    pub chunks_learned: usize,
    pub fallback_items: usize,
    pub truncated: usize,
    pub rules_at_end: usize,
    pub outcomes: Vec<SessionOutcome>,
}

/// The starting procedural memory of a variant.
pub struct Bootstrapped {
    pub memory: ProceduralMemory,
    pub report: BootstrapReport,
    pub ledger: LedgerSlice,
}

pub fn bootstrap_memory(
    model: Option<&dyn LanguageModel>,
    catalog: &Catalog,
    templates: &[BootstrapTemplate],
    domain: &str,
    session: &SessionConfig,
) -> Result<Bootstrapped, AgentError> {
    let mut ledger = LedgerSlice::default();
    let (memory, report) = bootstrap(model, &mut ledger, catalog, templates, domain, session)?;
    Ok(Bootstrapped { memory, report, ledger })
}

fn session_name(split: &Split) -> String {
    format!("u{}", split.user)
}

fn run_one(
    split: &Split,
    catalog: &Catalog,
    pm: &mut ProceduralMemory,
    model: Option<&dyn LanguageModel>,
    config: &SessionConfig,
    keep: bool,
) -> Result<SessionOutcome, AgentError> {
    let session = session_name(split);
    let input = SessionInput { session: &session, user: split.user.clone(), history: &split.train, query: "" };
    let r = run_session(&input, catalog, pm, model, config)?;
    Ok(SessionOutcome {
        user: split.user.clone(),
        test: split.test.item.clone(),
        rank: rank_of(&r.items, &split.test.item),
        fallback_items: r.explanations.iter().filter(|e| e.fallback()).count(),
        items: r.items,
        ledger: r.ledger,
        impasses: r.impasses,
        chunks_learned: r.chunks_learned,
        truncated: r.truncated,
        explanations: if keep { r.explanations } else { Vec::new() },
    })
}

/// Runs one variant over all splits. `shared` is the bootstrapped memory
/// for variants that keep bootstrap on.
pub fn run_variant(
    variant: Variant,
    data: &EvalData,
    shared: &ProceduralMemory,
    model: Option<&dyn LanguageModel>,
    settings: &ExperimentSettings,
) -> Result<VariantReport, ExperimentError> {
    let mut rules_at_end = 0;
    let results: Vec<Result<SessionOutcome, AgentError>> = match variant.session_config(&settings.session) {
        None => data
            .splits
            .iter()
            .map(|s| {
                let items = data.popular_unseen(s, settings.eval_k);
                Ok(SessionOutcome {
                    user: s.user.clone(),
                    test: s.test.item.clone(),
                    rank: rank_of(&items, &s.test.item),
                    items,
                    ledger: LedgerSlice::default(),
                    impasses: 0,
                    chunks_learned: 0,
                    fallback_items: 0,
                    truncated: false,
                    explanations: Vec::new(),
                })
            })
            .collect(),
        Some(mut config) => {
            config.k = settings.eval_k;
            let model = if variant.uses_model() { model } else { None };
            let start = if config.bootstrap && model.is_some() { shared.clone() } else { builtin_memory()? };
            let keep = settings.keep_explanations;
            if config.soar && config.chunking && config.chunk_scope == ChunkScope::Global {
                let mut pm = start;
                let out = data.splits.iter().map(|s| run_one(s, &data.catalog, &mut pm, model, &config, keep)).collect();
                rules_at_end = pm.len();
                out
            } else {
                rules_at_end = start.len();
                let pool = rayon::ThreadPoolBuilder::new().num_threads(settings.jobs.max(1)).build().expect("thread pool");
                pool.install(|| {
                    data.splits
                        .par_iter()
                        .map(|s| run_one(s, &data.catalog, &mut start.clone(), model, &config, keep))
                        .collect()
                })
            }
        }
    };

    let total = results.len();
    let mut outcomes = Vec::with_capacity(total);
    let mut failed = 0;
    for (split, r) in data.splits.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                failed += 1;
                log::warn!("{variant}: session for user {} failed: {e}", split.user);
            }
        }
    }
    if failed as f64 > settings.max_failure_rate * total as f64 {
        return Err(ExperimentError::TooManyFailures { variant, failed, total, allowed: settings.max_failure_rate });
    }
    Ok(summarize(variant, &data.head_tail, outcomes, failed, rules_at_end, settings.lcf_bucket))
}

fn summarize(
    variant: Variant,
    head_tail: &HeadTail,
    outcomes: Vec<SessionOutcome>,
    failed: usize,
    rules_at_end: usize,
    bucket: usize,
) -> VariantReport {
    let (mut all, mut head, mut tail) = (MetricSums::default(), MetricSums::default(), MetricSums::default());
    let mut ledger = LedgerSlice::default();
    for o in &outcomes {
        all.add(o.rank);
        if head_tail.is_head(&o.test) {
            head.add(o.rank);
        } else {
            tail.add(o.rank);
        }
        ledger.merge(&o.ledger);
    }
    let calls: Vec<u64> = outcomes.iter().map(|o| o.ledger.lcf_calls()).collect();
    VariantReport {
        variant,
        overall: all.mean(),
        head: head.mean(),
        tail: tail.mean(),
        lcf: if calls.is_empty() { Vec::new() } else { lcf_curve(&calls, bucket) },
        ledger,
        sessions: outcomes.len(),
        failed,
        impasses: outcomes.iter().map(|o| o.impasses).sum(),
        chunks_learned: outcomes.iter().map(|o| o.chunks_learned).sum(),
        fallback_items: outcomes.iter().map(|o| o.fallback_items).sum(),
        truncated: outcomes.iter().filter(|o| o.truncated).count(),
        rules_at_end,
        outcomes,
    }
}

pub struct ExperimentOutput {
    pub bootstrap: Option<Bootstrapped>,
    pub variants: Vec<VariantReport>,
}

/// Bootstraps once with the model, then runs every variant in order.
pub fn run_experiment(
    data: &EvalData,
    variants: &[Variant],
    model: Option<&dyn LanguageModel>,
    settings: &ExperimentSettings,
) -> Result<ExperimentOutput, ExperimentError> {
    let needs_bootstrap = variants.iter().any(|v| {
        v.uses_model() && v.session_config(&settings.session).is_some_and(|c| c.bootstrap && c.soar)
    });
    let boot = match (needs_bootstrap, model) {
        (true, Some(m)) => {
            let mut config = settings.session.clone();
            config.bootstrap = true;
            Some(bootstrap_memory(Some(m), &data.catalog, &default_bootstrap_templates(), &settings.domain, &config)?)
        }
        _ => None,
    };
    let shared = match &boot {
        Some(b) => b.memory.clone(),
        None => builtin_memory()?,
    };
    let reports = run_variants(data, variants, &shared, model, settings)?;
    Ok(ExperimentOutput { bootstrap: boot, variants: reports })
}

/// Like [`run_experiment`], but bootstrap-on variants start from `rules`
/// instead of generating them with the model.
pub fn run_experiment_with_rules(
    data: &EvalData,
    variants: &[Variant],
    model: Option<&dyn LanguageModel>,
    settings: &ExperimentSettings,
    rules: &ProceduralMemory,
) -> Result<ExperimentOutput, ExperimentError> {
    let reports = run_variants(data, variants, rules, model, settings)?;
    Ok(ExperimentOutput { bootstrap: None, variants: reports })
}

fn run_variants(
    data: &EvalData,
    variants: &[Variant],
    shared: &ProceduralMemory,
    model: Option<&dyn LanguageModel>,
    settings: &ExperimentSettings,
) -> Result<Vec<VariantReport>, ExperimentError> {
    let mut reports = Vec::new();
    for &v in variants {
        let started = std::time::Instant::now();
        reports.push(run_variant(v, data, shared, model, settings)?);
        log::info!("{v}: {} sessions in {:.1?}", data.splits.len(), started.elapsed());
    }
    Ok(reports)
}

/// Items of every outcome that are in the user's training history; always
/// empty for a correct agent.
pub fn leaked_history(data: &EvalData, report: &VariantReport) -> usize {
    let train: BTreeMap<&UserId, BTreeSet<ItemId>> = data.splits.iter().map(|s| (&s.user, s.train_items())).collect();
    report
        .outcomes
        .iter()
        .map(|o| o.items.iter().filter(|i| train.get(&o.user).is_some_and(|t| t.contains(*i))).count())
        .sum()
}
