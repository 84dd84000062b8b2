//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Set `COGREC_ML1M_DIR` to a MovieLens-1M directory to
//! check its filtered counts as well.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cogrec::config::Config;
use cogrec::experiment::{bootstrap_memory, run_experiment, EvalData, ExperimentSettings, Variant};
use cogrec::fixtures::{case_study, CASE_STUDY_EXPECTED};
use cogrec::gateway::Gateway;
use cogrec::loaders::{load_dataset, load_movielens};
use cogrec::report::relative_drop;
use cogrec::synthetic::{situation_stream, stream_session_name};
use cogrec_core::agent::{run_session, RecommendationResult, SessionConfig, SessionInput};
use cogrec_core::bridge::{symbol_to_text, text_to_chunk, BridgeError};
use cogrec_core::chunking::{alpha_equivalent, build_chunk, ChunkConfig};
use cogrec_core::data::{preprocess, preprocess_with, Catalog, DatasetStats, Interaction};
use cogrec_core::dsl::{parse_production, parse_rules, serialize_production};
use cogrec_core::engine::ProceduralMemory;
use cogrec_core::llm::{default_bootstrap_templates, Completion, CompletionRequest, LanguageModel, ProviderError, Purpose};
use cogrec_core::metrics::{hit_rate_at_k, lcf_curve, ndcg_at_k, rank_of};
use cogrec_core::oracle::Oracle;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MATCHER_INSTANCES: usize = 1_000;
const MATCHER_BUDGET: Duration = Duration::from_secs(60);
const METRIC_VECTORS: usize = 10_000;
const RANK_TWO_TOLERANCE: f64 = 1e-12;
const STREAM_TEMPLATES: usize = 20;
const STREAM_ROUNDS: usize = 10;
const QUINTILE: usize = STREAM_TEMPLATES * STREAM_ROUNDS / 5;
const CHUNKING_ON_FINAL_RATIO: f64 = 0.10;
const CHUNKING_OFF_VARIATION: f64 = 0.05;
const ML1M: (usize, usize, usize) = (6_040, 3_416, 999_611);
const ML1M_SPARSITY: f64 = 0.9516;
const ML1M_SPARSITY_TOLERANCE: f64 = 0.0001;
const ROUND_TRIPS: usize = 10_000;
const RANDOM_INPUTS: usize = 100_000;
const CORRUPTED_PER_KIND: usize = 200;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn matcher() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc_0001);
    let started = Instant::now();
    let mut matched = 0;
    for n in 0..MATCHER_INSTANCES {
        let (pm, wm) = support::matcher_instance(&mut rng);
        let expected = support::brute_force_all(&pm, &wm);
        let got = support::indexed_all(&pm, &wm);
        if got != expected {
            return Err(format!("instance {n}: {} matches, reference has {}", got.len(), expected.len()));
        }
        matched += expected.len();
    }
    let elapsed = started.elapsed();
    check(elapsed < MATCHER_BUDGET, format!("{MATCHER_INSTANCES} instances agree ({matched} matches) in {elapsed:.1?}"))
}

fn worked_example() -> Outcome {
    let (wm, impasse, schema) = support::tie_fixture();
    let query = symbol_to_text(&wm, &impasse, &schema).map_err(|e| e.to_string())?;
    let answer = Oracle::new(support::tie_catalog()).answer(&query.rendered);
    let raw = text_to_chunk(&answer, &query, &wm).map_err(|e| format!("{e}\n{answer}"))?;
    let chunk = build_chunk(&raw, &wm, &ChunkConfig { score: None, cycle: impasse.cycle }).map_err(|e| e.to_string())?;
    let listed = parse_production(support::P_NEW).map_err(|e| e.to_string())?;
    check(alpha_equivalent(&chunk, &listed), format!("learned rule:\n{}", serialize_production(&chunk)))
}

fn oracle_session_memory(catalog: &Catalog, model: &dyn LanguageModel, config: &SessionConfig) -> ProceduralMemory {
    bootstrap_memory(Some(model), catalog, &default_bootstrap_templates(), "movie", config).expect("bootstrap").memory
}

/// Mean calls per session in each fifth of the stream.
fn stream_quintiles(chunking: bool) -> Vec<f64> {
    let config = Config::default();
    let data = load_dataset(&config).expect("synthetic data");
    let eval = EvalData::new(data.catalog.clone(), &data.interactions, Some(STREAM_TEMPLATES)).expect("users");
    let oracle = Gateway::oracle(data.catalog.clone());
    let session = SessionConfig { chunking, ..config.session.to_session_config(false) };
    let mut pm = oracle_session_memory(&data.catalog, &oracle, &session);
    let mut calls = Vec::new();
    for (t, r) in situation_stream(STREAM_TEMPLATES, STREAM_ROUNDS, config.experiment.seed) {
        let split = &eval.splits[t];
        let name = stream_session_name(t, r);
        let input = SessionInput { session: &name, user: split.user.clone(), history: &split.train, query: "" };
        let result = run_session(&input, &data.catalog, &mut pm, Some(&oracle), &session).expect("session");
        calls.push(result.ledger.lcf_calls());
    }
    lcf_curve(&calls, QUINTILE).iter().map(|p| p.calls_per_interaction).collect()
}

fn replay() -> Outcome {
    let on = stream_quintiles(true);
    let off = stream_quintiles(false);
    let on_ok = on[0] > 0.0 && on[4] <= CHUNKING_ON_FINAL_RATIO * on[0];
    let mean = off.iter().sum::<f64>() / off.len() as f64;
    let spread = off.iter().cloned().fold(f64::MIN, f64::max) - off.iter().cloned().fold(f64::MAX, f64::min);
    let off_ok = mean > 0.0 && spread / mean < CHUNKING_OFF_VARIATION;
    check(on_ok && off_ok, format!("chunking on {on:.3?}, chunking off {off:.3?} (spread {:.1}%)", 100.0 * spread / mean.max(f64::MIN_POSITIVE)))
}

/// Peels users and items below `min` one at a time until none is left: the
/// largest sub-dataset where every user and item has at least `min`.
fn peel(data: &[Interaction], min: usize) -> BTreeSet<(String, String)> {
    let mut live: BTreeSet<(String, String)> = data.iter().map(|x| (x.user.to_string(), x.item.to_string())).collect();
    loop {
        let mut users: BTreeMap<&str, usize> = BTreeMap::new();
        let mut items: BTreeMap<&str, usize> = BTreeMap::new();
        for (u, i) in &live {
            *users.entry(u).or_default() += 1;
            *items.entry(i).or_default() += 1;
        }
        let weak = live.iter().find(|(u, i)| users[u.as_str()] < min || items[i.as_str()] < min).cloned();
        let Some((u, i)) = weak else { return live };
        let drop_user = users[u.as_str()] < min;
        live.retain(|(a, b)| if drop_user { *a != u } else { *b != i });
    }
}

fn ml1m() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc_0004);
    for case in 0..40 {
        let users = rng.gen_range(5..40);
        let items = rng.gen_range(5..40);
        let density = rng.gen_range(0.1..0.9);
        let min = rng.gen_range(2..8);
        let mut data = Vec::new();
        for u in 0..users {
            for i in 0..items {
                if rng.gen_bool(density) {
                    data.push(Interaction::new(u as u64, i as u64, 1.0, (u * items + i) as i64));
                }
            }
        }
        let expected = peel(&data, min);
        let got: BTreeSet<(String, String)> = match preprocess_with(data, min) {
            Ok(kept) => kept.iter().map(|x| (x.user.to_string(), x.item.to_string())).collect(),
            Err(_) => BTreeSet::new(),
        };
        if got != expected {
            return Err(format!("filtering case {case}: {} kept, reference keeps {}", got.len(), expected.len()));
        }
    }
    let Some(dir) = std::env::var_os("COGREC_ML1M_DIR") else {
        return Ok("k-core filtering agrees with the reference on 40 random cases; MovieLens-1M counts SKIPPED (COGREC_ML1M_DIR unset)".into());
    };
    let loaded = load_movielens(std::path::Path::new(&dir)).map_err(|e| e.to_string())?;
    let kept = preprocess(loaded.interactions).map_err(|e| e.to_string())?;
    let stats = DatasetStats::of(&kept);
    let got = (stats.users, stats.items, stats.interactions);
    let sparsity = stats.sparsity();
    check(
        got == ML1M && (sparsity - ML1M_SPARSITY).abs() <= ML1M_SPARSITY_TOLERANCE,
        format!("MovieLens-1M: {} users, {} items, {} interactions, sparsity {:.4}%", got.0, got.1, got.2, 100.0 * sparsity),
    )
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc_0005);
    for n in 0..METRIC_VECTORS {
        let len = rng.gen_range(0..40);
        let mut list: Vec<u32> = (0..100).collect();
        list.shuffle(&mut rng);
        list.truncate(len);
        let target = rng.gen_range(0..100u32);
        let rank = rank_of(&list, &target);
        for k in [1, 5, 10, 20] {
            let position = list.iter().take(k).position(|&x| x == target);
            let hr = if position.is_some() { 1.0 } else { 0.0 };
            let ndcg = position.map_or(0.0, |p| 1.0 / ((p + 2) as f64).log2());
            if hit_rate_at_k(rank, k) != hr || ndcg_at_k(rank, k) != ndcg {
                return Err(format!("vector {n} at K={k}: target {target} in {list:?}"));
            }
        }
    }
    let rank_two = ndcg_at_k(Some(2), 10);
    check(
        (rank_two - 1.0 / 3f64.log2()).abs() <= RANK_TWO_TOLERANCE,
        format!("{METRIC_VECTORS} vectors agree; N@10 of rank 2 = {rank_two:.15}"),
    )
}

fn case_study_run() -> (RecommendationResult, Arc<Catalog>) {
    let f = case_study();
    let catalog = Arc::new(f.catalog);
    let oracle = Gateway::oracle(catalog.clone());
    let config = SessionConfig { trace: true, ..Config::default().session.to_session_config(true) };
    let mut pm = oracle_session_memory(&catalog, &oracle, &config);
    let input = SessionInput { session: "case-study", user: f.user.clone(), history: &f.interactions, query: "" };
    (run_session(&input, &catalog, &mut pm, Some(&oracle), &config).expect("session"), catalog)
}

fn walkthrough() -> Outcome {
    let (a, catalog) = case_study_run();
    let (b, _) = case_study_run();
    let top = a.items.first().and_then(|i| catalog.get(i)).map(|m| m.title.clone()).unwrap_or_default();
    let has = |prefix: &str| a.trace.iter().any(|l| l.starts_with(prefix));
    let first_tie = a.trace.iter().find(|l| l.starts_with("IMPASSE tie")).map_or(0, |l| l.matches("select-item").count());
    let steps = [
        ("three-way tie impasse", first_tie == 3),
        ("structured query", has("QUERY ")),
        ("chunk internalized", has("CHUNK ")),
        ("learned rule fires", has("FIRE chunk-")),
        ("identical traces", a.trace == b.trace && a.items == b.items),
        ("top recommendation", top == CASE_STUDY_EXPECTED),
    ];
    let missing: Vec<&str> = steps.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    check(missing.is_empty(), format!("rank 1 is {top}; {} trace lines; missing: {missing:?}", a.trace.len()))
}

struct Experiment {
    ndcg10: BTreeMap<Variant, (f64, f64, f64)>,
}

fn synthetic_experiment() -> Experiment {
    let config = Config::default();
    let data = load_dataset(&config).expect("synthetic data");
    let eval = EvalData::new(data.catalog.clone(), &data.interactions, config.experiment.max_users).expect("users");
    let oracle = Gateway::oracle(data.catalog.clone());
    let settings = ExperimentSettings {
        session: config.session.to_session_config(false),
        eval_k: config.experiment.eval_k,
        lcf_bucket: config.experiment.lcf_bucket,
        max_failure_rate: config.experiment.max_failure_rate,
        domain: config.dataset.domain.clone(),
        jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        keep_explanations: false,
    };
    let out = run_experiment(&eval, &Variant::ALL, Some(&oracle), &settings).expect("experiment");
    let ndcg10 = out.variants.iter().map(|v| (v.variant, (v.overall.ndcg10, v.head.ndcg10, v.tail.ndcg10))).collect();
    Experiment { ndcg10 }
}

fn ablation(x: &Experiment) -> Outcome {
    let n = |v: Variant| x.ndcg10[&v].0;
    let full = n(Variant::Full);
    let ablations = [Variant::NoBootstrap, Variant::NoChunking, Variant::NoSoar, Variant::RulesOnly];
    let full_best = ablations.iter().all(|&v| full >= n(v));
    let rules_worst = ablations.iter().filter(|&&v| v != Variant::RulesOnly).all(|&v| n(Variant::RulesOnly) < n(v))
        && n(Variant::RulesOnly) < full;
    let listing: Vec<String> = std::iter::once(Variant::Full).chain(ablations).map(|v| format!("{v} {:.4}", n(v))).collect();
    check(full_best && rules_worst, format!("N@10: {}", listing.join(", ")))
}

fn long_tail(x: &Experiment) -> Outcome {
    let drop = |v: Variant| {
        let (_, head, tail) = x.ndcg10[&v];
        relative_drop(head, tail)
    };
    let ours = drop(Variant::Full);
    let popularity = drop(Variant::Popularity);
    check(ours < popularity, format!("head-to-tail N@10 drop: full {:.1}%, popularity {:.1}%", 100.0 * ours, 100.0 * popularity))
}

fn dsl() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc_0009);
    for n in 0..ROUND_TRIPS {
        let p = support::random_production(&mut rng);
        let text = serialize_production(&p);
        match parse_production(&text) {
            Ok(back) if back == p => {}
            Ok(_) => return Err(format!("production {n} changed on the way back:\n{text}")),
            Err(e) => return Err(format!("production {n} does not parse: {e}\n{text}")),
        }
    }
    for n in 0..RANDOM_INPUTS {
        let len = rng.gen_range(0..96);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        if catch_unwind(|| parse_rules(&text)).is_err() {
            return Err(format!("parser panicked on input {n}: {bytes:?}"));
        }
    }
    Ok(format!("{ROUND_TRIPS} round trips are exact; {RANDOM_INPUTS} random inputs parsed without a crash"))
}

/// The oracle, with every impasse answer broken in one way.
struct Corrupting {
    oracle: Oracle,
    kind: &'static str,
    n: usize,
}

impl LanguageModel for Corrupting {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        let answer = self.oracle.answer(request.prompt);
        let text = match request.purpose {
            Purpose::ImpasseResolve | Purpose::Reprompt => support::corrupt(&answer, self.kind, self.n),
            _ => answer,
        };
        Ok(Completion { text, cached: false })
    }
}

fn guard() -> Outcome {
    let (wm, impasse, schema) = support::tie_fixture();
    let query = symbol_to_text(&wm, &impasse, &schema).map_err(|e| e.to_string())?;
    let answer = Oracle::new(support::tie_catalog()).answer(&query.rendered);
    let mut refused = 0;
    for kind in support::CORRUPTIONS {
        for n in 0..CORRUPTED_PER_KIND {
            let bad = support::corrupt(&answer, kind, n);
            match text_to_chunk(&bad, &query, &wm) {
                Err(e) if e.is_parse_failure() || matches!(e, BridgeError::UngroundedCondition(_)) => refused += 1,
                Err(e) => return Err(format!("{kind} #{n} refused for another reason: {e}")),
                Ok(_) => return Err(format!("{kind} #{n} accepted:\n{bad}")),
            }
        }
    }
    let f = case_study();
    let catalog = Arc::new(f.catalog);
    let config = Config::default().session.to_session_config(false);
    let start = oracle_session_memory(&catalog, &Oracle::new(catalog.clone()), &config);
    for kind in support::CORRUPTIONS {
        let model = Corrupting { oracle: Oracle::new(catalog.clone()), kind, n: 0 };
        let mut pm = start.clone();
        let input = SessionInput { session: "guard", user: f.user.clone(), history: &f.interactions, query: "" };
        let r = run_session(&input, &catalog, &mut pm, Some(&model), &config).map_err(|e| e.to_string())?;
        if r.chunks_learned > 0 || pm.len() != start.len() {
            return Err(format!("{kind}: a session learned {} rules from corrupted answers", r.chunks_learned));
        }
    }
    Ok(format!("{refused} corrupted answers refused; no rule learned in {} corrupted sessions", support::CORRUPTIONS.len()))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let (status, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n:>2} {status} {name} ({:.1?}): {detail}", started.elapsed());
    outcome.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run(1, "matcher agrees with brute-force unification", matcher);
    ok &= run(2, "worked example compiles the listed rule", worked_example);
    ok &= run(3, "call frequency falls with chunking and stays flat without", replay);
    ok &= run(4, "MovieLens-1M preprocessing", ml1m);
    ok &= run(5, "ranking metrics", metrics);
    ok &= run(6, "case study recommends Blade Runner 2049", walkthrough);
    let experiment = catch_unwind(synthetic_experiment).ok();
    let missing = || Err(String::from("the synthetic experiment did not complete"));
    ok &= run(7, "ablation ordering on synthetic data", || experiment.as_ref().map_or_else(missing, ablation));
    ok &= run(8, "long-tail robustness", || experiment.as_ref().map_or_else(missing, long_tail));
    ok &= run(9, "rule text round trip and parser fuzz", dsl);
    ok &= run(10, "corrupted answers never become rules", guard);
    if !ok {
        std::process::exit(1);
    }
}
