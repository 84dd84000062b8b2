//! The recommender agent: perception, decision cycles with impasse
//! resolution through the model, learning by chunking, and the ranked list
//! with one explanation per item.
//!
//! Working memory at the start of a session:
//!
//! ```text
//! (<s1> ^state-is-valid true) (<s1> ^goal <g1>) (<g1> ^type recommend)
//! (<s1> ^user <u1>) (<u1> ^history <h1>) (<h1> ^item <v42>) (<v42> ^title "...")
//! (<u1> ^preference <one of the most frequent values per attribute, seen at least twice>)
//! (<u1> ^likes-<attr> <value>) (<u1> ^intent <n1>) (<n1> ^attribute <attr>) (<n1> ^value <value>)
//! (<s1> ^phase init)
//! ```
//!
//! Item `42` is the identifier `v42`. Applying `propose-candidates` seeds
//! `(<s1> ^candidate-item <vN>)` with item attributes for the best
//! candidates by profile overlap; each `select-item` application moves one
//! candidate to `(<s1> ^recommended <vN>)` and adds it to the list.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bridge::{reprompt, symbol_to_text, text_to_chunk, BridgeError};
use crate::chunking::{build_chunk, internalize, ChunkConfig, ChunkOutcome, DEFAULT_CHUNK_SCORE};
use crate::data::{Catalog, Interaction, ItemId, ItemMeta, UserId};
use crate::dsl::{parse_rules, DslError, ValidationError};
use crate::engine::{
    Binding, Decision, DecisionCycleRecord, Engine, EngineConfig, EngineError, Impasse, ImpasseKind, OperatorHandler,
    OperatorKey, ProceduralMemory, DEFAULT_CYCLE_LIMIT,
};
use crate::llm::{
    complete_logged, encode_user, generate_bootstrap_rules, BootstrapError, BootstrapTemplate, LanguageModel, LedgerSlice,
    Purpose,
};
use crate::production::Provenance;
use crate::symbol::{Atom, Identifier, SymbolValue};
use crate::templates;
use crate::wm::WorkingMemory;

/// The generic rules every agent starts with.
pub const BUILTIN_RULES: &str = r#"
sp { propose-candidates :manual
    (<s> ^state-is-valid true)
    (<s> ^phase init)
    -->
    (<s> ^operator <o> +)
    (<o> ^name propose-candidates)
}

sp { filter-by-intent-attribute :manual
    (<s> ^state-is-valid true)
    (<s> ^user <u>)
    (<u> ^intent <n>)
    (<n> ^attribute <a>)
    (<n> ^value <v>)
    (<s> ^candidate-item <i>)
    (<i> ^<a> <v>)
    -->
    (<i> ^intent-match <v>)
}

sp { score-by-overlap :manual
    (<s> ^state-is-valid true)
    (<s> ^user <u>)
    (<u> ^preference <v>)
    (<s> ^candidate-item <i>)
    (<i> ^<a> <v>)
    -->
    (<i> ^overlap <v>)
}

sp { select-best-scored :manual
    (<s> ^state-is-valid true)
    (<s> ^candidate-item <i>)
    (<i> ^intent-match <m>)
    (<i> ^overlap <v>)
    -->
    (<s> ^operator <o> +)
    (<o> ^name select-item)
    (<o> ^item <i>)
}

sp { emit-recommendation :manual
    (<s> ^state-is-valid true)
    (<s> ^operator <o>)
    (<o> ^name select-item)
    (<o> ^item <i>)
    (<s> ^candidate-item <i>)
    -->
    (<s> ^candidate-item <i> -)
    (<s> ^recommended <i>)
}
"#;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_CANDIDATE_CAP: usize = 100;
pub const DEFAULT_HISTORY_CAP: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkScope {
    /// Each session learns into its own copy of the rules.
    Session,
    /// Chunks learned in one session are available to all later sessions.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FallbackPolicy {
    /// Rank the offered candidates by distinct values shared with the profile.
    OverlapRanking,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub k: usize,
    pub cycle_limit: u64,
    pub bootstrap: bool,
    pub chunking: bool,
    /// Off means the model ranks directly, without the rule engine.
    pub soar: bool,
    pub chunk_scope: ChunkScope,
    pub chunk_score: Option<f64>,
    pub fallback: FallbackPolicy,
    pub candidate_cap: usize,
    pub history_cap: usize,
    pub trace: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            k: DEFAULT_K,
            cycle_limit: DEFAULT_CYCLE_LIMIT,
            bootstrap: true,
            chunking: true,
            soar: true,
            chunk_scope: ChunkScope::Global,
            chunk_score: Some(DEFAULT_CHUNK_SCORE),
            fallback: FallbackPolicy::OverlapRanking,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            history_cap: DEFAULT_HISTORY_CAP,
            trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error("built-in rules are invalid: {0}")]
    BuiltinRules(String),
    #[error(transparent)]
    Rule(#[from] ValidationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// Selected by the rules without an impasse.
    Rules,
    /// Chosen by the model at an impasse.
    Model,
    /// An impasse with no model to ask; the smallest candidate was taken.
    TieBreak,
    /// The model failed; candidates were ranked by profile overlap.
    Fallback,
    /// Ranked by the model without the rule engine.
    Direct,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Rules => "rules",
            Resolution::Model => "model",
            Resolution::TieBreak => "tie-break",
            Resolution::Fallback => "fallback",
            Resolution::Direct => "direct",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleStep {
    pub rule: String,
    pub provenance: Provenance,
    pub bindings: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub item: ItemId,
    pub rank: usize,
    /// Rules that proposed the selected operator, then the rules that applied it.
    pub steps: Vec<RuleStep>,
    pub justification: Option<String>,
    pub resolution: Resolution,
}

impl Explanation {
    pub fn fallback(&self) -> bool {
        self.resolution == Resolution::Fallback
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationResult {
    pub session: String,
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub explanations: Vec<Explanation>,
    pub ledger: LedgerSlice,
    pub impasses: usize,
    pub chunks_learned: usize,
    /// The cycle limit stopped the session early.
    pub truncated: bool,
    pub trace: Vec<String>,
}

/// One user's session request.
#[derive(Clone, Debug)]
pub struct SessionInput<'a> {
    pub session: &'a str,
    pub user: UserId,
    /// Chronological training history.
    pub history: &'a [Interaction],
    pub query: &'a str,
}

pub fn item_identifier(item: &ItemId) -> Identifier {
    Identifier::from(format!("v{}", item))
}

fn item_of_identifier(id: &Identifier) -> Option<ItemId> {
    id.as_str().strip_prefix('v').map(ItemId::new)
}

/// The built-in rules on their own.
pub fn builtin_memory() -> Result<ProceduralMemory, AgentError> {
    let mut pm = ProceduralMemory::new();
    let rules = parse_rules(BUILTIN_RULES).map_err(|e: DslError| AgentError::BuiltinRules(e.to_string()))?;
    for p in rules {
        pm.register(p)?;
    }
    Ok(pm)
}

/// Report of building the initial procedural memory.
#[derive(Clone, Debug, Default)]
pub struct BootstrapReport {
    pub generated: usize,
    pub added: usize,
    pub duplicates: usize,
    pub rejected_lines: usize,
    pub failed_templates: Vec<(String, String)>,
}

/// The initial procedural memory: the built-ins plus, when `config.bootstrap`
/// is on, model-generated rules deduplicated against what is already there.
pub fn bootstrap(
    model: Option<&dyn LanguageModel>,
    ledger: &mut LedgerSlice,
    catalog: &Catalog,
    templates: &[BootstrapTemplate],
    domain: &str,
    config: &SessionConfig,
) -> Result<(ProceduralMemory, BootstrapReport), AgentError> {
    let mut pm = builtin_memory()?;
    let mut report = BootstrapReport::default();
    let (true, Some(model)) = (config.bootstrap, model) else { return Ok((pm, report)) };
    let out = generate_bootstrap_rules(model, ledger, &catalog.schema, templates, domain)?;
    report.generated = out.productions.len();
    report.rejected_lines = out.rejected.len();
    report.failed_templates = out.failed_templates;
    for p in out.productions {
        match internalize(&mut pm, p, None)? {
            ChunkOutcome::Added(_) => report.added += 1,
            ChunkOutcome::DuplicateOfExisting(_) => report.duplicates += 1,
        }
    }
    Ok((pm, report))
}

/// Distinct attribute values of `item` present in `profile`.
pub fn profile_overlap(item: &ItemMeta, profile: &BTreeSet<Atom>) -> usize {
    item.values().collect::<BTreeSet<_>>().into_iter().filter(|v| profile.contains(*v)).count()
}

/// Catalog items outside `exclude`, best `cap` by profile overlap, ties by id.
pub fn top_candidates<'c>(
    catalog: &'c Catalog,
    exclude: &BTreeSet<ItemId>,
    profile: &BTreeSet<Atom>,
    cap: usize,
) -> Vec<&'c ItemMeta> {
    let mut ranked: Vec<(usize, &ItemMeta)> =
        catalog.items().filter(|i| !exclude.contains(&i.id)).map(|i| (profile_overlap(i, profile), i)).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    ranked.into_iter().take(cap).map(|(_, i)| i).collect()
}

struct Perceived<'c> {
    recent: Vec<&'c ItemMeta>,
    excluded: BTreeSet<ItemId>,
    preferences: Vec<(Atom, Atom)>,
    intents: Vec<(Atom, Atom)>,
}

impl Perceived<'_> {
    fn profile_values(&self) -> BTreeSet<Atom> {
        self.preferences.iter().chain(&self.intents).map(|(_, v)| v.clone()).collect()
    }
}

/// Most values kept per attribute as standing preferences.
pub const PREFERENCES_PER_ATTR: usize = 3;

/// Per attribute, the most frequent values seen in at least two of `items`,
/// at most [`PREFERENCES_PER_ATTR`] of them, ties by value.
fn repeated_values(items: &[&ItemMeta]) -> Vec<(Atom, Atom)> {
    let mut counts: BTreeMap<Atom, BTreeMap<Atom, usize>> = BTreeMap::new();
    for item in items {
        for (a, v) in item.pairs() {
            *counts.entry(a.clone()).or_default().entry(v.clone()).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for (attr, values) in counts {
        let mut ranked: Vec<(Atom, usize)> = values.into_iter().filter(|(_, n)| *n >= 2).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.extend(ranked.into_iter().take(PREFERENCES_PER_ATTR).map(|(v, _)| (attr.clone(), v)));
    }
    out.sort();
    out
}

fn perceive<'c>(
    input: &SessionInput<'_>,
    catalog: &'c Catalog,
    model: Option<&dyn LanguageModel>,
    ledger: &mut LedgerSlice,
    config: &SessionConfig,
) -> Perceived<'c> {
    let excluded: BTreeSet<ItemId> = input.history.iter().map(|x| x.item.clone()).collect();
    let start = input.history.len().saturating_sub(config.history_cap);
    let recent: Vec<&ItemMeta> = input.history[start..].iter().filter_map(|x| catalog.get(&x.item)).collect();
    let perception = encode_user(model, ledger, &recent, input.query, &catalog.schema, input.session);
    let preferences = repeated_values(&recent);
    Perceived { recent, excluded, preferences, intents: perception.intents }
}

fn atom(s: &str) -> Atom {
    Atom::new(s)
}

fn add(wm: &mut WorkingMemory, id: &Identifier, attr: &str, value: SymbolValue) {
    wm.add(id.clone(), atom(attr), value).expect("agent never stores variables");
}

fn initial_wm(p: &Perceived<'_>) -> WorkingMemory {
    let mut wm = WorkingMemory::new();
    let s = wm.gensym('s');
    let g = wm.gensym('g');
    let u = wm.gensym('u');
    let h = wm.gensym('h');
    add(&mut wm, &s, "state-is-valid", SymbolValue::atom("true"));
    add(&mut wm, &s, "goal", SymbolValue::Identifier(g.clone()));
    add(&mut wm, &g, "type", SymbolValue::atom("recommend"));
    add(&mut wm, &s, "user", SymbolValue::Identifier(u.clone()));
    add(&mut wm, &u, "history", SymbolValue::Identifier(h.clone()));
    for item in &p.recent {
        let v = item_identifier(&item.id);
        add(&mut wm, &h, "item", SymbolValue::Identifier(v.clone()));
        add(&mut wm, &v, "title", SymbolValue::atom(&item.title));
    }
    for (_, value) in &p.preferences {
        add(&mut wm, &u, "preference", SymbolValue::Atom(value.clone()));
    }
    for (attr, value) in &p.intents {
        add(&mut wm, &u, &format!("likes-{}", attr), SymbolValue::Atom(value.clone()));
        let n = wm.gensym('n');
        add(&mut wm, &u, "intent", SymbolValue::Identifier(n.clone()));
        add(&mut wm, &n, "attribute", SymbolValue::Atom(attr.clone()));
        add(&mut wm, &n, "value", SymbolValue::Atom(value.clone()));
    }
    add(&mut wm, &s, "phase", SymbolValue::atom("init"));
    wm
}

/// Native effects: `propose-candidates` seeds the candidate set.
struct SessionHandler<'a, 'c> {
    catalog: &'c Catalog,
    perceived: &'a Perceived<'c>,
    cap: usize,
}

impl OperatorHandler for SessionHandler<'_, '_> {
    fn apply(&mut self, op: &OperatorKey, state: &Identifier, wm: &mut WorkingMemory) {
        if op.name_str() != Some("propose-candidates") {
            return;
        }
        let profile = self.perceived.profile_values();
        let chosen = top_candidates(self.catalog, &self.perceived.excluded, &profile, self.cap);
        let c = wm.gensym('c');
        add(wm, state, "candidates", SymbolValue::Identifier(c.clone()));
        for item in chosen {
            let v = item_identifier(&item.id);
            add(wm, &c, "items", SymbolValue::Identifier(v.clone()));
            add(wm, state, "candidate-item", SymbolValue::Identifier(v.clone()));
            add(wm, &v, "title", SymbolValue::atom(&item.title));
            for (a, value) in item.pairs() {
                add(wm, &v, a.as_str(), SymbolValue::Atom(value.clone()));
            }
        }
        wm.remove_triple(state, &atom("phase"), &SymbolValue::atom("init"));
        add(wm, state, "phase", SymbolValue::atom("select"));
    }
}

fn selected_item(op: &OperatorKey) -> Option<Identifier> {
    if op.name_str() != Some("select-item") {
        return None;
    }
    op.param("item").and_then(|v| v.as_identifier().cloned())
}

fn candidate_items(wm: &WorkingMemory, state: &Identifier) -> Vec<Identifier> {
    wm.with_id_attr(state, &atom("candidate-item")).filter_map(|w| w.value.as_identifier().cloned()).collect()
}

/// Proposers of `op`, then the apply rules that fired, without repeats.
fn explain_steps(pm: &ProceduralMemory, record: &DecisionCycleRecord, op: &OperatorKey) -> Vec<RuleStep> {
    let mut seen: BTreeSet<(String, Binding)> = BTreeSet::new();
    let mut steps = Vec::new();
    let mut push = |name: &str, binding: &Binding| {
        if !seen.insert((name.to_string(), binding.clone())) {
            return;
        }
        if let Some(rule) = pm.get(name) {
            steps.push(RuleStep {
                rule: name.to_string(),
                provenance: rule.production.provenance.clone(),
                bindings: format!("{}", binding),
            });
        }
    };
    for p in record.proposals.iter().filter(|p| p.operator == *op) {
        push(&p.source, &p.binding);
    }
    for (name, binding) in &record.fired {
        if pm.get(name).is_some_and(|r| r.apply) {
            push(name, binding);
        }
    }
    steps
}

fn chunk_justification(pm: &ProceduralMemory, steps: &[RuleStep]) -> Option<String> {
    steps.iter().find_map(|s| pm.get(&s.rule).and_then(|r| r.justification.clone()))
}

/// Offered candidates ranked by profile overlap, ties by id.
fn overlap_ranking(wm: &WorkingMemory, offered: &[Identifier], profile: &BTreeSet<Atom>) -> Vec<Identifier> {
    let mut ranked: Vec<(usize, &Identifier)> = offered
        .iter()
        .map(|id| {
            let values: BTreeSet<&SymbolValue> = wm.with_id(id).map(|w| &w.value).collect();
            let n = values.into_iter().filter(|v| v.as_atom().is_some_and(|a| profile.contains(a))).count();
            (n, id)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().map(|(_, id)| id.clone()).collect()
}

fn offered_items(wm: &WorkingMemory, impasse: &Impasse) -> Vec<Identifier> {
    let all = candidate_items(wm, &impasse.state);
    let tied: BTreeSet<Identifier> = match &impasse.kind {
        ImpasseKind::Tie(ops) => ops.iter().filter_map(selected_item).collect(),
        ImpasseKind::Conflict(pairs) => pairs.iter().flat_map(|(a, b)| [a, b]).filter_map(selected_item).collect(),
        ImpasseKind::NoChange => BTreeSet::new(),
    };
    let listed: Vec<Identifier> = all.iter().filter(|i| tied.contains(*i)).cloned().collect();
    if listed.is_empty() {
        all
    } else {
        listed
    }
}

fn select_op(item: &Identifier) -> OperatorKey {
    OperatorKey::new("select-item", alloc::vec![(atom("item"), SymbolValue::Identifier(item.clone()))])
}

struct Session<'a, 'c> {
    input: &'a SessionInput<'a>,
    catalog: &'c Catalog,
    model: Option<&'a dyn LanguageModel>,
    config: &'a SessionConfig,
    ledger: LedgerSlice,
    items: Vec<ItemId>,
    explanations: Vec<Explanation>,
    impasses: usize,
    chunks_learned: usize,
}

struct Resolved {
    item: Identifier,
    resolution: Resolution,
    justification: Option<String>,
    learned: bool,
}

impl Session<'_, '_> {
    fn record_item(
        &mut self,
        pm: &ProceduralMemory,
        engine: &mut Engine,
        record: &DecisionCycleRecord,
        op: &OperatorKey,
        resolution: Resolution,
        justification: Option<String>,
    ) {
        let Some(item) = selected_item(op).and_then(|i| item_of_identifier(&i)) else { return };
        let steps = explain_steps(pm, record, op);
        let justification = justification.or_else(|| chunk_justification(pm, &steps));
        let rank = self.items.len() + 1;
        let title = self.catalog.get(&item).map(|m| m.title.clone()).unwrap_or_default();
        engine.trace_mut().event("RECOMMEND", &format!("{} {} \"{}\" via {}", rank, item, title, resolution.as_str()));
        self.items.push(item.clone());
        self.explanations.push(Explanation { item, rank, steps, justification, resolution });
    }

    /// Asks the model, with one reprompt, and learns from a valid answer.
    fn ask_model(
        &mut self,
        model: &dyn LanguageModel,
        pm: &mut ProceduralMemory,
        engine: &mut Engine,
        impasse: &Impasse,
    ) -> Result<Resolved, String> {
        let snapshot = &*impasse.context;
        let query = symbol_to_text(snapshot, impasse, &self.catalog.schema).map_err(|e| e.to_string())?;
        engine.trace_mut().event("QUERY", &query.rendered);
        let session = self.input.session;
        let mut prompt = query.rendered.clone();
        let mut purpose = Purpose::ImpasseResolve;
        let mut last_err: Option<BridgeError> = None;
        for _ in 0..2 {
            let text = complete_logged(model, &mut self.ledger, &prompt, purpose, session).map_err(|e| e.to_string())?;
            engine.trace_mut().event("RESPONSE", &text);
            match text_to_chunk(&text, &query, snapshot) {
                Ok(raw) => {
                    let item = selected_item(&raw.action).ok_or("answer does not select an item")?;
                    let mut learned = false;
                    if self.config.chunking {
                        let cfg = ChunkConfig { score: self.config.chunk_score, cycle: impasse.cycle };
                        match build_chunk(&raw, snapshot, &cfg) {
                            Ok(chunk) => match internalize(pm, chunk, Some(raw.justification.clone())) {
                                Ok(ChunkOutcome::Added(name)) => {
                                    engine.trace_mut().event("CHUNK", &format!("{} added from impasse {}", name, impasse.id));
                                    self.chunks_learned += 1;
                                    learned = true;
                                }
                                Ok(ChunkOutcome::DuplicateOfExisting(name)) => {
                                    engine.trace_mut().event("CHUNK", &format!("{} already covers impasse {}", name, impasse.id));
                                }
                                Err(e) => engine.trace_mut().event("CHUNK", &format!("rejected: {}", e)),
                            },
                            Err(e) => engine.trace_mut().event("CHUNK", &format!("not compiled: {}", e)),
                        }
                    }
                    return Ok(Resolved { item, resolution: Resolution::Model, justification: Some(raw.justification), learned });
                }
                Err(e) => {
                    engine.trace_mut().event("REJECT", &e.to_string());
                    prompt = reprompt(&query, &e);
                    purpose = Purpose::Reprompt;
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.map(|e| e.to_string()).unwrap_or_default())
    }

    fn resolve(
        &mut self,
        pm: &mut ProceduralMemory,
        engine: &mut Engine,
        impasse: &Impasse,
        profile: &BTreeSet<Atom>,
    ) -> Option<Resolved> {
        let offered = offered_items(engine.wm(), impasse);
        if offered.is_empty() {
            return None;
        }
        let Some(model) = self.model else {
            let item = offered.iter().min().cloned()?;
            return Some(Resolved { item, resolution: Resolution::TieBreak, justification: None, learned: false });
        };
        match self.ask_model(model, pm, engine, impasse) {
            Ok(r) => Some(r),
            Err(reason) => {
                engine.trace_mut().event("FALLBACK", &reason);
                let item = overlap_ranking(engine.wm(), &offered, profile).into_iter().next()?;
                Some(Resolved {
                    item,
                    resolution: Resolution::Fallback,
                    justification: Some(format!("fallback after: {}", reason)),
                    learned: false,
                })
            }
        }
    }
}

/// Runs one recommendation session. With `config.soar` off this is
/// [`llm_direct`]. Learned chunks go into `pm`.
pub fn run_session(
    input: &SessionInput<'_>,
    catalog: &Catalog,
    pm: &mut ProceduralMemory,
    model: Option<&dyn LanguageModel>,
    config: &SessionConfig,
) -> Result<RecommendationResult, AgentError> {
    if config.k == 0 {
        return Err(AgentError::ZeroK);
    }
    if !config.soar {
        return Ok(llm_direct(input, catalog, model, config));
    }
    let mut s = Session {
        input,
        catalog,
        model,
        config,
        ledger: LedgerSlice::default(),
        items: Vec::new(),
        explanations: Vec::new(),
        impasses: 0,
        chunks_learned: 0,
    };
    let perceived = perceive(input, catalog, model, &mut s.ledger, config);
    let profile = perceived.profile_values();
    let wm = initial_wm(&perceived);
    let engine_config = EngineConfig { cycle_limit: config.cycle_limit, trace: config.trace };
    let mut engine = Engine::new(wm, engine_config).with_label(input.session);
    let mut handler = SessionHandler { catalog, perceived: &perceived, cap: config.candidate_cap };
    let (state, _) = engine.state_and_goal()?;
    let mut truncated = false;

    while s.items.len() < config.k {
        let seeded = engine.wm().contains(&state, &atom("phase"), &SymbolValue::atom("select"));
        if seeded && candidate_items(engine.wm(), &state).is_empty() {
            break;
        }
        let record = match engine.step(pm, &mut handler) {
            Ok(r) => r,
            Err(EngineError::CycleLimitExceeded(_)) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        match &record.decision {
            Decision::Selected(op) => s.record_item(pm, &mut engine, &record, op, Resolution::Rules, None),
            Decision::Impasse(impasse) => {
                s.impasses += 1;
                let Some(r) = s.resolve(pm, &mut engine, impasse, &profile) else { break };
                let op = select_op(&r.item);
                let applied = engine.resolve_impasse(pm, &op, &mut handler, r.learned)?;
                s.record_item(pm, &mut engine, &applied, &op, r.resolution, r.justification);
            }
        }
    }

    let (_, trace) = engine.into_parts();
    Ok(RecommendationResult {
        session: input.session.to_string(),
        user: input.user.clone(),
        items: s.items,
        explanations: s.explanations,
        ledger: s.ledger,
        impasses: s.impasses,
        chunks_learned: s.chunks_learned,
        truncated,
        trace: trace.lines().to_vec(),
    })
}

fn describe_listed(id: &str, item: &ItemMeta) -> String {
    let mut s = if id.is_empty() { format!("\"{}\"", item.title) } else { format!("{} \"{}\"", id, item.title) };
    let mut first = true;
    for (a, v) in item.pairs() {
        s.push_str(if first { ": " } else { "; " });
        first = false;
        s.push_str(&format!("{} = {}", a, SymbolValue::Atom(v.clone())));
    }
    s
}

fn bullets(lines: Vec<String>) -> String {
    if lines.is_empty() {
        return String::from("- (none)");
    }
    lines.into_iter().map(|l| format!("- {}", l)).collect::<Vec<_>>().join("\n")
}

/// Reads the last `RANK:` line, keeping known candidates in order.
pub fn parse_ranking(text: &str, candidates: &[&ItemMeta], k: usize) -> Option<Vec<ItemId>> {
    let line = text.lines().rev().find_map(|l| l.trim().strip_prefix("RANK:"))?;
    let known: BTreeMap<String, &ItemId> = candidates.iter().map(|c| (item_identifier(&c.id).as_str().to_string(), &c.id)).collect();
    let mut out: Vec<ItemId> = Vec::new();
    for part in line.split(',') {
        let id = part.trim().trim_matches(['<', '>', '"', '.']);
        if let Some(item) = known.get(id) {
            if !out.contains(item) {
                out.push((*item).clone());
            }
        }
    }
    out.truncate(k);
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// The model ranks the candidates in one prompt, without rules or learning.
/// Unusable answers get one reprompt, then overlap ranking.
pub fn llm_direct(
    input: &SessionInput<'_>,
    catalog: &Catalog,
    model: Option<&dyn LanguageModel>,
    config: &SessionConfig,
) -> RecommendationResult {
    let mut ledger = LedgerSlice::default();
    let excluded: BTreeSet<ItemId> = input.history.iter().map(|x| x.item.clone()).collect();
    let start = input.history.len().saturating_sub(config.history_cap);
    let recent: Vec<&ItemMeta> = input.history[start..].iter().filter_map(|x| catalog.get(&x.item)).collect();
    let history_values: BTreeSet<Atom> = recent.iter().flat_map(|i| i.values().cloned()).collect();
    let candidates = top_candidates(catalog, &excluded, &history_values, config.candidate_cap);
    let mut trace = Vec::new();
    let k = config.k.min(candidates.len());
    let mut result = RecommendationResult {
        session: input.session.to_string(),
        user: input.user.clone(),
        items: Vec::new(),
        explanations: Vec::new(),
        ledger: LedgerSlice::default(),
        impasses: 0,
        chunks_learned: 0,
        truncated: false,
        trace: Vec::new(),
    };
    if k == 0 {
        return result;
    }
    let prompt = templates::fill(
        templates::RANK,
        &[
            ("history", &bullets(recent.iter().map(|i| describe_listed("", i)).collect())),
            (
                "candidates",
                &bullets(candidates.iter().map(|c| describe_listed(item_identifier(&c.id).as_str(), c)).collect()),
            ),
            ("k", &format!("{}", k)),
        ],
    );
    let mut answer: Option<(Vec<ItemId>, String)> = None;
    if let Some(model) = model {
        let mut p = prompt.clone();
        for purpose in [Purpose::Direct, Purpose::Reprompt] {
            match complete_logged(model, &mut ledger, &p, purpose, input.session) {
                Ok(text) => {
                    if config.trace {
                        trace.push(format!("QUERY {}", crate::engine::escape_line(&p)));
                        trace.push(format!("RESPONSE {}", crate::engine::escape_line(&text)));
                    }
                    if let Some(items) = parse_ranking(&text, &candidates, k) {
                        answer = Some((items, text));
                        break;
                    }
                    p = format!("{}\nYOUR PREVIOUS ANSWER HAD NO USABLE RANK LINE.\n", prompt.trim_end());
                }
                Err(_) => break,
            }
        }
    }
    let (items, justification, resolution) = match answer {
        Some((items, text)) => (items, Some(text), Resolution::Direct),
        None => {
            let ids: Vec<ItemId> = candidates.iter().take(k).map(|c| c.id.clone()).collect();
            (ids, None, Resolution::Fallback)
        }
    };
    for (i, item) in items.iter().enumerate() {
        result.explanations.push(Explanation {
            item: item.clone(),
            rank: i + 1,
            steps: Vec::new(),
            justification: justification.clone(),
            resolution,
        });
    }
    result.items = items;
    result.ledger = ledger;
    result.trace = trace;
    result
}
