//! The decision cycle: propose, select, apply.
//!
//! One [`Engine`] owns a working memory and runs cycles against a borrowed
//! [`ProceduralMemory`]. Impasses are returned to the caller instead of being
//! worked out in a substate; the caller may then apply an operator of its
//! choosing with [`Engine::resolve_impasse`].

mod matcher;
mod memory;
mod preference;
mod trace;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use matcher::{describe_match, match_all, match_production, unify_condition, Binding, JoinPlan, MatchCache, RuleMatch};
pub use memory::{ProceduralMemory, Rule};
pub use preference::{
    resolve_preferences, ImpasseKind, OperatorKey, OperatorProposal, PreferenceKind, Selection,
};
pub use trace::{escape_line, unescape_line, Trace};

use crate::production::{ActionPattern, AttrTerm, PreferenceSpec};
use crate::symbol::{Atom, Identifier, SymbolValue, Variable};
use crate::wm::{JournalEntry, Snapshot, WmError, WorkingMemory};

pub const DEFAULT_CYCLE_LIMIT: u64 = 200;

/// Upper bound on elaboration waves within one phase.
const MAX_WAVES: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub cycle_limit: u64,
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { cycle_limit: DEFAULT_CYCLE_LIMIT, trace: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("working memory has no (<s> ^state-is-valid true) element")]
    NoState,
    #[error("working memory has no goal: expected (<s> ^goal <g>) with (<g> ^type ...)")]
    NoGoal,
    #[error("cycle limit of {0} exceeded")]
    CycleLimitExceeded(u64),
    #[error("rule elaboration did not reach quiescence after {0} waves")]
    NoQuiescence(usize),
    #[error(transparent)]
    Wm(#[from] WmError),
}

/// Why the cycle stopped, with the working memory frozen at that moment.
#[derive(Clone, Debug)]
pub struct Impasse {
    pub id: String,
    pub kind: ImpasseKind,
    pub cycle: u64,
    pub context: Snapshot,
    pub goal: Identifier,
    pub state: Identifier,
}

#[derive(Clone, Debug)]
pub enum Decision {
    Selected(OperatorKey),
    Impasse(Impasse),
}

#[derive(Clone, Debug)]
pub struct DecisionCycleRecord {
    pub cycle: u64,
    pub fired: Vec<(String, Binding)>,
    pub proposals: Vec<OperatorProposal>,
    pub decision: Decision,
    /// Working-memory changes made during this record, in order.
    pub deltas: Vec<JournalEntry>,
}

/// Effects of operators that are computed outside the rule language.
pub trait OperatorHandler {
    fn apply(&mut self, op: &OperatorKey, state: &Identifier, wm: &mut WorkingMemory);
}

/// Handler that leaves every operator to its apply rules.
pub struct RulesOnly;

impl OperatorHandler for RulesOnly {
    fn apply(&mut self, _op: &OperatorKey, _state: &Identifier, _wm: &mut WorkingMemory) {}
}

#[derive(Clone, Debug)]
pub struct Engine {
    wm: WorkingMemory,
    cycle: u64,
    fired: BTreeSet<(String, Binding)>,
    matches: MatchCache,
    trace: Trace,
    config: EngineConfig,
    label: String,
}

impl Engine {
    pub fn new(wm: WorkingMemory, config: EngineConfig) -> Self {
        let trace = Trace::new(config.trace);
        Engine { wm, cycle: 0, fired: BTreeSet::new(), matches: MatchCache::new(), trace, config, label: String::from("s") }
    }

    /// Prefix for impasse ids, usually the session name.
    pub fn with_label(mut self, label: &str) -> Self {
        self.label = String::from(label);
        self
    }

    pub fn wm(&self) -> &WorkingMemory {
        &self.wm
    }

    pub fn wm_mut(&mut self) -> &mut WorkingMemory {
        &mut self.wm
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn into_parts(self) -> (WorkingMemory, Trace) {
        (self.wm, self.trace)
    }

    /// The state identifier and its goal.
    pub fn state_and_goal(&self) -> Result<(Identifier, Identifier), EngineError> {
        state_and_goal(&self.wm)
    }

    /// Runs one full cycle. On a tie, no-change or conflict the record's
    /// decision is an impasse and nothing is applied.
    pub fn step(&mut self, pm: &ProceduralMemory, handler: &mut dyn OperatorHandler) -> Result<DecisionCycleRecord, EngineError> {
        let (state, goal) = self.state_and_goal()?;
        if self.cycle >= self.config.cycle_limit {
            return Err(EngineError::CycleLimitExceeded(self.config.cycle_limit));
        }
        self.cycle += 1;
        self.wm.set_cycle(self.cycle);
        self.trace.cycle(self.cycle);
        let start = self.wm.journal().len();

        let (mut fired, proposals) = self.propose(pm)?;
        let decision = match resolve_preferences(&proposals) {
            Selection::Selected(op) => {
                fired.extend(self.apply_operator(pm, &op, &state, handler)?);
                Decision::Selected(op)
            }
            Selection::Impasse(kind) => {
                let id = format!("{}-c{}", self.label, self.cycle);
                self.trace.impasse(&id, &kind);
                Decision::Impasse(Impasse {
                    id,
                    kind,
                    cycle: self.cycle,
                    context: self.wm.snapshot(),
                    goal,
                    state,
                })
            }
        };
        let deltas = self.wm.journal()[start..].to_vec();
        self.trace.deltas(&deltas);
        Ok(DecisionCycleRecord { cycle: self.cycle, fired, proposals, decision, deltas })
    }

    /// Applies an operator chosen outside the select phase, in the current
    /// cycle. With `rerun_propose`, the propose phase runs first so rules
    /// added since the impasse (such as a new chunk) fire and are traced.
    pub fn resolve_impasse(
        &mut self,
        pm: &ProceduralMemory,
        op: &OperatorKey,
        handler: &mut dyn OperatorHandler,
        rerun_propose: bool,
    ) -> Result<DecisionCycleRecord, EngineError> {
        let (state, _) = self.state_and_goal()?;
        let start = self.wm.journal().len();
        let mut fired = Vec::new();
        let mut proposals = Vec::new();
        if rerun_propose {
            let (f, p) = self.propose(pm)?;
            fired = f;
            proposals = p;
        }
        fired.extend(self.apply_operator(pm, op, &state, handler)?);
        let deltas = self.wm.journal()[start..].to_vec();
        self.trace.deltas(&deltas);
        Ok(DecisionCycleRecord { cycle: self.cycle, fired, proposals, decision: Decision::Selected(op.clone()), deltas })
    }

    /// Fires new instantiations in waves until quiescence; returns what fired
    /// and the operator proposals of the final match set.
    pub fn propose(&mut self, pm: &ProceduralMemory) -> Result<(Vec<(String, Binding)>, Vec<OperatorProposal>), EngineError> {
        let mut fired = Vec::new();
        for _ in 0..MAX_WAVES {
            let matches = self.matches.matches(pm, &self.wm, |r| !r.apply);
            let mut fresh_matches = Vec::new();
            for m in &matches {
                let key = (String::from(m.name()), m.binding.clone());
                if !self.fired.contains(&key) {
                    fresh_matches.push(m.clone());
                    self.fired.insert(key);
                }
            }
            if fresh_matches.is_empty() {
                let proposals = self.collect_proposals(&matches);
                for (op, pref) in distinct_proposals(&proposals) {
                    self.trace.propose(op, pref);
                }
                return Ok((fired, proposals));
            }
            for m in fresh_matches {
                self.trace.fire(m.name(), &m.binding);
                execute_wm_actions(&mut self.wm, &m)?;
                fired.push((String::from(m.name()), m.binding));
            }
        }
        Err(EngineError::NoQuiescence(MAX_WAVES))
    }

    fn collect_proposals(&self, matches: &[RuleMatch]) -> Vec<OperatorProposal> {
        let mut out = Vec::new();
        for m in matches {
            for t in m.rule.production.operator_templates() {
                let Some(name) = resolve_value(&t.name, &m.binding) else { continue };
                let mut params = Vec::new();
                for (attr, value) in &t.params {
                    let attr = match attr {
                        AttrTerm::Const(a) => a.clone(),
                        AttrTerm::Var(v) => match m.binding.get(v) {
                            Some(SymbolValue::Atom(a)) => a.clone(),
                            _ => continue,
                        },
                    };
                    if let Some(v) = resolve_value(value, &m.binding) {
                        params.push((attr, v));
                    }
                }
                params.sort();
                params.dedup();
                let preference = match t.preference {
                    PreferenceSpec::Acceptable => PreferenceKind::Acceptable,
                    PreferenceSpec::Reject => PreferenceKind::Reject,
                    PreferenceSpec::Best => PreferenceKind::Best,
                    PreferenceSpec::Numeric(n) => PreferenceKind::NumericIndifferent(n),
                };
                out.push(OperatorProposal {
                    operator: OperatorKey { name, params },
                    preference,
                    source: String::from(m.name()),
                    binding: m.binding.clone(),
                });
            }
        }
        out
    }

    fn apply_operator(
        &mut self,
        pm: &ProceduralMemory,
        op: &OperatorKey,
        state: &Identifier,
        handler: &mut dyn OperatorHandler,
    ) -> Result<Vec<(String, Binding)>, EngineError> {
        self.trace.select(op);
        let o = self.wm.gensym('o');
        let operator_attr = Atom::new("operator");
        self.wm.add(state.clone(), operator_attr.clone(), SymbolValue::Identifier(o.clone()))?;
        self.wm.add(o.clone(), Atom::new("name"), op.name.clone())?;
        for (a, v) in &op.params {
            self.wm.add(o.clone(), a.clone(), v.clone())?;
        }
        handler.apply(op, state, &mut self.wm);

        let mut fired = Vec::new();
        let mut quiescent = false;
        for _ in 0..MAX_WAVES {
            let matches = self.matches.matches(pm, &self.wm, |r| r.apply);
            let mut any = false;
            for m in matches {
                let key = (String::from(m.name()), m.binding.clone());
                if self.fired.contains(&key) {
                    continue;
                }
                self.fired.insert(key);
                any = true;
                self.trace.fire(m.name(), &m.binding);
                execute_wm_actions(&mut self.wm, &m)?;
                fired.push((String::from(m.name()), m.binding));
            }
            if !any {
                quiescent = true;
                break;
            }
        }
        if !quiescent {
            return Err(EngineError::NoQuiescence(MAX_WAVES));
        }

        self.wm.remove_triple(state, &operator_attr, &SymbolValue::Identifier(o.clone()));
        let leftovers: Vec<_> = self.wm.with_id(&o).map(|w| w.timetag).collect();
        for tag in leftovers {
            self.wm.remove(tag)?;
        }
        Ok(fired)
    }
}

fn distinct_proposals(proposals: &[OperatorProposal]) -> Vec<(&OperatorKey, &PreferenceKind)> {
    let mut seen: BTreeMap<(&OperatorKey, String), &PreferenceKind> = BTreeMap::new();
    for p in proposals {
        seen.entry((&p.operator, format!("{}", p.preference))).or_insert(&p.preference);
    }
    seen.into_iter().map(|((op, _), pref)| (op, pref)).collect()
}

pub fn state_and_goal(wm: &WorkingMemory) -> Result<(Identifier, Identifier), EngineError> {
    let state = wm
        .with_attr(&Atom::new("state-is-valid"))
        .find(|w| w.value == SymbolValue::atom("true"))
        .map(|w| w.id.clone())
        .ok_or(EngineError::NoState)?;
    let type_attr = Atom::new("type");
    let goal = wm
        .with_id_attr(&state, &Atom::new("goal"))
        .filter_map(|w| w.value.as_identifier())
        .find(|g| wm.with_id_attr(g, &type_attr).next().is_some())
        .cloned()
        .ok_or(EngineError::NoGoal)?;
    Ok((state, goal))
}

fn resolve_value(v: &SymbolValue, binding: &Binding) -> Option<SymbolValue> {
    match v {
        SymbolValue::Variable(var) => binding.get(var).cloned(),
        other => Some(other.clone()),
    }
}

/// Runs the make/remove actions of one instantiation. Variables that no
/// condition bound become fresh identifiers.
fn execute_wm_actions(wm: &mut WorkingMemory, m: &RuleMatch) -> Result<(), EngineError> {
    let p = &m.rule.production;
    let ops: Vec<&Variable> = p.operator_variables();
    let mut fresh: BTreeMap<Variable, Identifier> = BTreeMap::new();
    let mut resolve = |v: &SymbolValue, wm: &mut WorkingMemory| -> SymbolValue {
        match v {
            SymbolValue::Variable(var) => match m.binding.get(var) {
                Some(x) => x.clone(),
                None => {
                    let id = fresh.entry(var.clone()).or_insert_with(|| {
                        wm.gensym(var.as_str().chars().next().unwrap_or('x'))
                    });
                    SymbolValue::Identifier(id.clone())
                }
            },
            other => other.clone(),
        }
    };
    for a in &p.actions {
        let (id, attr, value, remove) = match a {
            ActionPattern::MakeWme { id, attr, value } => (id, attr, value, false),
            ActionPattern::RemoveWme { id, attr, value } => (id, attr, value, true),
            ActionPattern::ProposeOperator { .. } => continue,
        };
        if ops.contains(&id) {
            continue;
        }
        let SymbolValue::Identifier(id) = resolve(&SymbolValue::Variable(id.clone()), wm) else { continue };
        let attr = match attr {
            AttrTerm::Const(a) => a.clone(),
            AttrTerm::Var(v) => match m.binding.get(v) {
                Some(SymbolValue::Atom(a)) => a.clone(),
                _ => continue,
            },
        };
        let value = resolve(value, wm);
        if remove {
            wm.remove_triple(&id, &attr, &value);
        } else {
            wm.add(id, attr, value)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_production, parse_wmes};
    use alloc::vec;

    fn wm_from(text: &str) -> WorkingMemory {
        let mut wm = WorkingMemory::new();
        for (id, attr, value) in parse_wmes(text).unwrap() {
            wm.add(id, attr, value).unwrap();
        }
        wm
    }

    fn pm_from(rules: &[&str]) -> ProceduralMemory {
        let mut pm = ProceduralMemory::new();
        for r in rules {
            pm.register(parse_production(r).unwrap()).unwrap();
        }
        pm
    }

    const BASE: &str = "(<s1> ^state-is-valid true) (<s1> ^goal <g1>) (<g1> ^type recommend) (<s1> ^user <u1>)";

    const P_NEW: &str = "sp { p-new (<s> ^state-is-valid true) (<s> ^user <u>) (<u> ^preference ?g) (<s> ^candidate-item ?i) (?i ^genre ?g) --> (<s> ^operator <o> +) (<o> ^name select-item) (<o> ^item ?i) }";

    const EMIT: &str = "sp { emit (<s> ^operator <o>) (<o> ^name select-item) (<o> ^item <i>) (<s> ^candidate-item <i>) --> (<s> ^candidate-item <i> -) (<s> ^recommended <i>) }";

    #[test]
    fn chunk_rule_matches_its_situation() {
        let pm = pm_from(&[P_NEW]);
        let wm = wm_from("(<s1> ^state-is-valid true) (<s1> ^user <u1>) (<u1> ^preference cyberpunk) (<s1> ^candidate-item <vA>) (<vA> ^genre cyberpunk)");
        let m = match_all(&pm, &wm);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].binding.get(&Variable::new("g")), Some(&SymbolValue::atom("cyberpunk")));
        assert_eq!(m[0].binding.get(&Variable::new("i")), Some(&SymbolValue::id("vA")));
        assert!(match_all(&pm, &WorkingMemory::new()).is_empty());
    }

    #[test]
    fn unique_proposal_is_selected_and_applied() {
        let pm = pm_from(&[P_NEW, EMIT]);
        let wm = wm_from(&format!("{} (<u1> ^preference cyberpunk) (<s1> ^candidate-item <vA>) (<vA> ^genre cyberpunk)", BASE));
        let mut e = Engine::new(wm, EngineConfig { trace: true, ..Default::default() });
        let rec = e.step(&pm, &mut RulesOnly).unwrap();
        let Decision::Selected(op) = rec.decision else { panic!("expected a selection") };
        assert_eq!(op.param("item"), Some(&SymbolValue::id("vA")));
        assert!(e.wm().contains(&Identifier::new("s1"), &Atom::new("recommended"), &SymbolValue::id("vA")));
        assert!(!e.wm().contains(&Identifier::new("s1"), &Atom::new("candidate-item"), &SymbolValue::id("vA")));
        assert!(e.wm().with_attr(&Atom::new("operator")).next().is_none());
        let trace = e.trace().render();
        assert!(trace.contains("FIRE p-new("), "{}", trace);
        assert!(trace.contains("SELECT select-item(item=<vA>)"));
        assert!(trace.contains("WM+ (<s1> ^recommended <vA>)"));
    }

    #[test]
    fn three_candidates_tie() {
        let pm = pm_from(&[P_NEW]);
        let wm = wm_from(&format!(
            "{} (<u1> ^preference sci-fi) (<s1> ^candidate-item <vA>) (<vA> ^genre sci-fi) (<s1> ^candidate-item <vB>) (<vB> ^genre sci-fi) (<s1> ^candidate-item <vC>) (<vC> ^genre sci-fi)",
            BASE
        ));
        let mut e = Engine::new(wm, EngineConfig::default()).with_label("u1");
        let rec = e.step(&pm, &mut RulesOnly).unwrap();
        let Decision::Impasse(imp) = rec.decision else { panic!("expected an impasse") };
        let ImpasseKind::Tie(ops) = &imp.kind else { panic!("expected a tie") };
        let items: Vec<_> = ops.iter().map(|o| o.param("item").unwrap().clone()).collect();
        assert_eq!(items, vec![SymbolValue::id("vA"), SymbolValue::id("vB"), SymbolValue::id("vC")]);
        assert_eq!(imp.id, "u1-c1");
        assert_eq!(imp.goal, Identifier::new("g1"));
        assert_eq!(imp.context.len(), e.wm().len());
    }

    #[test]
    fn missing_goal_is_an_error() {
        let pm = pm_from(&[P_NEW]);
        let mut e = Engine::new(wm_from("(<s1> ^state-is-valid true)"), EngineConfig::default());
        assert_eq!(e.step(&pm, &mut RulesOnly).unwrap_err(), EngineError::NoGoal);
    }

    #[test]
    fn cycle_limit() {
        let pm = pm_from(&[]);
        let mut e = Engine::new(wm_from(BASE), EngineConfig { cycle_limit: 2, trace: false });
        assert!(e.step(&pm, &mut RulesOnly).is_ok());
        assert!(e.step(&pm, &mut RulesOnly).is_ok());
        assert_eq!(e.step(&pm, &mut RulesOnly).unwrap_err(), EngineError::CycleLimitExceeded(2));
    }

    #[test]
    fn elaborations_fire_once_and_create_objects() {
        let pm = pm_from(&["sp { mark (<s> ^user <u>) --> (<s> ^note <n>) (<n> ^about <u>) }"]);
        let mut e = Engine::new(wm_from(BASE), EngineConfig::default());
        e.step(&pm, &mut RulesOnly).unwrap();
        e.step(&pm, &mut RulesOnly).unwrap();
        assert_eq!(e.wm().with_attr(&Atom::new("note")).count(), 1);
    }

    #[test]
    fn replaying_deltas_reconstructs_memory() {
        let pm = pm_from(&[P_NEW, EMIT]);
        let wm = wm_from(&format!("{} (<u1> ^preference cyberpunk) (<s1> ^candidate-item <vA>) (<vA> ^genre cyberpunk)", BASE));
        let mut e = Engine::new(wm, EngineConfig::default());
        e.step(&pm, &mut RulesOnly).unwrap();
        let replayed = WorkingMemory::replay(e.wm().journal());
        assert!(replayed.same_contents(e.wm()));
    }
}
