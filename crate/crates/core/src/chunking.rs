//! Compiles an impasse resolution into a general production.
//!
//! The raw chunk is a set of ground facts the model cited plus the operator
//! it chose. Compilation:
//!
//! 1. Every cited fact must be in the impasse snapshot.
//! 2. Identifiers become variables, named after the attribute that links
//!    them to the state (`^user` gives `<u>`, `^candidate-item` gives `<i>`).
//!    Atoms cited in two or more facts become variables too; atoms cited
//!    once stay literal.
//! 3. The rule starts with `(<s> ^state-is-valid true)`, and each identifier
//!    is joined to the state through its shortest path in the snapshot, so
//!    the rule is connected.
//! 4. The action proposes the chosen operator; an item that no fact
//!    mentions stays literal and is guarded by a `^candidate-item` test.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dsl::ValidationError;
use crate::engine::{OperatorKey, ProceduralMemory};
use crate::production::{
    ActionPattern, AttrTerm, AttrTest, Condition, ConditionPattern, ConditionTest, IdTest, PreferenceSpec, Production,
    Provenance,
};
use crate::symbol::{Atom, Identifier, SymbolValue, Variable};
use crate::wm::{Wme, WorkingMemory};

/// Default numeric preference of learned rules.
pub const DEFAULT_CHUNK_SCORE: f64 = 0.8;

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkRaw {
    pub conditions: Vec<(Identifier, Atom, SymbolValue)>,
    pub action: OperatorKey,
    pub impasse_id: String,
    pub justification: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkConfig {
    /// Numeric preference for the proposal; `None` proposes it as acceptable.
    pub score: Option<f64>,
    pub cycle: u64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig { score: Some(DEFAULT_CHUNK_SCORE), cycle: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("chunk has no conditions")]
    EmptyConditions,
    #[error("cited fact {0} is not in working memory")]
    UngroundedCondition(String),
    #[error("snapshot has no state element")]
    NoState,
    #[error("{0} cannot be reached from the state")]
    Unreachable(String),
    #[error("compiled chunk is invalid: {0}")]
    Invalid(#[from] ValidationError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChunkOutcome {
    Added(String),
    DuplicateOfExisting(String),
}

fn triple_text(id: &Identifier, attr: &Atom, value: &SymbolValue) -> String {
    format!("(<{}> ^{} {})", id, attr, value)
}

/// Fails on the first cited fact absent from `snapshot`.
pub fn check_grounding(raw: &ChunkRaw, snapshot: &WorkingMemory) -> Result<(), ChunkError> {
    if raw.conditions.is_empty() {
        return Err(ChunkError::EmptyConditions);
    }
    for (id, attr, value) in &raw.conditions {
        if !snapshot.contains(id, attr, value) {
            return Err(ChunkError::UngroundedCondition(triple_text(id, attr, value)));
        }
    }
    Ok(())
}

fn state_of(wm: &WorkingMemory) -> Option<Identifier> {
    wm.with_attr(&Atom::new("state-is-valid"))
        .find(|w| w.value == SymbolValue::atom("true"))
        .map(|w| w.id.clone())
}

/// Shortest chain of identifier links from `from` to `to`, following
/// elements in timetag order.
fn link_path(wm: &WorkingMemory, from: &Identifier, to: &Identifier) -> Option<Vec<Wme>> {
    let mut prev: BTreeMap<Identifier, Wme> = BTreeMap::new();
    let mut seen: BTreeSet<Identifier> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(from.clone());
    queue.push_back(from.clone());
    while let Some(n) = queue.pop_front() {
        if n == *to {
            let mut path = Vec::new();
            let mut cur = n;
            while let Some(w) = prev.get(&cur) {
                path.push(w.clone());
                cur = w.id.clone();
            }
            path.reverse();
            return Some(path);
        }
        for w in wm.with_id(&n) {
            if let SymbolValue::Identifier(next) = &w.value {
                if seen.insert(next.clone()) {
                    prev.insert(next.clone(), w.clone());
                    queue.push_back(next.clone());
                }
            }
        }
    }
    None
}

struct Namer {
    used: BTreeSet<String>,
    ids: BTreeMap<Identifier, Variable>,
    atoms: BTreeMap<Atom, Variable>,
}

impl Namer {
    fn new() -> Self {
        let mut used = BTreeSet::new();
        used.insert("s".to_string());
        used.insert("o".to_string());
        Namer { used, ids: BTreeMap::new(), atoms: BTreeMap::new() }
    }

    fn fresh(&mut self, hint: &str) -> Variable {
        // Last hyphenated segment: `candidate-item` names `<i>`.
        let word = hint.rsplit('-').next().unwrap_or(hint);
        let letter = word.chars().find(|c| c.is_ascii_alphabetic()).unwrap_or('x').to_ascii_lowercase();
        let mut name = letter.to_string();
        let mut n = 1;
        while self.used.contains(&name) {
            n += 1;
            name = format!("{}{}", letter, n);
        }
        self.used.insert(name.clone());
        Variable::from(name)
    }

    fn id_var(&mut self, id: &Identifier, hint: &str) -> Variable {
        if let Some(v) = self.ids.get(id) {
            return v.clone();
        }
        let v = self.fresh(hint);
        self.ids.insert(id.clone(), v.clone());
        v
    }
}

/// Compiles `raw` against the impasse snapshot.
pub fn build_chunk(raw: &ChunkRaw, snapshot: &WorkingMemory, config: &ChunkConfig) -> Result<Production, ChunkError> {
    check_grounding(raw, snapshot)?;
    let state = state_of(snapshot).ok_or(ChunkError::NoState)?;
    let s = Variable::new("s");

    // Atoms cited in two or more facts generalize; the variable takes its
    // name from the attribute of the last fact citing the atom.
    let mut atom_uses: BTreeMap<Atom, (usize, Atom)> = BTreeMap::new();
    for (_, attr, value) in &raw.conditions {
        if let SymbolValue::Atom(a) = value {
            let e = atom_uses.entry(a.clone()).or_insert((0, attr.clone()));
            e.0 += 1;
            e.1 = attr.clone();
        }
    }

    let mut namer = Namer::new();
    namer.ids.insert(state.clone(), s.clone());
    let mut conditions: Vec<Condition> = alloc::vec![Condition::positive(ConditionPattern {
        id: IdTest::Bind(s.clone()),
        attr: AttrTest::Equals(Atom::new("state-is-valid")),
        value: ConditionTest::Equals(SymbolValue::atom("true")),
    })];
    let mut emitted: BTreeSet<(Identifier, Atom, SymbolValue)> = BTreeSet::new();
    emitted.insert((state.clone(), Atom::new("state-is-valid"), SymbolValue::atom("true")));
    let cited: BTreeSet<(Identifier, Atom, SymbolValue)> = raw.conditions.iter().cloned().collect();

    let term = |namer: &mut Namer, v: &SymbolValue, attr: &Atom| -> ConditionTest {
        match v {
            SymbolValue::Identifier(id) => ConditionTest::VariableBind(namer.id_var(id, attr.as_str())),
            SymbolValue::Atom(a) => match atom_uses.get(a) {
                Some((n, hint)) if *n >= 2 => {
                    let var = match namer.atoms.get(a) {
                        Some(v) => v.clone(),
                        None => {
                            let v = namer.fresh(hint.as_str());
                            namer.atoms.insert(a.clone(), v.clone());
                            v
                        }
                    };
                    ConditionTest::VariableBind(var)
                }
                _ => ConditionTest::Equals(v.clone()),
            },
            other => ConditionTest::Equals(other.clone()),
        }
    };

    for (id, attr, value) in &raw.conditions {
        if !namer.ids.contains_key(id) {
            let path = link_path(snapshot, &state, id).ok_or_else(|| ChunkError::Unreachable(format!("<{}>", id)))?;
            for w in path {
                let key = (w.id.clone(), w.attr.clone(), w.value.clone());
                if emitted.contains(&key) || cited.contains(&key) && w.id != state {
                    continue;
                }
                emitted.insert(key);
                let id_var = namer.ids.get(&w.id).cloned().expect("path starts at a named identifier");
                let value = term(&mut namer, &w.value, &w.attr);
                conditions.push(Condition::positive(ConditionPattern {
                    id: IdTest::Bind(id_var),
                    attr: AttrTest::Equals(w.attr.clone()),
                    value,
                }));
            }
        }
        let key = (id.clone(), attr.clone(), value.clone());
        if !emitted.insert(key) {
            continue;
        }
        let id_var = match namer.ids.get(id) {
            Some(v) => v.clone(),
            None => return Err(ChunkError::Unreachable(format!("<{}>", id))),
        };
        let value = term(&mut namer, value, attr);
        conditions.push(Condition::positive(ConditionPattern {
            id: IdTest::Bind(id_var),
            attr: AttrTest::Equals(attr.clone()),
            value,
        }));
    }

    let o = Variable::new("o");
    let preference = match config.score {
        Some(x) => PreferenceSpec::Numeric(x),
        None => PreferenceSpec::Acceptable,
    };
    let mut actions = alloc::vec![
        ActionPattern::ProposeOperator { state: s.clone(), op: o.clone(), preference },
        ActionPattern::MakeWme { id: o.clone(), attr: AttrTerm::Const(Atom::new("name")), value: raw.action.name.clone() },
    ];
    for (attr, value) in &raw.action.params {
        let value = match value {
            SymbolValue::Identifier(id) => match namer.ids.get(id) {
                Some(v) => SymbolValue::Variable(v.clone()),
                None => {
                    // Literal item: only propose it while it is still a candidate.
                    let guard = Condition::positive(ConditionPattern {
                        id: IdTest::Bind(s.clone()),
                        attr: AttrTest::Equals(Atom::new("candidate-item")),
                        value: ConditionTest::Equals(value.clone()),
                    });
                    if !conditions.contains(&guard) {
                        conditions.push(guard);
                    }
                    value.clone()
                }
            },
            SymbolValue::Atom(a) => match namer.atoms.get(a) {
                Some(v) => SymbolValue::Variable(v.clone()),
                None => value.clone(),
            },
            other => other.clone(),
        };
        actions.push(ActionPattern::MakeWme { id: o.clone(), attr: AttrTerm::Const(attr.clone()), value });
    }

    let p = Production {
        name: format!("chunk-{}", raw.impasse_id),
        conditions,
        actions,
        provenance: Provenance::Chunked(raw.impasse_id.clone()),
        creation_cycle: config.cycle,
    };
    crate::dsl::validate(&p)?;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Term {
    Var(Variable),
    Const(SymbolValue),
    Shape(&'static str),
}

type Item = Vec<Term>;

fn condition_item(c: &Condition) -> Item {
    let id = match &c.pattern.id {
        IdTest::Bind(v) => Term::Var(v.clone()),
        IdTest::Equals(i) => Term::Const(SymbolValue::Identifier(i.clone())),
    };
    let attr = match &c.pattern.attr {
        AttrTest::Bind(v) => Term::Var(v.clone()),
        AttrTest::Equals(a) => Term::Const(SymbolValue::Atom(a.clone())),
    };
    let mut item = alloc::vec![Term::Shape(if c.negated { "-cond" } else { "cond" }), id, attr];
    match &c.pattern.value {
        ConditionTest::Equals(v) => item.push(Term::Const(v.clone())),
        ConditionTest::VariableBind(v) => item.push(Term::Var(v.clone())),
        ConditionTest::Relational(op, n) => {
            item.push(Term::Shape(op.symbol()));
            item.push(Term::Const(SymbolValue::Number(*n)));
        }
    }
    item
}

fn value_term(v: &SymbolValue) -> Term {
    match v {
        SymbolValue::Variable(v) => Term::Var(v.clone()),
        other => Term::Const(other.clone()),
    }
}

fn action_item(a: &ActionPattern) -> Item {
    match a {
        ActionPattern::MakeWme { id, attr, value } | ActionPattern::RemoveWme { id, attr, value } => {
            let kind = if matches!(a, ActionPattern::MakeWme { .. }) { "make" } else { "remove" };
            let attr = match attr {
                AttrTerm::Var(v) => Term::Var(v.clone()),
                AttrTerm::Const(c) => Term::Const(SymbolValue::Atom(c.clone())),
            };
            alloc::vec![Term::Shape(kind), Term::Var(id.clone()), attr, value_term(value)]
        }
        ActionPattern::ProposeOperator { state, op, preference } => {
            let mut item = alloc::vec![Term::Shape("propose"), Term::Var(state.clone()), Term::Var(op.clone())];
            match preference {
                PreferenceSpec::Acceptable => item.push(Term::Shape("+")),
                PreferenceSpec::Reject => item.push(Term::Shape("-")),
                PreferenceSpec::Best => item.push(Term::Shape(">")),
                PreferenceSpec::Numeric(n) => {
                    item.push(Term::Shape("="));
                    item.push(Term::Const(SymbolValue::Number(*n)));
                }
            }
            item
        }
    }
}

fn items(p: &Production) -> Vec<Item> {
    p.conditions.iter().map(condition_item).chain(p.actions.iter().map(action_item)).collect()
}

fn shape(item: &Item) -> Item {
    item.iter().map(|t| if let Term::Var(_) = t { Term::Shape("var") } else { t.clone() }).collect()
}

/// Variable-blind summary; alpha-equivalent productions share it.
fn signature(items: &[Item]) -> Vec<Item> {
    let mut s: Vec<Item> = items.iter().map(shape).collect();
    s.sort();
    s
}

struct Bijection {
    fwd: BTreeMap<Variable, Variable>,
    bwd: BTreeMap<Variable, Variable>,
}

impl Bijection {
    /// Extends the mapping so that `a` maps onto `b`; returns the pairs added.
    fn extend(&mut self, a: &Item, b: &Item) -> Option<Vec<Variable>> {
        if a.len() != b.len() {
            return None;
        }
        let mut added = Vec::new();
        for (x, y) in a.iter().zip(b) {
            let ok = match (x, y) {
                (Term::Var(x), Term::Var(y)) => match (self.fwd.get(x), self.bwd.get(y)) {
                    (Some(fx), Some(by)) => fx == y && by == x,
                    (None, None) => {
                        self.fwd.insert(x.clone(), y.clone());
                        self.bwd.insert(y.clone(), x.clone());
                        added.push(x.clone());
                        true
                    }
                    _ => false,
                },
                (x, y) => x == y,
            };
            if !ok {
                self.undo(&added);
                return None;
            }
        }
        Some(added)
    }

    fn undo(&mut self, added: &[Variable]) {
        for x in added {
            if let Some(y) = self.fwd.remove(x) {
                self.bwd.remove(&y);
            }
        }
    }
}

fn assign(a: &[Item], b: &[Item], k: usize, used: &mut [bool], bij: &mut Bijection) -> bool {
    if k == a.len() {
        return true;
    }
    for j in 0..b.len() {
        if used[j] || shape(&a[k]) != shape(&b[j]) {
            continue;
        }
        if let Some(added) = bij.extend(&a[k], &b[j]) {
            used[j] = true;
            if assign(a, b, k + 1, used, bij) {
                return true;
            }
            used[j] = false;
            bij.undo(&added);
        }
    }
    false
}

/// Equal up to consistent variable renaming and the order of conditions
/// and of actions. Names and provenance are ignored.
pub fn alpha_equivalent(p: &Production, q: &Production) -> bool {
    let (a, b) = (items(p), items(q));
    if a.len() != b.len() || signature(&a) != signature(&b) {
        return false;
    }
    let mut used = alloc::vec![false; b.len()];
    let mut bij = Bijection { fwd: BTreeMap::new(), bwd: BTreeMap::new() };
    assign(&a, &b, 0, &mut used, &mut bij)
}

/// Registers `p` unless an alpha-equivalent production already exists. A
/// name taken by a different production gets a numeric suffix.
pub fn internalize(
    pm: &mut ProceduralMemory,
    mut p: Production,
    justification: Option<String>,
) -> Result<ChunkOutcome, ValidationError> {
    let sig = signature(&items(&p));
    for existing in pm.productions() {
        if existing.conditions.len() == p.conditions.len()
            && existing.actions.len() == p.actions.len()
            && signature(&items(existing)) == sig
            && alpha_equivalent(existing, &p)
        {
            return Ok(ChunkOutcome::DuplicateOfExisting(existing.name.clone()));
        }
    }
    if pm.contains(&p.name) {
        let base = p.name.clone();
        let mut n = 2;
        while pm.contains(&format!("{}-{}", base, n)) {
            n += 1;
        }
        p.name = format!("{}-{}", base, n);
    }
    let name = p.name.clone();
    pm.register_with_justification(p, justification)?;
    Ok(ChunkOutcome::Added(name))
}
