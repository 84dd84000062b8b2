//! Condition matching by indexed left-to-right join.
//!
//! Each production gets a join plan when it is registered: positive
//! conditions are reordered greedily so that every step probes the most
//! selective index available given the variables bound so far. Negated
//! conditions run last, once all shared variables are bound.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use super::memory::{ProceduralMemory, Rule};
use crate::production::{AttrTest, Condition, ConditionTest, IdTest, Production};
use crate::symbol::{SymbolValue, Variable};
use crate::wm::{JournalEntry, JournalOp, Timetag, Wme, WorkingMemory};

/// Variable assignments, kept sorted by variable name.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Binding(Vec<(Variable, SymbolValue)>);

impl Binding {
    pub fn new() -> Self {
        Binding(Vec::new())
    }

    pub fn get(&self, var: &Variable) -> Option<&SymbolValue> {
        self.0.binary_search_by(|(v, _)| v.cmp(var)).ok().map(|i| &self.0[i].1)
    }

    /// Binds `var`, or checks consistency when it is already bound.
    pub fn unify(&mut self, var: &Variable, value: SymbolValue) -> bool {
        match self.0.binary_search_by(|(v, _)| v.cmp(var)) {
            Ok(i) => self.0[i].1 == value,
            Err(i) => {
                self.0.insert(i, (var.clone(), value));
                true
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, &SymbolValue)> {
        self.0.iter().map(|(k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}={}", k, v)?;
        }
        Ok(())
    }
}

impl FromIterator<(Variable, SymbolValue)> for Binding {
    fn from_iter<T: IntoIterator<Item = (Variable, SymbolValue)>>(iter: T) -> Self {
        let mut b = Binding::new();
        for (k, v) in iter {
            b.unify(&k, v);
        }
        b
    }
}

/// Order in which a production's conditions are joined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinPlan {
    pub order: Vec<usize>,
}

fn condition_vars(c: &Condition) -> impl Iterator<Item = &Variable> {
    let id = match &c.pattern.id {
        IdTest::Bind(v) => Some(v),
        IdTest::Equals(_) => None,
    };
    let attr = match &c.pattern.attr {
        AttrTest::Bind(v) => Some(v),
        AttrTest::Equals(_) => None,
    };
    let value = match &c.pattern.value {
        ConditionTest::VariableBind(v) => Some(v),
        _ => None,
    };
    id.into_iter().chain(attr).chain(value)
}

fn selectivity(c: &Condition, bound: &[&Variable]) -> u32 {
    let known = |v: &Variable| bound.contains(&v);
    let id_known = match &c.pattern.id {
        IdTest::Bind(v) => known(v),
        IdTest::Equals(_) => true,
    };
    let attr_const = matches!(c.pattern.attr, AttrTest::Equals(_));
    let value_known = match &c.pattern.value {
        ConditionTest::Equals(_) => true,
        ConditionTest::VariableBind(v) => known(v),
        ConditionTest::Relational(..) => false,
    };
    match (id_known, attr_const, value_known) {
        (true, true, true) => 7,
        (true, true, false) => 6,
        (true, false, true) => 5,
        (true, false, false) => 4,
        (false, true, true) => 3,
        (false, true, false) => 2,
        (false, false, true) => 1,
        (false, false, false) => 0,
    }
}

impl JoinPlan {
    pub fn for_production(p: &Production) -> Self {
        Self::plan(p, None)
    }

    /// Plan for the remaining conditions once condition `first` is matched.
    fn seeded(p: &Production, first: usize) -> Self {
        Self::plan(p, Some(first))
    }

    fn plan(p: &Production, first: Option<usize>) -> Self {
        let mut remaining: Vec<usize> =
            (0..p.conditions.len()).filter(|&i| !p.conditions[i].negated && Some(i) != first).collect();
        let mut bound: Vec<&Variable> = first.into_iter().flat_map(|i| condition_vars(&p.conditions[i])).collect();
        let mut order = Vec::new();
        while !remaining.is_empty() {
            // Highest selectivity wins; earlier conditions win ties.
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .max_by(|(ia, &a), (ib, &b)| {
                    selectivity(&p.conditions[a], &bound)
                        .cmp(&selectivity(&p.conditions[b], &bound))
                        .then(ib.cmp(ia))
                })
                .expect("remaining is non-empty");
            let idx = remaining.remove(pos);
            bound.extend(condition_vars(&p.conditions[idx]));
            order.push(idx);
        }
        order.extend((0..p.conditions.len()).filter(|&i| p.conditions[i].negated));
        JoinPlan { order }
    }
}

/// Tests one element against one condition, extending `binding` on success.
pub fn unify_condition(c: &Condition, wme: &Wme, binding: &mut Binding) -> bool {
    match &c.pattern.id {
        IdTest::Bind(v) => {
            if !binding.unify(v, SymbolValue::Identifier(wme.id.clone())) {
                return false;
            }
        }
        IdTest::Equals(id) => {
            if *id != wme.id {
                return false;
            }
        }
    }
    match &c.pattern.attr {
        AttrTest::Bind(v) => {
            if !binding.unify(v, SymbolValue::Atom(wme.attr.clone())) {
                return false;
            }
        }
        AttrTest::Equals(a) => {
            if *a != wme.attr {
                return false;
            }
        }
    }
    match &c.pattern.value {
        ConditionTest::Equals(v) => *v == wme.value,
        ConditionTest::VariableBind(v) => binding.unify(v, wme.value.clone()),
        ConditionTest::Relational(op, n) => wme.value.as_number().is_some_and(|x| op.holds(x, *n)),
    }
}

/// Elements that could satisfy `c` under `binding`, drawn from the narrowest index.
fn candidates<'a>(c: &Condition, binding: &Binding, wm: &'a WorkingMemory) -> Box<dyn Iterator<Item = &'a Wme> + 'a> {
    let none = || -> Box<dyn Iterator<Item = &'a Wme> + 'a> { Box::new(core::iter::empty()) };
    let id = match &c.pattern.id {
        IdTest::Equals(id) => Some(id),
        IdTest::Bind(v) => match binding.get(v) {
            Some(SymbolValue::Identifier(id)) => Some(id),
            Some(_) => return none(),
            None => None,
        },
    };
    let attr = match &c.pattern.attr {
        AttrTest::Equals(a) => Some(a),
        AttrTest::Bind(v) => match binding.get(v) {
            Some(SymbolValue::Atom(a)) => Some(a),
            Some(_) => return none(),
            None => None,
        },
    };
    let value = match &c.pattern.value {
        ConditionTest::Equals(v) => Some(v),
        ConditionTest::VariableBind(v) => binding.get(v),
        ConditionTest::Relational(..) => None,
    };
    match (id, attr, value) {
        (Some(id), Some(attr), Some(value)) => Box::new(wm.triple(id, attr, value).into_iter()),
        (Some(id), Some(attr), None) => Box::new(wm.with_id_attr(id, attr)),
        (None, Some(attr), Some(value)) => Box::new(wm.with_attr_value(attr, value)),
        (Some(id), None, _) => Box::new(wm.with_id(id)),
        (None, Some(attr), None) => Box::new(wm.with_attr(attr)),
        (None, None, _) => Box::new(wm.iter()),
    }
}

/// Variables newly bound by one condition, so they can be unbound again.
#[derive(Default)]
struct Undo<'c>([Option<&'c Variable>; 3]);

impl<'c> Undo<'c> {
    fn revert(self, binding: &mut Binding) {
        for v in self.0.into_iter().flatten() {
            if let Ok(i) = binding.0.binary_search_by(|(k, _)| k.cmp(v)) {
                binding.0.remove(i);
            }
        }
    }
}

fn bind<'c>(binding: &mut Binding, var: &'c Variable, value: SymbolValue, undo: &mut Undo<'c>, slot: usize) -> bool {
    match binding.0.binary_search_by(|(v, _)| v.cmp(var)) {
        Ok(i) => binding.0[i].1 == value,
        Err(i) => {
            binding.0.insert(i, (var.clone(), value));
            undo.0[slot] = Some(var);
            true
        }
    }
}

/// Like [`unify_condition`], but records what it bound. On failure the
/// binding is already restored.
fn extend<'c>(c: &'c Condition, wme: &Wme, binding: &mut Binding) -> Option<Undo<'c>> {
    let mut undo = Undo::default();
    let ok = (match &c.pattern.id {
        IdTest::Bind(v) => bind(binding, v, SymbolValue::Identifier(wme.id.clone()), &mut undo, 0),
        IdTest::Equals(id) => *id == wme.id,
    }) && (match &c.pattern.attr {
        AttrTest::Bind(v) => bind(binding, v, SymbolValue::Atom(wme.attr.clone()), &mut undo, 1),
        AttrTest::Equals(a) => *a == wme.attr,
    }) && (match &c.pattern.value {
        ConditionTest::Equals(v) => *v == wme.value,
        ConditionTest::VariableBind(v) => bind(binding, v, wme.value.clone(), &mut undo, 2),
        ConditionTest::Relational(op, n) => wme.value.as_number().is_some_and(|x| op.holds(x, *n)),
    });
    if ok {
        Some(undo)
    } else {
        undo.revert(binding);
        None
    }
}

fn join(p: &Production, plan: &[usize], step: usize, binding: &mut Binding, wm: &WorkingMemory, out: &mut Vec<Binding>) {
    let Some(&idx) = plan.get(step) else {
        out.push(binding.clone());
        return;
    };
    let c = &p.conditions[idx];
    if c.negated {
        let mut blocked = false;
        for w in candidates(c, binding, wm) {
            if let Some(undo) = extend(c, w, binding) {
                undo.revert(binding);
                blocked = true;
                break;
            }
        }
        if !blocked {
            join(p, plan, step + 1, binding, wm, out);
        }
        return;
    }
    for w in candidates(c, binding, wm) {
        if let Some(undo) = extend(c, w, binding) {
            join(p, plan, step + 1, binding, wm, out);
            undo.revert(binding);
        }
    }
}

/// All consistent bindings of one production, sorted and deduplicated.
pub fn match_production(p: &Production, plan: &JoinPlan, wm: &WorkingMemory) -> Vec<Binding> {
    let mut out = Vec::new();
    join(p, &plan.order, 0, &mut Binding::new(), wm, &mut out);
    out.sort();
    out.dedup();
    out
}

/// A production instantiation.
#[derive(Clone, Debug)]
pub struct RuleMatch {
    pub rule: Arc<Rule>,
    pub binding: Binding,
}

impl RuleMatch {
    pub fn name(&self) -> &str {
        &self.rule.production.name
    }
}

impl PartialEq for RuleMatch {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name() && self.binding == other.binding
    }
}

/// Every instantiation of every production in `pm`, ordered by production
/// name and then binding.
pub fn match_all(pm: &ProceduralMemory, wm: &WorkingMemory) -> Vec<RuleMatch> {
    match_filtered(pm, wm, |_| true)
}

fn match_filtered(pm: &ProceduralMemory, wm: &WorkingMemory, keep: impl Fn(&Rule) -> bool) -> Vec<RuleMatch> {
    let mut out = Vec::new();
    for rule in pm.rules() {
        if !keep(rule) {
            continue;
        }
        // A rule whose constant attributes are absent from memory cannot match.
        if rule.required_attrs.iter().any(|a| wm.with_attr(a).next().is_none()) {
            continue;
        }
        for binding in match_production(&rule.production, &rule.plan, wm) {
            out.push(RuleMatch { rule: Arc::clone(rule), binding });
        }
    }
    out
}

/// Whether `wme` passes the constant tests of `c`.
fn compatible(c: &Condition, wme: &Wme) -> bool {
    (match &c.pattern.id {
        IdTest::Equals(id) => *id == wme.id,
        IdTest::Bind(_) => true,
    }) && (match &c.pattern.attr {
        AttrTest::Equals(a) => *a == wme.attr,
        AttrTest::Bind(_) => true,
    }) && (match &c.pattern.value {
        ConditionTest::Equals(v) => *v == wme.value,
        ConditionTest::VariableBind(_) => true,
        ConditionTest::Relational(op, n) => wme.value.as_number().is_some_and(|x| op.holds(x, *n)),
    })
}

/// Whether every positive condition still has a supporting element.
fn still_holds(p: &Production, binding: &mut Binding, wm: &WorkingMemory) -> bool {
    p.conditions.iter().filter(|c| !c.negated).all(|c| {
        candidates(c, binding, wm).any(|w| match extend(c, w, binding) {
            Some(undo) => {
                undo.revert(binding);
                true
            }
            None => false,
        })
    })
}

#[derive(Clone, Debug)]
struct CachedRule {
    rule: Arc<Rule>,
    matches: BTreeSet<Binding>,
    /// Journal length this entry has seen.
    synced: usize,
    seeded: Vec<Option<JoinPlan>>,
}

impl CachedRule {
    fn full(rule: &Arc<Rule>, wm: &WorkingMemory) -> Self {
        let matches = if rule.required_attrs.iter().any(|a| wm.with_attr(a).next().is_none()) {
            BTreeSet::new()
        } else {
            match_production(&rule.production, &rule.plan, wm).into_iter().collect()
        };
        CachedRule {
            rule: Arc::clone(rule),
            matches,
            synced: wm.journal().len(),
            seeded: alloc::vec![None; rule.production.conditions.len()],
        }
    }

    /// Brings the match set up to date with the journal entries it has not seen.
    fn update(&mut self, wm: &WorkingMemory) {
        let deltas = &wm.journal()[self.synced..];
        self.synced = wm.journal().len();
        if deltas.is_empty() {
            return;
        }
        let p = &self.rule.production;
        let touches = |negated: bool, e: &JournalEntry| p.conditions.iter().any(|c| c.negated == negated && compatible(c, &e.wme));
        if deltas.iter().any(|e| touches(true, e)) {
            *self = CachedRule::full(&self.rule, wm);
            return;
        }
        let removed: Vec<(&Condition, &Wme)> = deltas
            .iter()
            .filter(|e| e.op == JournalOp::Remove)
            .flat_map(|e| p.conditions.iter().filter(|c| !c.negated && compatible(c, &e.wme)).map(move |c| (c, &e.wme)))
            .collect();
        if !removed.is_empty() {
            // A complete match binds every variable, so a removed element it
            // could have used unifies without binding anything new.
            let old = core::mem::take(&mut self.matches);
            self.matches = old
                .into_iter()
                .filter_map(|mut b| {
                    let suspect = removed.iter().any(|(c, w)| match extend(c, w, &mut b) {
                        Some(undo) => {
                            undo.revert(&mut b);
                            true
                        }
                        None => false,
                    });
                    (!suspect || still_holds(p, &mut b, wm)).then_some(b)
                })
                .collect();
        }
        let mut out = Vec::new();
        for e in deltas.iter().filter(|e| e.op == JournalOp::Add) {
            let mut live = None;
            for (i, c) in p.conditions.iter().enumerate() {
                if c.negated || !compatible(c, &e.wme) || !*live.get_or_insert_with(|| wm.contains_tag(e.wme.timetag)) {
                    continue;
                }
                let mut binding = Binding::new();
                if extend(c, &e.wme, &mut binding).is_none() {
                    continue;
                }
                let plan = self.seeded[i].get_or_insert_with(|| JoinPlan::seeded(p, i));
                join(p, &plan.order, 0, &mut binding, wm, &mut out);
            }
        }
        self.matches.extend(out);
    }
}

/// Match sets kept across calls and updated from the working-memory
/// journal, so that only rules touched by recent changes are re-joined.
/// Results equal [`match_all`] restricted to the kept rules.
#[derive(Clone, Debug, Default)]
pub struct MatchCache {
    rules: BTreeMap<String, CachedRule>,
    /// Journal length and last entry at the previous call, to notice a
    /// working memory that was replaced rather than extended.
    seen: (usize, Option<(Timetag, JournalOp)>),
}

impl MatchCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_continuity(&mut self, wm: &WorkingMemory) {
        let journal = wm.journal();
        let (len, last) = self.seen;
        let entry_at = |n: usize| n.checked_sub(1).and_then(|i| journal.get(i)).map(|e| (e.wme.timetag, e.op));
        if len > journal.len() || entry_at(len) != last {
            self.rules.clear();
        }
        self.seen = (journal.len(), entry_at(journal.len()));
    }

    pub fn matches(&mut self, pm: &ProceduralMemory, wm: &WorkingMemory, keep: impl Fn(&Rule) -> bool) -> Vec<RuleMatch> {
        self.check_continuity(wm);
        let mut out = Vec::new();
        for rule in pm.rules() {
            if !keep(rule) {
                continue;
            }
            let entry = match self.rules.get_mut(rule.name()) {
                Some(e) if Arc::ptr_eq(&e.rule, rule) => {
                    e.update(wm);
                    e
                }
                _ => {
                    self.rules.insert(String::from(rule.name()), CachedRule::full(rule, wm));
                    self.rules.get_mut(rule.name()).expect("just inserted")
                }
            };
            out.extend(entry.matches.iter().map(|b| RuleMatch { rule: Arc::clone(rule), binding: b.clone() }));
        }
        out
    }
}

/// Renders `name(<v>=x, ...)`.
pub fn describe_match(name: &str, binding: &Binding) -> String {
    alloc::format!("{}({})", name, binding)
}
