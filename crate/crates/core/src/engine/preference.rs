//! Operator selection from preferences.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::matcher::Binding;
use crate::symbol::{write_atom, Atom, SymbolValue};

/// Operator identity: its name plus sorted parameters. Two proposals for the
/// same name and parameters refer to the same operator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OperatorKey {
    pub name: SymbolValue,
    pub params: Vec<(Atom, SymbolValue)>,
}

impl OperatorKey {
    pub fn new(name: &str, mut params: Vec<(Atom, SymbolValue)>) -> Self {
        params.sort();
        params.dedup();
        OperatorKey { name: SymbolValue::atom(name), params }
    }

    pub fn param(&self, attr: &str) -> Option<&SymbolValue> {
        self.params.iter().find(|(a, _)| a.as_str() == attr).map(|(_, v)| v)
    }

    pub fn name_str(&self) -> Option<&str> {
        self.name.as_atom().map(Atom::as_str)
    }
}

impl fmt::Display for OperatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, (a, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_atom(f, a.as_str())?;
            write!(f, "={}", v)?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug)]
pub enum PreferenceKind {
    Acceptable,
    Reject,
    /// Soar's "best": when any surviving operator is best, only best ones remain.
    Best,
    /// This operator is preferred over the given one.
    BetterThan(OperatorKey),
    /// Scores of one operator from several proposals are summed.
    NumericIndifferent(f64),
}

impl PartialEq for PreferenceKind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PreferenceKind::NumericIndifferent(a), PreferenceKind::NumericIndifferent(b)) => a.to_bits() == b.to_bits(),
            (PreferenceKind::BetterThan(a), PreferenceKind::BetterThan(b)) => a == b,
            (a, b) => core::mem::discriminant(a) == core::mem::discriminant(b),
        }
    }
}

impl fmt::Display for PreferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreferenceKind::Acceptable => f.write_str("+"),
            PreferenceKind::Reject => f.write_str("-"),
            PreferenceKind::Best => f.write_str(">"),
            PreferenceKind::BetterThan(o) => write!(f, "> {}", o),
            PreferenceKind::NumericIndifferent(n) => write!(f, "= {}", n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorProposal {
    pub operator: OperatorKey,
    pub preference: PreferenceKind,
    pub source: String,
    pub binding: Binding,
}

impl OperatorProposal {
    pub fn new(operator: OperatorKey, preference: PreferenceKind) -> Self {
        OperatorProposal { operator, preference, source: String::new(), binding: Binding::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImpasseKind {
    /// Two or more undominated candidates and no way to order them.
    Tie(Vec<OperatorKey>),
    /// Nothing survives selection.
    NoChange,
    /// Better-than preferences that form a cycle; the pairs on the cycle.
    Conflict(Vec<(OperatorKey, OperatorKey)>),
}

impl ImpasseKind {
    pub fn label(&self) -> &'static str {
        match self {
            ImpasseKind::Tie(_) => "tie",
            ImpasseKind::NoChange => "no-change",
            ImpasseKind::Conflict(_) => "conflict",
        }
    }
}

impl fmt::Display for ImpasseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.label())?;
        match self {
            ImpasseKind::Tie(ops) => {
                for (i, o) in ops.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", o)?;
                }
            }
            ImpasseKind::NoChange => {}
            ImpasseKind::Conflict(pairs) => {
                for (i, (a, b)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{} > {}", a, b)?;
                }
            }
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Selection {
    Selected(OperatorKey),
    Impasse(ImpasseKind),
}

/// The select phase.
///
/// 1. Operators with a reject preference are dropped; the rest of the
///    proposed operators are candidates.
/// 2. If any candidate is best, only best candidates remain.
/// 3. Better-than preferences among candidates form a graph; a cycle is a
///    conflict, otherwise only undominated candidates remain.
/// 4. One survivor is selected. With several, the scored survivors (those
///    with numeric preferences) compete on summed score, ties going to the
///    smallest operator key. Several unscored survivors are a tie.
pub fn resolve_preferences(proposals: &[OperatorProposal]) -> Selection {
    let mut rejected: BTreeSet<&OperatorKey> = BTreeSet::new();
    let mut best: BTreeSet<&OperatorKey> = BTreeSet::new();
    let mut scores: BTreeMap<&OperatorKey, f64> = BTreeMap::new();
    let mut all: BTreeSet<&OperatorKey> = BTreeSet::new();
    for p in proposals {
        all.insert(&p.operator);
        match &p.preference {
            PreferenceKind::Reject => {
                rejected.insert(&p.operator);
            }
            PreferenceKind::Best => {
                best.insert(&p.operator);
            }
            PreferenceKind::NumericIndifferent(n) => {
                *scores.entry(&p.operator).or_insert(0.0) += *n;
            }
            PreferenceKind::Acceptable | PreferenceKind::BetterThan(_) => {}
        }
    }
    let mut survivors: BTreeSet<&OperatorKey> = all.difference(&rejected).copied().collect();
    if survivors.iter().any(|o| best.contains(o)) {
        survivors.retain(|o| best.contains(o));
    }

    let mut edges: BTreeSet<(&OperatorKey, &OperatorKey)> = BTreeSet::new();
    for p in proposals {
        if let PreferenceKind::BetterThan(worse) = &p.preference {
            if let Some(worse) = survivors.get(worse) {
                if survivors.contains(&p.operator) && p.operator != **worse {
                    edges.insert((&p.operator, *worse));
                }
            }
        }
    }
    let cyclic = cyclic_edges(&edges);
    if !cyclic.is_empty() {
        return Selection::Impasse(ImpasseKind::Conflict(
            cyclic.into_iter().map(|(a, b)| (a.clone(), b.clone())).collect(),
        ));
    }
    survivors.retain(|o| !edges.iter().any(|(_, worse)| worse == o));

    match survivors.len() {
        0 => Selection::Impasse(ImpasseKind::NoChange),
        1 => Selection::Selected((*survivors.first().expect("one survivor")).clone()),
        _ => {
            let mut winner: Option<(&OperatorKey, f64)> = None;
            for o in &survivors {
                if let Some(&s) = scores.get(o) {
                    // Survivors iterate in key order, so strict > keeps the smallest key on ties.
                    if winner.map_or(true, |(_, w)| s > w) {
                        winner = Some((o, s));
                    }
                }
            }
            match winner {
                Some((o, _)) => Selection::Selected(o.clone()),
                None => Selection::Impasse(ImpasseKind::Tie(survivors.into_iter().cloned().collect())),
            }
        }
    }
}

/// Edges that lie on a cycle, i.e. `a > b` where `b` also reaches `a`.
fn cyclic_edges<'a>(edges: &BTreeSet<(&'a OperatorKey, &'a OperatorKey)>) -> Vec<(&'a OperatorKey, &'a OperatorKey)> {
    let reaches = |from: &OperatorKey, to: &OperatorKey| -> bool {
        let mut seen: BTreeSet<&OperatorKey> = BTreeSet::new();
        let mut stack: Vec<&OperatorKey> = alloc::vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if !seen.insert(n) {
                continue;
            }
            for (a, b) in edges {
                if *a == n {
                    stack.push(b);
                }
            }
        }
        false
    };
    edges.iter().filter(|(a, b)| reaches(b, a)).copied().collect()
}
