//! Working memory: a set of `(id ^attribute value)` triples with indexes and
//! an append-only change journal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use crate::symbol::{Atom, Identifier, SymbolValue};

/// Insertion stamp. Unique per working memory and never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timetag(pub u64);

impl fmt::Display for Timetag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wme {
    pub id: Identifier,
    pub attr: Atom,
    pub value: SymbolValue,
    pub timetag: Timetag,
}

impl fmt::Display for Wme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(<{}> ^", self.id)?;
        crate::symbol::write_atom(f, self.attr.as_str())?;
        write!(f, " {})", self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JournalOp {
    Add,
    Remove,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JournalEntry {
    pub cycle: u64,
    pub op: JournalOp,
    pub wme: Wme,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WmError {
    #[error("variables cannot be stored in working memory")]
    VariableInWm,
    #[error("unknown timetag {0}")]
    UnknownTimetag(Timetag),
}

/// A query over triples; `None` fields are wildcards.
#[derive(Clone, Debug, Default)]
pub struct WmePattern {
    pub id: Option<Identifier>,
    pub attr: Option<Atom>,
    pub value: Option<SymbolValue>,
}

impl WmePattern {
    pub fn matches(&self, wme: &Wme) -> bool {
        self.id.as_ref().map_or(true, |id| *id == wme.id)
            && self.attr.as_ref().map_or(true, |a| *a == wme.attr)
            && self.value.as_ref().map_or(true, |v| *v == wme.value)
    }
}

type Triple = (Identifier, Atom, SymbolValue);

#[derive(Clone, Debug, Default)]
pub struct WorkingMemory {
    elements: BTreeMap<Timetag, Wme>,
    by_triple: BTreeMap<Triple, Timetag>,
    by_id: BTreeMap<Identifier, BTreeSet<Timetag>>,
    by_id_attr: BTreeMap<(Identifier, Atom), BTreeSet<Timetag>>,
    by_attr: BTreeMap<Atom, BTreeSet<Timetag>>,
    by_attr_value: BTreeMap<(Atom, SymbolValue), BTreeSet<Timetag>>,
    journal: Vec<JournalEntry>,
    next_timetag: u64,
    cycle: u64,
    gensym: BTreeMap<char, u64>,
    // every identifier ever stored, as id or value; gensym never hands these out
    known_ids: BTreeSet<Identifier>,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Decision-cycle number stamped on subsequent journal entries.
    pub fn set_cycle(&mut self, cycle: u64) {
        self.cycle = cycle;
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Inserts a triple. Re-inserting an existing triple returns its timetag
    /// and leaves the journal untouched.
    pub fn add(
        &mut self,
        id: Identifier,
        attr: Atom,
        value: SymbolValue,
    ) -> Result<Timetag, WmError> {
        if value.is_variable() {
            return Err(WmError::VariableInWm);
        }
        let key = (id, attr, value);
        if let Some(tag) = self.by_triple.get(&key) {
            return Ok(*tag);
        }
        self.next_timetag += 1;
        let tag = Timetag(self.next_timetag);
        let (id, attr, value) = key;
        let wme = Wme { id, attr, value, timetag: tag };
        self.index(&wme);
        self.journal.push(JournalEntry { cycle: self.cycle, op: JournalOp::Add, wme: wme.clone() });
        self.elements.insert(tag, wme);
        Ok(tag)
    }

    pub fn remove(&mut self, tag: Timetag) -> Result<Wme, WmError> {
        let wme = self.elements.remove(&tag).ok_or(WmError::UnknownTimetag(tag))?;
        self.unindex(&wme);
        self.journal.push(JournalEntry { cycle: self.cycle, op: JournalOp::Remove, wme: wme.clone() });
        Ok(wme)
    }

    /// Removes the triple if present.
    pub fn remove_triple(&mut self, id: &Identifier, attr: &Atom, value: &SymbolValue) -> Option<Wme> {
        let tag = self.timetag_of(id, attr, value)?;
        self.remove(tag).ok()
    }

    pub fn timetag_of(&self, id: &Identifier, attr: &Atom, value: &SymbolValue) -> Option<Timetag> {
        self.by_triple.get(&(id.clone(), attr.clone(), value.clone())).copied()
    }

    pub fn contains(&self, id: &Identifier, attr: &Atom, value: &SymbolValue) -> bool {
        self.timetag_of(id, attr, value).is_some()
    }

    pub fn get(&self, tag: Timetag) -> Option<&Wme> {
        self.elements.get(&tag)
    }

    /// All elements in timetag order.
    pub fn iter(&self) -> impl Iterator<Item = &Wme> + '_ {
        self.elements.values()
    }

    /// Elements matching every bound field of `pattern`, ordered by timetag.
    pub fn query(&self, pattern: &WmePattern) -> Vec<&Wme> {
        match (&pattern.id, &pattern.attr, &pattern.value) {
            (Some(id), Some(attr), Some(value)) => self
                .timetag_of(id, attr, value)
                .and_then(|t| self.elements.get(&t))
                .into_iter()
                .collect(),
            (Some(id), Some(attr), None) => self.with_id_attr(id, attr).collect(),
            (Some(id), None, _) => self.with_id(id).filter(|w| pattern.matches(w)).collect(),
            (None, Some(attr), _) => self.with_attr(attr).filter(|w| pattern.matches(w)).collect(),
            (None, None, _) => self.iter().filter(|w| pattern.matches(w)).collect(),
        }
    }

    pub fn with_id<'a>(&'a self, id: &Identifier) -> impl Iterator<Item = &'a Wme> + 'a {
        self.by_id.get(id).into_iter().flatten().map(move |t| &self.elements[t])
    }

    pub fn with_attr<'a>(&'a self, attr: &Atom) -> impl Iterator<Item = &'a Wme> + 'a {
        self.by_attr.get(attr).into_iter().flatten().map(move |t| &self.elements[t])
    }

    pub fn with_id_attr<'a>(&'a self, id: &Identifier, attr: &Atom) -> impl Iterator<Item = &'a Wme> + 'a {
        self.by_id_attr
            .get(&(id.clone(), attr.clone()))
            .into_iter()
            .flatten()
            .map(move |t| &self.elements[t])
    }

    pub fn with_attr_value<'a>(&'a self, attr: &Atom, value: &SymbolValue) -> impl Iterator<Item = &'a Wme> + 'a {
        self.by_attr_value
            .get(&(attr.clone(), value.clone()))
            .into_iter()
            .flatten()
            .map(move |t| &self.elements[t])
    }

    pub fn contains_tag(&self, tag: Timetag) -> bool {
        self.elements.contains_key(&tag)
    }

    /// The element holding exactly this triple, if any.
    pub fn triple(&self, id: &Identifier, attr: &Atom, value: &SymbolValue) -> Option<&Wme> {
        self.timetag_of(id, attr, value).and_then(|t| self.elements.get(&t))
    }

    /// First value (by timetag) of `(id ^attr ?)`.
    pub fn value_of(&self, id: &Identifier, attr: &Atom) -> Option<&SymbolValue> {
        self.with_id_attr(id, attr).next().map(|w| &w.value)
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    /// Fresh identifier `<letter><n>` that is not yet used as an element id.
    pub fn gensym(&mut self, letter: char) -> Identifier {
        let letter = if letter.is_ascii_alphabetic() { letter.to_ascii_lowercase() } else { 'x' };
        loop {
            let counter = self.gensym.entry(letter).or_insert(0);
            *counter += 1;
            let id = Identifier::from(format!("{}{}", letter, counter));
            if !self.known_ids.contains(&id) {
                self.known_ids.insert(id.clone());
                return id;
            }
        }
    }

    /// Immutable copy, unaffected by later mutation of `self`.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot(Arc::new(self.clone()))
    }

    /// Rebuilds a memory by applying journal entries in order. Timetags are
    /// taken from the entries, so the result equals the memory that wrote them.
    pub fn replay(entries: &[JournalEntry]) -> Self {
        let mut wm = WorkingMemory::new();
        for entry in entries {
            wm.cycle = entry.cycle;
            match entry.op {
                JournalOp::Add => {
                    let wme = entry.wme.clone();
                    wm.next_timetag = wm.next_timetag.max(wme.timetag.0);
                    wm.index(&wme);
                    wm.elements.insert(wme.timetag, wme);
                }
                JournalOp::Remove => {
                    if let Some(wme) = wm.elements.remove(&entry.wme.timetag) {
                        wm.unindex(&wme);
                    }
                }
            }
            wm.journal.push(entry.clone());
        }
        wm
    }

    /// Same triples with the same timetags.
    pub fn same_contents(&self, other: &WorkingMemory) -> bool {
        self.elements == other.elements
    }

    /// One element per line, `(<id> ^attribute value)`, in timetag order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for wme in self.iter() {
            out.push_str(&format!("{}\n", wme));
        }
        out
    }

    fn index(&mut self, wme: &Wme) {
        let tag = wme.timetag;
        if !self.known_ids.contains(&wme.id) {
            self.known_ids.insert(wme.id.clone());
        }
        if let SymbolValue::Identifier(v) = &wme.value {
            if !self.known_ids.contains(v) {
                self.known_ids.insert(v.clone());
            }
        }
        self.by_triple.insert((wme.id.clone(), wme.attr.clone(), wme.value.clone()), tag);
        self.by_id.entry(wme.id.clone()).or_default().insert(tag);
        self.by_id_attr.entry((wme.id.clone(), wme.attr.clone())).or_default().insert(tag);
        self.by_attr.entry(wme.attr.clone()).or_default().insert(tag);
        self.by_attr_value.entry((wme.attr.clone(), wme.value.clone())).or_default().insert(tag);
    }

    fn unindex(&mut self, wme: &Wme) {
        let tag = wme.timetag;
        self.by_triple.remove(&(wme.id.clone(), wme.attr.clone(), wme.value.clone()));
        remove_from(&mut self.by_id, &wme.id, tag);
        remove_from(&mut self.by_id_attr, &(wme.id.clone(), wme.attr.clone()), tag);
        remove_from(&mut self.by_attr, &wme.attr, tag);
        remove_from(&mut self.by_attr_value, &(wme.attr.clone(), wme.value.clone()), tag);
    }
}

fn remove_from<K: Ord + Clone>(index: &mut BTreeMap<K, BTreeSet<Timetag>>, key: &K, tag: Timetag) {
    if let Some(set) = index.get_mut(key) {
        set.remove(&tag);
        if set.is_empty() {
            index.remove(key);
        }
    }
}

/// A frozen working memory, shareable across threads.
#[derive(Clone, Debug)]
pub struct Snapshot(Arc<WorkingMemory>);

impl Deref for Snapshot {
    type Target = WorkingMemory;

    fn deref(&self) -> &WorkingMemory {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> Identifier {
        Identifier::new(s)
    }
    fn at(s: &str) -> Atom {
        Atom::new(s)
    }

    #[test]
    fn first_insertion_gets_timetag_one() {
        let mut wm = WorkingMemory::new();
        let t = wm.add(id("u1"), at("likes-genre"), SymbolValue::atom("sci-fi")).unwrap();
        assert_eq!(t, Timetag(1));
    }

    #[test]
    fn reinsertion_is_a_noop() {
        let mut wm = WorkingMemory::new();
        let t1 = wm.add(id("u1"), at("likes-genre"), SymbolValue::atom("sci-fi")).unwrap();
        let journal_len = wm.journal().len();
        let t2 = wm.add(id("u1"), at("likes-genre"), SymbolValue::atom("sci-fi")).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(wm.journal().len(), journal_len);
        assert_eq!(wm.len(), 1);
    }

    #[test]
    fn goal_then_history_get_consecutive_timetags() {
        let mut wm = WorkingMemory::new();
        let t1 = wm.add(id("g1"), at("type"), SymbolValue::atom("recommend")).unwrap();
        let t2 = wm.add(id("u1"), at("history"), SymbolValue::id("h1")).unwrap();
        assert_eq!((t1, t2), (Timetag(1), Timetag(2)));
    }

    #[test]
    fn variables_are_rejected() {
        let mut wm = WorkingMemory::new();
        assert_eq!(wm.add(id("u1"), at("x"), SymbolValue::var("g")), Err(WmError::VariableInWm));
        assert!(wm.is_empty());
        assert!(wm.journal().is_empty());
    }

    #[test]
    fn remove_only_element_empties_memory() {
        let mut wm = WorkingMemory::new();
        let t = wm.add(id("u1"), at("x"), SymbolValue::Number(1.0)).unwrap();
        let removed = wm.remove(t).unwrap();
        assert_eq!(removed.timetag, t);
        assert!(wm.is_empty());
        assert_eq!(wm.journal().len(), 2);
        assert_eq!(wm.remove(t), Err(WmError::UnknownTimetag(t)));
    }

    #[test]
    fn timetags_are_never_reused() {
        let mut wm = WorkingMemory::new();
        let t1 = wm.add(id("u1"), at("x"), SymbolValue::Number(1.0)).unwrap();
        wm.remove(t1).unwrap();
        let t2 = wm.add(id("u1"), at("x"), SymbolValue::Number(1.0)).unwrap();
        assert!(t2 > t1);
    }

    #[test]
    fn query_on_eq3_memory() {
        let mut wm = WorkingMemory::new();
        wm.add(id("g1"), at("type"), SymbolValue::atom("recommend")).unwrap();
        wm.add(id("u1"), at("history"), SymbolValue::id("h1")).unwrap();
        wm.add(id("c1"), at("items"), SymbolValue::id("v1")).unwrap();
        wm.add(id("c1"), at("items"), SymbolValue::id("v2")).unwrap();
        let hits = wm.query(&WmePattern { id: Some(id("u1")), ..Default::default() });
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].attr, at("history"));
        // multi-valued attribute
        let items = wm.query(&WmePattern { id: Some(id("c1")), attr: Some(at("items")), value: None });
        assert_eq!(items.len(), 2);
    }

    #[test]
    fn empty_query_on_empty_memory() {
        let wm = WorkingMemory::new();
        assert!(wm.query(&WmePattern::default()).is_empty());
    }

    #[test]
    fn snapshot_is_isolated() {
        let mut wm = WorkingMemory::new();
        wm.add(id("u1"), at("x"), SymbolValue::Number(1.0)).unwrap();
        let snap = wm.snapshot();
        wm.add(id("u1"), at("y"), SymbolValue::Number(2.0)).unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(snap.journal().len(), 1);
        assert_eq!(wm.len(), 2);
        assert!(WorkingMemory::new().snapshot().is_empty());
    }

    #[test]
    fn dump_format() {
        let mut wm = WorkingMemory::new();
        wm.add(id("g1"), at("type"), SymbolValue::atom("recommend")).unwrap();
        wm.add(id("u1"), at("history"), SymbolValue::id("h1")).unwrap();
        wm.add(id("v1"), at("title"), SymbolValue::atom("Blade Runner")).unwrap();
        wm.add(id("v1"), at("year"), SymbolValue::Number(1982.0)).unwrap();
        assert_eq!(
            wm.dump(),
            "(<g1> ^type recommend)\n(<u1> ^history <h1>)\n(<v1> ^title \"Blade Runner\")\n(<v1> ^year 1982)\n"
        );
    }

    #[test]
    fn gensym_skips_used_names() {
        let mut wm = WorkingMemory::new();
        wm.add(id("o1"), at("name"), SymbolValue::atom("x")).unwrap();
        assert_eq!(wm.gensym('o'), id("o2"));
        assert_eq!(wm.gensym('o'), id("o3"));
        assert_eq!(wm.gensym('c'), id("c1"));
    }
}
