//! Closed attribute vocabulary of a dataset (genre, theme, director, ...).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::symbol::Atom;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainSchema {
    pub version: u32,
    pub attributes: BTreeMap<Atom, BTreeSet<Atom>>,
}

impl DomainSchema {
    pub fn new(version: u32) -> Self {
        DomainSchema { version, attributes: BTreeMap::new() }
    }

    /// Adds `value` to the domain of `attr`, creating the attribute if needed.
    pub fn insert(&mut self, attr: &str, value: &str) {
        self.attributes.entry(Atom::new(attr)).or_default().insert(Atom::new(value));
    }

    pub fn declare(&mut self, attr: &str) {
        self.attributes.entry(Atom::new(attr)).or_default();
    }

    pub fn has_attribute(&self, attr: &str) -> bool {
        self.attributes.contains_key(&Atom::new(attr))
    }

    pub fn contains(&self, attr: &str, value: &str) -> bool {
        self.attributes
            .get(&Atom::new(attr))
            .is_some_and(|vals| vals.contains(&Atom::new(value)))
    }

    /// The first attribute (in name order) whose domain holds `value`.
    pub fn attribute_of(&self, value: &str) -> Option<&Atom> {
        let value = Atom::new(value);
        self.attributes.iter().find(|(_, vals)| vals.contains(&value)).map(|(a, _)| a)
    }

    pub fn attribute_names(&self) -> Vec<&Atom> {
        self.attributes.keys().collect()
    }

    pub fn values(&self, attr: &str) -> impl Iterator<Item = &Atom> {
        self.attributes.get(&Atom::new(attr)).into_iter().flatten()
    }
}
