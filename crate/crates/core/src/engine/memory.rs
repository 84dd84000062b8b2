//! Procedural memory: the named production set plus an attribute index.
//!
//! Clones share storage; the first mutation after a clone copies the maps
//! (rules themselves stay shared behind `Arc`).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::matcher::JoinPlan;
use crate::dsl::{validate, ValidationError};
use crate::production::Production;
use crate::symbol::Atom;

/// A registered production with its precomputed join plan.
#[derive(Clone, Debug)]
pub struct Rule {
    pub production: Production,
    pub plan: JoinPlan,
    pub apply: bool,
    /// Constant attributes of positive conditions.
    pub required_attrs: Vec<Atom>,
    /// The model's stated reasons, for rules learned from an impasse.
    pub justification: Option<String>,
}

impl Rule {
    pub fn compile(production: Production) -> Self {
        let plan = JoinPlan::for_production(&production);
        let apply = production.is_apply_rule();
        let required_attrs = production.tested_attributes().into_iter().cloned().collect();
        Rule { production, plan, apply, required_attrs, justification: None }
    }

    pub fn name(&self) -> &str {
        &self.production.name
    }
}

#[derive(Clone, Debug, Default)]
pub struct ProceduralMemory {
    rules: Arc<BTreeMap<String, Arc<Rule>>>,
    by_attr: Arc<BTreeMap<Atom, BTreeSet<String>>>,
}

impl ProceduralMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.rules.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Rule>> {
        self.rules.get(name)
    }

    /// Rules in name order.
    pub fn rules(&self) -> impl Iterator<Item = &Arc<Rule>> {
        self.rules.values()
    }

    pub fn productions(&self) -> impl Iterator<Item = &Production> {
        self.rules.values().map(|r| &r.production)
    }

    /// Names of the rules whose conditions test `attr`.
    pub fn rules_testing(&self, attr: &Atom) -> impl Iterator<Item = &str> {
        self.by_attr.get(attr).into_iter().flatten().map(String::as_str)
    }

    /// Adds a validated production; it takes part in the next match.
    pub fn register(&mut self, production: Production) -> Result<(), ValidationError> {
        self.register_with_justification(production, None)
    }

    pub fn register_with_justification(
        &mut self,
        production: Production,
        justification: Option<String>,
    ) -> Result<(), ValidationError> {
        validate(&production)?;
        if self.rules.contains_key(&production.name) {
            return Err(ValidationError::DuplicateName(production.name.clone()));
        }
        let mut rule = Rule::compile(production);
        rule.justification = justification;
        let name = rule.production.name.clone();
        let by_attr = Arc::make_mut(&mut self.by_attr);
        for attr in &rule.required_attrs {
            by_attr.entry(attr.clone()).or_default().insert(name.clone());
        }
        Arc::make_mut(&mut self.rules).insert(name, Arc::new(rule));
        Ok(())
    }

    /// True when both handles still share the same storage.
    pub fn shares_storage_with(&self, other: &ProceduralMemory) -> bool {
        Arc::ptr_eq(&self.rules, &other.rules)
    }
}
