//! Symbolic core of the cognitive recommender: working memory, productions
//! and their text format, the decision-cycle engine, chunking, the bridge to
//! a language model, dataset processing and ranking metrics.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, networking
//! and the command-line interface live in the `cogrec` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod bridge;
pub mod chunking;
pub mod data;
pub mod dsl;
pub mod engine;
pub mod llm;
pub mod metrics;
pub mod oracle;
pub mod production;
pub mod schema;
pub mod symbol;
pub mod templates;
pub mod wm;

pub use production::{
    ActionPattern, AttrTerm, AttrTest, Condition, ConditionPattern, ConditionTest, IdTest, PreferenceSpec, Production,
    Provenance, RelOp,
};
pub use schema::DomainSchema;
pub use symbol::{Atom, Identifier, SymbolValue, Variable};
pub use wm::{Timetag, WorkingMemory, Wme, WmError, WmePattern};
