//! Text formats for productions.
//!
//! ```text
//! sp_block   := "sp" "{" [name] [flag*] ["IF"] condition+ "-->" action+ "}"
//! flag       := ":bootstrap" | ":manual" | ":chunk" symbol | ":cycle" number
//! condition  := ["-"] "(" id_test ("^" attr value_test)+ ")"
//! id_test    := "state" var | var | "@" identifier
//! value_test := constant | var | "{" relop number "}"
//! action     := "(" var ("^" attr value_term [pref])+ ")"
//! pref       := "+" | "-" | ">" | "=" number
//! ```
//!
//! Variables are written `<v>` or `?v`; both spellings name the same
//! variable. Rule files may hold any number of blocks and use `#` comments.
//! The same lexer reads working-memory literals such as
//! `(<u1> ^preference cyberpunk)`, where `<u1>` is an identifier.

mod bootstrap;
mod lexer;
mod parser;
mod serialize;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;

pub use bootstrap::{parse_if_then_rules, IfThenOutcome, RejectedLine};
pub use parser::{parse_production, parse_rules, parse_wme_literal, parse_wmes};
pub use serialize::{serialize_production, serialize_rules};
pub use validate::{validate, ValidationError};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("invalid production: {0}")]
    Validation(#[from] ValidationError),
    #[error("all {} non-empty lines were rejected", rejected.len())]
    AllLinesRejected { rejected: Vec<RejectedLine> },
}
