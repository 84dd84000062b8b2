//! Prompt templates and `{placeholder}` substitution.
//!
//! The template text lives in `templates/*.txt` beside the crate so it can
//! be edited without touching code.

use alloc::string::String;

pub const IMPASSE: &str = include_str!("../templates/impasse.txt");
pub const RESPONSE_FORMAT: &str = include_str!("../templates/response_format.txt");
pub const ENCODE: &str = include_str!("../templates/encode.txt");
pub const RANK: &str = include_str!("../templates/rank.txt");
pub const BOOTSTRAP: &str = include_str!("../templates/bootstrap.txt");
pub const BOOTSTRAP_GRAMMAR: &str = include_str!("../templates/bootstrap_grammar.txt");

/// Replaces each `{key}` with its value in one left-to-right pass, so
/// braces inside substituted values are never expanded. Unknown keys are
/// left as they are.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let key = close.map(|c| &after[..c]);
        match key.and_then(|k| values.iter().find(|(name, _)| *name == k)) {
            Some((k, v)) => {
                out.push_str(v);
                rest = &after[k.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
