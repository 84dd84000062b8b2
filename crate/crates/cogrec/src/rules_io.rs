//! Rules files: productions in the text format, each learned rule preceded
//! by comments naming its impasse and the model's justification.
//!
//! ```text
//! # chunked from impasse u7-c3 at cycle 3
//! # justification: The profile points to cyberpunk.
//! sp { chunk-u7-c3 :chunk u7-c3 :cycle 3
//!     ...
//! }
//! ```

use std::path::{Path, PathBuf};

use cogrec_core::dsl::{parse_rules, serialize_production, DslError, ValidationError};
use cogrec_core::engine::{escape_line, unescape_line, ProceduralMemory};
use cogrec_core::Provenance;

const JUSTIFICATION: &str = "# justification: ";

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] DslError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Every rule in name order.
pub fn render(pm: &ProceduralMemory) -> String {
    let mut out = String::new();
    for (i, rule) in pm.rules().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let p = &rule.production;
        if let Provenance::Chunked(impasse) = &p.provenance {
            out.push_str(&format!("# chunked from impasse {} at cycle {}\n", impasse, p.creation_cycle));
        }
        if let Some(j) = &rule.justification {
            out.push_str(JUSTIFICATION);
            out.push_str(&escape_line(j));
            out.push('\n');
        }
        out.push_str(&serialize_production(p));
    }
    out
}

/// The justification comment in front of each `sp {` header, in order.
fn justifications(text: &str) -> Vec<Option<String>> {
    let mut out = Vec::new();
    let mut pending = None;
    for line in text.lines() {
        let t = line.trim_start();
        if let Some(j) = t.strip_prefix(JUSTIFICATION.trim_end()) {
            pending = Some(unescape_line(j.strip_prefix(' ').unwrap_or(j)));
        } else if t.starts_with("sp {") || t.starts_with("sp{") {
            out.push(pending.take());
        }
    }
    out
}

pub fn parse(text: &str) -> Result<ProceduralMemory, RulesError> {
    let rules = parse_rules(text)?;
    let notes = justifications(text);
    let aligned = notes.len() == rules.len();
    let mut pm = ProceduralMemory::new();
    for (i, p) in rules.into_iter().enumerate() {
        let j = if aligned { notes[i].clone() } else { None };
        pm.register_with_justification(p, j)?;
    }
    Ok(pm)
}

pub fn load(path: &Path) -> Result<ProceduralMemory, RulesError> {
    let text = std::fs::read_to_string(path).map_err(|source| RulesError::Io { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn save(pm: &ProceduralMemory, path: &Path) -> Result<(), RulesError> {
    std::fs::write(path, render(pm)).map_err(|source| RulesError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cogrec_core::agent::builtin_memory;
    use cogrec_core::dsl::parse_production;

    const CHUNK: &str = "sp { chunk-u7-c3 :chunk u7-c3 :cycle 3\n    (<s> ^candidate-item <i>)\n    (<i> ^genre cyberpunk)\n    -->\n    (<s> ^operator <o> = 0.8)\n    (<o> ^name select-item)\n    (<o> ^item <i>)\n}\n";

    #[test]
    fn justifications_survive_a_round_trip() {
        let mut pm = builtin_memory().unwrap();
        pm.register_with_justification(parse_production(CHUNK).unwrap(), Some("line one\nline \\two".into())).unwrap();
        let text = render(&pm);
        assert!(text.contains("# chunked from impasse u7-c3 at cycle 3\n# justification: line one\\nline \\\\two\nsp { chunk-u7-c3"));
        let back = parse(&text).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back.get("chunk-u7-c3").unwrap().justification.as_deref(), Some("line one\nline \\two"));
        assert_eq!(back.get("emit-recommendation").unwrap().justification, None);
        assert_eq!(render(&back), text);
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(parse("sp { broken"), Err(RulesError::Parse(_))));
        let twice = format!("{CHUNK}\n{CHUNK}");
        assert!(matches!(parse(&twice), Err(RulesError::Invalid(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(&dir.path().join("missing.soar")), Err(RulesError::Io { .. })));
    }
}
