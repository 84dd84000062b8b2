//! Conversion between the symbolic state and model text.
//!
//! [`symbol_to_text`] renders an impasse snapshot as a sectioned prompt:
//! ROLE, USER PROFILE, HISTORY, GOAL, CANDIDATES, IMPASSE and RESPONSE FORMAT.
//! Every profile and candidate line is copied from a working-memory element.
//!
//! [`text_to_chunk`] reads the closed response grammar:
//!
//! ```text
//! RECOMMEND: <candidate id or exact title>
//! BECAUSE:
//! - user.<attribute> = <value>
//! - item.<attribute> = <value>
//! ```
//!
//! Free text may precede the block; the last `RECOMMEND:` line wins. `user`
//! lines refer to the session user and `item` lines to the recommended
//! item. A response is accepted only when the item is one of the listed
//! candidates and every cited fact is in the snapshot.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::chunking::{check_grounding, ChunkError, ChunkRaw};
use crate::engine::{Impasse, ImpasseKind, OperatorKey};
use crate::schema::DomainSchema;
use crate::symbol::{Atom, Identifier, SymbolValue};
use crate::templates;
use crate::wm::WorkingMemory;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BridgeError {
    #[error("snapshot has no goal element")]
    EmptyContext,
    #[error("response has no RECOMMEND line")]
    NoRecommendLine,
    #[error("recommended item '{0}' is not a listed candidate")]
    UnknownItem(String),
    #[error("response cites no BECAUSE facts")]
    NoConditions,
    #[error("cannot read BECAUSE line '{0}'")]
    MalformedLine(String),
    #[error("attribute '{0}' is not in the schema")]
    UnknownAttribute(String),
    #[error("cited fact {0} is not in working memory")]
    UngroundedCondition(String),
}

impl BridgeError {
    /// The response breaks the response grammar, as opposed to citing facts
    /// absent from memory or the query lacking context.
    pub fn is_parse_failure(&self) -> bool {
        !matches!(self, BridgeError::UngroundedCondition(_) | BridgeError::EmptyContext)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLine {
    pub id: Identifier,
    pub title: Option<String>,
    pub facts: Vec<(Atom, SymbolValue)>,
}

/// A rendered prompt plus the context needed to check the answer.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredQuery {
    pub impasse_id: String,
    pub user: Identifier,
    pub profile: Vec<(Atom, SymbolValue)>,
    pub history: Vec<String>,
    pub goal: Vec<(Atom, SymbolValue)>,
    pub candidates: Vec<CandidateLine>,
    pub impasse: String,
    pub item_attributes: BTreeSet<Atom>,
    pub rendered: String,
}

impl StructuredQuery {
    pub fn candidate(&self, id: &Identifier) -> Option<&CandidateLine> {
        self.candidates.iter().find(|c| c.id == *id)
    }
}

fn atom(s: &str) -> Atom {
    Atom::new(s)
}

fn title_of(snapshot: &WorkingMemory, id: &Identifier) -> Option<String> {
    snapshot.value_of(id, &atom("title")).map(|v| match v {
        SymbolValue::Atom(a) => a.as_str().to_string(),
        other => other.to_string(),
    })
}

/// Candidate items offered at the impasse, in the order they entered
/// working memory. A tie offers the tied items; other impasses offer every
/// candidate.
fn impasse_candidates(snapshot: &WorkingMemory, state: &Identifier, kind: &ImpasseKind) -> Vec<Identifier> {
    let all: Vec<Identifier> = snapshot
        .with_id_attr(state, &atom("candidate-item"))
        .filter_map(|w| w.value.as_identifier().cloned())
        .collect();
    let offered: BTreeSet<Identifier> = match kind {
        ImpasseKind::Tie(ops) => ops.iter().filter_map(item_of).collect(),
        ImpasseKind::Conflict(pairs) => pairs.iter().flat_map(|(a, b)| [a, b]).filter_map(item_of).collect(),
        ImpasseKind::NoChange => BTreeSet::new(),
    };
    let listed: Vec<Identifier> = all.iter().filter(|i| offered.contains(*i)).cloned().collect();
    if listed.is_empty() {
        all
    } else {
        listed
    }
}

fn item_of(op: &OperatorKey) -> Option<Identifier> {
    if op.name_str() != Some("select-item") {
        return None;
    }
    op.param("item").and_then(|v| v.as_identifier().cloned())
}

fn describe_impasse(impasse: &Impasse, n: usize) -> String {
    match &impasse.kind {
        ImpasseKind::Tie(_) => format!(
            "tie: {} candidates are proposed with equal preference at decision cycle {} ({})",
            n, impasse.cycle, impasse.id
        ),
        ImpasseKind::NoChange => {
            format!("no-change: no candidate is proposed at decision cycle {} ({})", impasse.cycle, impasse.id)
        }
        ImpasseKind::Conflict(pairs) => {
            let mut s = format!("conflict: contradictory preferences at decision cycle {} ({}):", impasse.cycle, impasse.id);
            for (a, b) in pairs {
                let _ = write!(s, " {} > {};", a, b);
            }
            s
        }
    }
}

fn bullet_lines<'a>(lines: impl Iterator<Item = String> + 'a) -> String {
    let mut out = String::new();
    for l in lines {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("- ");
        out.push_str(&l);
    }
    if out.is_empty() {
        out.push_str("- (none)");
    }
    out
}

fn render_candidate(c: &CandidateLine) -> String {
    let mut s = String::from(c.id.as_str());
    if let Some(t) = &c.title {
        let _ = write!(s, " \"{}\"", t);
    }
    s.push(':');
    for (i, (a, v)) in c.facts.iter().enumerate() {
        let _ = write!(s, "{} {} = {}", if i == 0 { "" } else { ";" }, a, v);
    }
    s
}

/// Renders the prompt for an impasse. Rendering is a pure function of the
/// snapshot, the impasse and the schema.
pub fn symbol_to_text(snapshot: &WorkingMemory, impasse: &Impasse, schema: &DomainSchema) -> Result<StructuredQuery, BridgeError> {
    let state = &impasse.state;
    let goal_id = snapshot
        .with_id_attr(state, &atom("goal"))
        .find_map(|w| w.value.as_identifier().cloned())
        .ok_or(BridgeError::EmptyContext)?;
    let goal: Vec<(Atom, SymbolValue)> = snapshot.with_id(&goal_id).map(|w| (w.attr.clone(), w.value.clone())).collect();
    if goal.is_empty() {
        return Err(BridgeError::EmptyContext);
    }
    let user = snapshot
        .with_id_attr(state, &atom("user"))
        .find_map(|w| w.value.as_identifier().cloned())
        .unwrap_or_else(|| Identifier::new("u1"));
    let profile: Vec<(Atom, SymbolValue)> = snapshot
        .with_id(&user)
        .filter(|w| w.value.as_identifier().is_none())
        .map(|w| (w.attr.clone(), w.value.clone()))
        .collect();
    let mut history = Vec::new();
    for h in snapshot.with_id_attr(&user, &atom("history")).filter_map(|w| w.value.as_identifier()) {
        for x in snapshot.with_id_attr(h, &atom("item")).filter_map(|w| w.value.as_identifier()) {
            if let Some(t) = title_of(snapshot, x) {
                history.push(t);
            }
        }
    }
    let item_attributes: BTreeSet<Atom> = schema.attribute_names().into_iter().cloned().collect();
    let candidates: Vec<CandidateLine> = impasse_candidates(snapshot, state, &impasse.kind)
        .into_iter()
        .map(|id| CandidateLine {
            title: title_of(snapshot, &id),
            facts: snapshot
                .with_id(&id)
                .filter(|w| item_attributes.contains(&w.attr))
                .map(|w| (w.attr.clone(), w.value.clone()))
                .collect(),
            id,
        })
        .collect();
    let impasse_text = describe_impasse(impasse, candidates.len());

    let profile_text = bullet_lines(profile.iter().map(|(a, v)| format!("user.{} = {}", a, v)));
    let history_text = bullet_lines(history.iter().map(|t| format!("\"{}\"", t)));
    let goal_text = bullet_lines(goal.iter().map(|(a, v)| format!("goal.{} = {}", a, v)));
    let candidate_text = bullet_lines(candidates.iter().map(render_candidate));
    let rendered = templates::fill(
        templates::IMPASSE,
        &[
            ("profile", &profile_text),
            ("history", &history_text),
            ("goal", &goal_text),
            ("candidates", &candidate_text),
            ("impasse", &impasse_text),
            ("response_format", templates::RESPONSE_FORMAT.trim_end()),
        ],
    );
    Ok(StructuredQuery {
        impasse_id: impasse.id.clone(),
        user,
        profile,
        history,
        goal,
        candidates,
        impasse: impasse_text,
        item_attributes,
        rendered,
    })
}

/// The prompt for a second attempt after `failure`.
pub fn reprompt(query: &StructuredQuery, failure: &BridgeError) -> String {
    format!(
        "{}\nYOUR PREVIOUS ANSWER WAS REJECTED: {}\nAnswer again and end with the block described under RESPONSE FORMAT.\n",
        query.rendered.trim_end(),
        failure
    )
}

fn strip_decoration(line: &str) -> &str {
    line.trim().trim_start_matches(['*', '#', '>', '`']).trim_start().trim_end_matches(['*', '`']).trim_end()
}

fn keyword_rest<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let l = strip_decoration(line);
    let head = l.get(..keyword.len())?;
    if !head.eq_ignore_ascii_case(keyword) {
        return None;
    }
    l[keyword.len()..].trim_start().strip_prefix(':').map(str::trim)
}

fn unquote(s: &str) -> &str {
    let s = s.trim().trim_end_matches(['.', ',', ';']).trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{2018}', '\u{2019}'), ('\u{201C}', '\u{201D}'), ('<', '>')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

fn value_text(v: &SymbolValue) -> String {
    match v {
        SymbolValue::Atom(a) => a.as_str().to_string(),
        SymbolValue::Identifier(i) => i.as_str().to_string(),
        other => other.to_string(),
    }
}

/// The working-memory value of `(id ^attr text)` if one exists; otherwise
/// the text as an atom, which then fails the grounding check.
fn resolve_value(snapshot: &WorkingMemory, id: &Identifier, attr: &Atom, text: &str) -> SymbolValue {
    let number = text.parse::<f64>().ok();
    snapshot
        .with_id_attr(id, attr)
        .find(|w| match &w.value {
            SymbolValue::Number(n) => number.is_some_and(|x| x.to_bits() == n.to_bits()),
            v => value_text(v) == text,
        })
        .map(|w| w.value.clone())
        .unwrap_or_else(|| SymbolValue::atom(text))
}

fn parse_fact(line: &str) -> Option<(String, String, String)> {
    let body = line.trim().strip_prefix(['-', '*', '\u{2022}'])?.trim();
    let (lhs, rhs) = body.split_once('=')?;
    let (subject, attr) = lhs.trim().split_once('.')?;
    let (subject, attr, value) = (subject.trim(), attr.trim(), unquote(rhs));
    if subject.is_empty() || attr.is_empty() || value.is_empty() || attr.contains(char::is_whitespace) {
        return None;
    }
    Some((subject.to_ascii_lowercase(), attr.to_string(), value.to_string()))
}

/// Parses a response into a grounded chunk. Never panics; any input that is
/// not an acceptable answer yields an error.
pub fn text_to_chunk(response: &str, query: &StructuredQuery, snapshot: &WorkingMemory) -> Result<ChunkRaw, BridgeError> {
    let lines: Vec<&str> = response.lines().collect();
    let (at, item_ref) = lines
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, l)| keyword_rest(l, "RECOMMEND").map(|r| (i, r)))
        .ok_or(BridgeError::NoRecommendLine)?;
    let item_ref = unquote(item_ref);
    let item = query
        .candidates
        .iter()
        .find(|c| c.id.as_str() == item_ref)
        .or_else(|| query.candidates.iter().find(|c| c.title.as_deref() == Some(item_ref)))
        .map(|c| c.id.clone())
        .ok_or_else(|| BridgeError::UnknownItem(item_ref.to_string()))?;

    let mut rest = lines[at + 1..].iter().skip_while(|l| l.trim().is_empty());
    let mut fact_lines: Vec<&str> = Vec::new();
    match rest.next() {
        Some(l) => match keyword_rest(l, "BECAUSE") {
            Some(inline) => {
                if !inline.is_empty() {
                    fact_lines.push(inline);
                }
            }
            None => return Err(BridgeError::NoConditions),
        },
        None => return Err(BridgeError::NoConditions),
    }
    for l in rest {
        let t = l.trim();
        if t.is_empty() {
            if fact_lines.is_empty() {
                continue;
            }
            break;
        }
        if !t.starts_with(['-', '*', '\u{2022}']) {
            break;
        }
        fact_lines.push(t);
    }
    if fact_lines.is_empty() {
        return Err(BridgeError::NoConditions);
    }

    let mut conditions: Vec<(Identifier, Atom, SymbolValue)> = Vec::new();
    for l in &fact_lines {
        let l = if l.starts_with(['-', '*', '\u{2022}']) { String::from(*l) } else { format!("- {}", l) };
        let (subject, attr, value) = parse_fact(&l).ok_or_else(|| BridgeError::MalformedLine(l.trim().to_string()))?;
        let attr = Atom::new(&attr);
        let id = match subject.as_str() {
            "user" => query.user.clone(),
            "item" => {
                if !query.item_attributes.contains(&attr) {
                    return Err(BridgeError::UnknownAttribute(attr.as_str().to_string()));
                }
                item.clone()
            }
            _ => return Err(BridgeError::MalformedLine(l.trim().to_string())),
        };
        let value = resolve_value(snapshot, &id, &attr, &value);
        let triple = (id, attr, value);
        if !conditions.contains(&triple) {
            conditions.push(triple);
        }
    }

    let before: Vec<&str> = lines[..at].iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect();
    let justification = if before.is_empty() {
        fact_lines.iter().map(|l| l.trim_start_matches(['-', '*', ' '])).collect::<Vec<_>>().join("; ")
    } else {
        before.join(" ")
    };
    let raw = ChunkRaw {
        conditions,
        action: OperatorKey::new("select-item", alloc::vec![(Atom::new("item"), SymbolValue::Identifier(item))]),
        impasse_id: query.impasse_id.clone(),
        justification,
    };
    check_grounding(&raw, snapshot).map_err(|e| match e {
        ChunkError::UngroundedCondition(t) => BridgeError::UngroundedCondition(t),
        _ => BridgeError::NoConditions,
    })?;
    Ok(raw)
}

/// A model answer and what the bridge made of it.
#[derive(Clone, Debug, PartialEq)]
pub struct LlmResponse {
    pub raw: String,
    pub parsed: Result<ChunkRaw, BridgeError>,
}

impl LlmResponse {
    pub fn parse(raw: String, query: &StructuredQuery, snapshot: &WorkingMemory) -> Self {
        let parsed = text_to_chunk(&raw, query, snapshot);
        LlmResponse { raw, parsed }
    }
}
