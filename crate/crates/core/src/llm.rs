//! The language-model interface and the two knowledge roles built on it:
//! perception (turning a history into preference facts) and rule
//! generation for the initial procedural memory.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::data::{Catalog, ItemMeta};
use crate::dsl::{parse_if_then_rules, DslError, RejectedLine};
use crate::production::Production;
use crate::schema::DomainSchema;
use crate::symbol::Atom;
use crate::templates;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Purpose {
    Bootstrap,
    ImpasseResolve,
    Encode,
    Reprompt,
    /// Whole-list ranking without the rule engine.
    Direct,
}

impl Purpose {
    pub const ALL: [Purpose; 5] = [Purpose::Bootstrap, Purpose::ImpasseResolve, Purpose::Encode, Purpose::Reprompt, Purpose::Direct];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Bootstrap => "bootstrap",
            Purpose::ImpasseResolve => "impasse-resolve",
            Purpose::Encode => "encode",
            Purpose::Reprompt => "reprompt",
            Purpose::Direct => "direct",
        }
    }

    /// Calls that count toward the call-frequency curve.
    pub fn counts_for_lcf(self) -> bool {
        matches!(self, Purpose::ImpasseResolve | Purpose::Reprompt)
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub purpose: Purpose,
    pub session: &'a str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Served from the response cache; not a provider call.
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out")]
    Timeout,
}

/// A text-completion provider. Implementations are shared between
/// sessions, so they synchronize internally.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError>;
}

/// Call and cache-hit counts by purpose.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LedgerSlice {
    pub calls: BTreeMap<Purpose, u64>,
    pub cache_hits: BTreeMap<Purpose, u64>,
}

impl LedgerSlice {
    pub fn record(&mut self, purpose: Purpose, cached: bool) {
        let map = if cached { &mut self.cache_hits } else { &mut self.calls };
        *map.entry(purpose).or_default() += 1;
    }

    pub fn calls(&self, purpose: Purpose) -> u64 {
        self.calls.get(&purpose).copied().unwrap_or(0)
    }

    pub fn hits(&self, purpose: Purpose) -> u64 {
        self.cache_hits.get(&purpose).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> u64 {
        self.calls.values().sum()
    }

    pub fn lcf_calls(&self) -> u64 {
        self.calls.iter().filter(|(p, _)| p.counts_for_lcf()).map(|(_, n)| n).sum()
    }

    pub fn merge(&mut self, other: &LedgerSlice) {
        for (p, n) in &other.calls {
            *self.calls.entry(*p).or_default() += n;
        }
        for (p, n) in &other.cache_hits {
            *self.cache_hits.entry(*p).or_default() += n;
        }
    }
}

/// Sends a request and records it in `ledger`.
pub fn complete_logged(
    model: &dyn LanguageModel,
    ledger: &mut LedgerSlice,
    prompt: &str,
    purpose: Purpose,
    session: &str,
) -> Result<String, ProviderError> {
    let c = model.complete(&CompletionRequest { prompt, purpose, session })?;
    ledger.record(purpose, c.cached);
    Ok(c.text)
}

fn describe_item(item: &ItemMeta) -> String {
    let mut s = format!("\"{}\"", item.title);
    let mut first = true;
    for (a, v) in item.pairs() {
        s.push_str(if first { ": " } else { "; " });
        first = false;
        s.push_str(&format!("{} = {}", a, crate::symbol::SymbolValue::Atom(v.clone())));
    }
    s
}

fn bullets(lines: impl Iterator<Item = String>) -> String {
    let v: Vec<String> = lines.map(|l| format!("- {}", l)).collect();
    if v.is_empty() {
        String::from("- (none)")
    } else {
        v.join("\n")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionResult {
    /// (attribute, value) preferences, e.g. (`genre`, `sci-fi`).
    pub intents: Vec<(Atom, Atom)>,
    pub embedding: Option<Vec<f64>>,
    /// The intents were derived locally because the model failed.
    pub fallback: bool,
}

/// The two most frequent values of each attribute in `history`, ties by
/// value. Used when the model cannot be asked or its answer is unusable.
pub fn frequency_intents(history: &[&ItemMeta]) -> Vec<(Atom, Atom)> {
    let mut counts: BTreeMap<&Atom, BTreeMap<&Atom, usize>> = BTreeMap::new();
    for item in history {
        for (a, v) in item.pairs() {
            *counts.entry(a).or_default().entry(v).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for (a, values) in counts {
        let mut ranked: Vec<(&Atom, usize)> = values.into_iter().collect();
        ranked.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
        for (v, _) in ranked.into_iter().take(2) {
            out.push((a.clone(), v.clone()));
        }
    }
    out
}

pub fn encode_prompt(history: &[&ItemMeta], query: &str, schema: &DomainSchema) -> String {
    let attrs: Vec<&str> = schema.attribute_names().into_iter().map(Atom::as_str).collect();
    templates::fill(
        templates::ENCODE,
        &[
            ("history", &bullets(history.iter().map(|i| describe_item(i)))),
            ("query", query),
            ("attributes", &attrs.join(", ")),
        ],
    )
}

/// Reads `- user.likes-<attr> = <value>` lines, keeping values the schema
/// knows. Returns `None` when no line is usable.
pub fn parse_intents(response: &str, schema: &DomainSchema) -> Option<Vec<(Atom, Atom)>> {
    let mut out: Vec<(Atom, Atom)> = Vec::new();
    for line in response.lines() {
        let Some(body) = line.trim().strip_prefix(['-', '*']) else { continue };
        let Some((lhs, rhs)) = body.split_once('=') else { continue };
        let Some(attr) = lhs.trim().strip_prefix("user.likes-") else { continue };
        let value = rhs.trim().trim_matches(['"', '\'', '.']);
        if schema.contains(attr, value) {
            let pair = (Atom::new(attr), Atom::new(value));
            if !out.contains(&pair) {
                out.push(pair);
            }
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// Perception: asks the model for the user's preferences, falling back to
/// history frequencies on any failure. Never fails the session.
pub fn encode_user(
    model: Option<&dyn LanguageModel>,
    ledger: &mut LedgerSlice,
    history: &[&ItemMeta],
    query: &str,
    schema: &DomainSchema,
    session: &str,
) -> PerceptionResult {
    if let Some(model) = model {
        let prompt = encode_prompt(history, query, schema);
        if let Ok(text) = complete_logged(model, ledger, &prompt, Purpose::Encode, session) {
            if let Some(intents) = parse_intents(&text, schema) {
                return PerceptionResult { intents, embedding: None, fallback: false };
            }
        }
    }
    PerceptionResult { intents: frequency_intents(history), embedding: None, fallback: true }
}

/// One bootstrap prompt template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BootstrapTemplate {
    pub attribute: String,
    pub kind: String,
    pub with: Option<String>,
    pub body: String,
}

impl BootstrapTemplate {
    /// Templates are applicable when the schema has their attributes.
    pub fn applies_to(&self, schema: &DomainSchema) -> bool {
        schema.has_attribute(&self.attribute) && self.with.as_deref().is_none_or(|w| schema.has_attribute(w))
    }

    pub fn render(&self, schema: &DomainSchema, domain: &str) -> String {
        let values: Vec<&str> = schema.values(&self.attribute).map(Atom::as_str).collect();
        templates::fill(
            &self.body,
            &[
                ("domain", domain),
                ("attribute", &self.attribute),
                ("values", &values.join(", ")),
                ("grammar", templates::BOOTSTRAP_GRAMMAR.trim_end()),
            ],
        )
    }
}

/// Splits a template file on `--- <attribute> <kind> [<with>]` headers.
/// Text before the first header is ignored.
pub fn parse_bootstrap_templates(text: &str) -> Vec<BootstrapTemplate> {
    let mut out: Vec<BootstrapTemplate> = Vec::new();
    for line in text.lines() {
        if let Some(header) = line.strip_prefix("--- ") {
            let mut words = header.split_whitespace();
            let attribute = words.next().unwrap_or_default().to_string();
            let kind = words.next().unwrap_or_default().to_string();
            let with = words.next().map(str::to_string);
            out.push(BootstrapTemplate { attribute, kind, with, body: String::new() });
        } else if let Some(t) = out.last_mut() {
            t.body.push_str(line);
            t.body.push('\n');
        }
    }
    out
}

pub fn default_bootstrap_templates() -> Vec<BootstrapTemplate> {
    parse_bootstrap_templates(templates::BOOTSTRAP)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BootstrapError {
    #[error("no bootstrap templates apply to this schema")]
    NoTemplates,
    #[error("bootstrap produced no rules")]
    BootstrapEmpty,
}

#[derive(Clone, Debug, Default)]
pub struct BootstrapOutcome {
    pub productions: Vec<Production>,
    pub rejected: Vec<RejectedLine>,
    /// Templates whose whole answer was rejected or that failed to reach
    /// the provider, with the reason.
    pub failed_templates: Vec<(String, String)>,
}

/// Asks the model for rules with each applicable template. Rules are named
/// `boot-<attribute>-<kind>-<n>`. Failures of single templates are
/// reported in the outcome; no rules at all is an error.
pub fn generate_bootstrap_rules(
    model: &dyn LanguageModel,
    ledger: &mut LedgerSlice,
    schema: &DomainSchema,
    templates: &[BootstrapTemplate],
    domain: &str,
) -> Result<BootstrapOutcome, BootstrapError> {
    let usable: Vec<&BootstrapTemplate> = templates.iter().filter(|t| t.applies_to(schema)).collect();
    if usable.is_empty() {
        return Err(BootstrapError::NoTemplates);
    }
    let mut out = BootstrapOutcome::default();
    for t in usable {
        let label = match &t.with {
            Some(w) => format!("{}-{}-{}", t.attribute, t.kind, w),
            None => format!("{}-{}", t.attribute, t.kind),
        };
        let prompt = t.render(schema, domain);
        let text = match complete_logged(model, ledger, &prompt, Purpose::Bootstrap, "bootstrap") {
            Ok(text) => text,
            Err(e) => {
                out.failed_templates.push((label, e.to_string()));
                continue;
            }
        };
        match parse_if_then_rules(&text, schema) {
            Ok(parsed) => {
                for (n, mut p) in parsed.productions.into_iter().enumerate() {
                    p.name = format!("boot-{}-{}", label, n + 1);
                    out.productions.push(p);
                }
                out.rejected.extend(parsed.rejected);
            }
            Err(DslError::AllLinesRejected { rejected }) => {
                out.failed_templates.push((label, format!("all {} lines rejected", rejected.len())));
                out.rejected.extend(rejected);
            }
            Err(e) => out.failed_templates.push((label, e.to_string())),
        }
    }
    if out.productions.is_empty() {
        return Err(BootstrapError::BootstrapEmpty);
    }
    Ok(out)
}

/// Catalog items for a list of history entries, skipping unknown ids.
pub fn history_items<'c>(catalog: &'c Catalog, items: impl Iterator<Item = &'c crate::data::ItemId>) -> Vec<&'c ItemMeta> {
    items.filter_map(|i| catalog.get(i)).collect()
}
