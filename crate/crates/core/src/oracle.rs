//! Deterministic stand-in for a language model.
//!
//! The oracle reads the `TASK:` line of a prompt and answers from the
//! catalog's item metadata:
//!
//! * `resolve-impasse`: picks the listed candidate sharing the most distinct
//!   attribute values with the user profile (ties to the smallest id) and
//!   cites each shared value once on the user side and once on the item side.
//! * `encode-user`: the two most frequent values per attribute in the
//!   history, plus schema values named in the query.
//! * `rank-candidates`: candidates ordered by distinct values shared with
//!   the history.
//! * `bootstrap`: IF-THEN rules for the template's attribute and kind.
//!
//! Answers depend only on the prompt and the catalog.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::data::{Catalog, ItemMeta};
use crate::llm::{Completion, CompletionRequest, LanguageModel, ProviderError};
use crate::symbol::Atom;

#[derive(Clone, Debug)]
pub struct Oracle {
    catalog: Arc<Catalog>,
}

/// A `- <id> "<title>": a = v; b = w` line from a prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ListedItem {
    pub id: String,
    pub title: Option<String>,
    pub facts: Vec<(String, String)>,
}

fn task(prompt: &str) -> Option<&str> {
    prompt.lines().find_map(|l| l.trim().strip_prefix("TASK:")).map(str::trim)
}

fn field<'a>(prompt: &'a str, key: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.trim().strip_prefix(key)).map(str::trim)
}

/// Bullet lines of the section that starts with `header`.
pub fn section<'a>(prompt: &'a str, header: &str) -> Vec<&'a str> {
    let mut lines = prompt.lines().skip_while(|l| l.trim() != header);
    if lines.next().is_none() {
        return Vec::new();
    }
    lines
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| l.trim().strip_prefix("- "))
        .filter(|l| *l != "(none)")
        .collect()
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(s)
}

fn parse_facts(text: &str) -> Vec<(String, String)> {
    text.split("; ")
        .filter_map(|f| f.split_once(" = "))
        .map(|(a, v)| (a.trim().to_string(), unquote(v).to_string()))
        .collect()
}

/// Parses a candidate or history line. History lines have no id.
pub fn parse_listed(line: &str, has_id: bool) -> ListedItem {
    let (id, rest) = if has_id {
        let end = line.find([' ', ':']).unwrap_or(line.len());
        (line[..end].to_string(), line[end..].trim_start())
    } else {
        (String::new(), line)
    };
    let (title, facts) = match rest.strip_prefix('"') {
        Some(r) => match r.find("\":") {
            Some(end) => (Some(r[..end].to_string()), &r[end + 2..]),
            None => (Some(r.trim_end_matches('"').to_string()), ""),
        },
        None => (None, rest.strip_prefix(':').unwrap_or(rest)),
    };
    ListedItem { id, title, facts: parse_facts(facts) }
}

fn profile_facts(prompt: &str) -> Vec<(String, String)> {
    section(prompt, "USER PROFILE:")
        .into_iter()
        .filter_map(|l| l.strip_prefix("user."))
        .filter_map(|l| l.split_once(" = "))
        .map(|(a, v)| (a.trim().to_string(), unquote(v).to_string()))
        .collect()
}

fn distinct_values(facts: &[(String, String)]) -> BTreeSet<&str> {
    facts.iter().map(|(_, v)| v.as_str()).collect()
}

/// Number of distinct values of `item` that are in `profile`.
pub fn overlap(item: &[(String, String)], profile: &BTreeSet<&str>) -> usize {
    distinct_values(item).iter().filter(|v| profile.contains(*v)).count()
}

fn resolve_impasse(prompt: &str) -> String {
    let profile = profile_facts(prompt);
    let values = distinct_values(&profile);
    let candidates: Vec<ListedItem> = section(prompt, "CANDIDATES:").into_iter().map(|l| parse_listed(l, true)).collect();
    let Some(best) = candidates
        .iter()
        .map(|c| (overlap(&c.facts, &values), c))
        .max_by(|(a, x), (b, y)| a.cmp(b).then_with(|| y.id.cmp(&x.id)))
        .map(|(_, c)| c)
    else {
        return String::from("There is nothing to recommend.");
    };
    let name = best.title.clone().unwrap_or_else(|| best.id.clone());
    let mut lines: Vec<String> = Vec::new();
    let mut shared: Vec<&str> = Vec::new();
    for (attr, v) in &best.facts {
        if !values.contains(v.as_str()) {
            continue;
        }
        if let Some((ua, _)) = profile.iter().find(|(_, pv)| pv == v) {
            let user_line = format!("- user.{} = {}", ua, v);
            if !lines.contains(&user_line) {
                lines.push(user_line);
            }
        }
        lines.push(format!("- item.{} = {}", attr, v));
        if !shared.contains(&v.as_str()) {
            shared.push(v);
        }
    }
    let reasoning = if shared.is_empty() {
        if let Some((attr, v)) = best.facts.first() {
            lines.push(format!("- item.{} = {}", attr, v));
        }
        format!("No candidate matches the profile, so I take the first listed option, {}.", name)
    } else {
        format!("The user's profile points to {}; {} is the candidate that matches most of it.", shared.join(", "), name)
    };
    format!("{}\nRECOMMEND: {}\nBECAUSE:\n{}\n", reasoning, best.id, lines.join("\n"))
}

fn encode_user(prompt: &str, catalog: &Catalog) -> String {
    let history: Vec<ListedItem> = section(prompt, "HISTORY:").into_iter().map(|l| parse_listed(l, false)).collect();
    let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for h in &history {
        let mut seen = BTreeSet::new();
        for (a, v) in &h.facts {
            if seen.insert((a.as_str(), v.as_str())) {
                *counts.entry(a).or_default().entry(v).or_default() += 1;
            }
        }
    }
    let mut lines: Vec<String> = Vec::new();
    for (a, values) in counts {
        let mut ranked: Vec<(&str, usize)> = values.into_iter().collect();
        ranked.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
        for (v, _) in ranked.into_iter().take(2) {
            lines.push(format!("- user.likes-{} = {}", a, v));
        }
    }
    let query = field(prompt, "QUERY:").unwrap_or("");
    for word in query.split(|c: char| !(c.is_alphanumeric() || c == '-')).filter(|w| !w.is_empty()) {
        let lower = word.to_lowercase();
        let singular = lower.strip_suffix('s').unwrap_or(&lower).to_string();
        for w in [lower.clone(), singular] {
            if let Some(attr) = catalog.schema.attribute_of(&w) {
                let line = format!("- user.likes-{} = {}", attr, w);
                if !lines.contains(&line) {
                    lines.push(line);
                }
                break;
            }
        }
    }
    if lines.is_empty() {
        return String::from("The history is empty and the query names no known preference.");
    }
    format!("Preferences:\n{}\n", lines.join("\n"))
}

fn rank(prompt: &str) -> String {
    let history: Vec<ListedItem> = section(prompt, "HISTORY:").into_iter().map(|l| parse_listed(l, false)).collect();
    let values: BTreeSet<&str> = history.iter().flat_map(|h| h.facts.iter().map(|(_, v)| v.as_str())).collect();
    let mut candidates: Vec<(usize, ListedItem)> = section(prompt, "CANDIDATES:")
        .into_iter()
        .map(|l| parse_listed(l, true))
        .map(|c| (overlap(&c.facts, &values), c))
        .collect();
    candidates.sort_by(|(a, x), (b, y)| b.cmp(a).then_with(|| x.id.cmp(&y.id)));
    let k = prompt
        .lines()
        .find_map(|l| l.split_once("listing the ").and_then(|(_, r)| r.split_whitespace().next()?.parse::<usize>().ok()))
        .unwrap_or(10);
    let ids: Vec<&str> = candidates.iter().take(k).map(|(_, c)| c.id.as_str()).collect();
    format!("RANK: {}\n", ids.join(", "))
}

fn quotable(title: &str) -> bool {
    !title.contains(['"', '\n'])
}

/// Items sharing the most distinct values with `item`, ties by id.
fn most_similar<'c>(item: &ItemMeta, pool: impl Iterator<Item = &'c ItemMeta>) -> Option<&'c ItemMeta> {
    let own: BTreeSet<&Atom> = item.values().collect();
    pool.filter(|o| o.id != item.id && quotable(&o.title))
        .map(|o| (o.values().filter(|v| own.contains(v)).count(), o))
        .max_by(|(a, x), (b, y)| a.cmp(b).then_with(|| y.id.cmp(&x.id)))
        .map(|(_, o)| o)
}

fn bootstrap(prompt: &str, catalog: &Catalog) -> String {
    let Some(focus) = field(prompt, "FOCUS:") else { return String::from("Which attribute should the rules cover?") };
    let kind = field(prompt, "KIND:").unwrap_or("affinity");
    let with = field(prompt, "WITH:");
    let upper = focus.to_ascii_uppercase();
    let mut lines = Vec::new();
    for x in catalog.schema.values(focus) {
        let having: Vec<&ItemMeta> =
            catalog.items().filter(|i| i.attributes.get(&Atom::new(focus)).is_some_and(|vs| vs.contains(x))).collect();
        match kind {
            "affinity" => lines.push(format!("IF user LIKES {} THEN RECOMMEND-{} {}", x, upper, x)),
            "cross" => {
                let Some(with) = with else { continue };
                let mut counts: BTreeMap<&Atom, usize> = BTreeMap::new();
                for i in &having {
                    for y in i.attributes.get(&Atom::new(with)).into_iter().flatten() {
                        *counts.entry(y).or_default() += 1;
                    }
                }
                if let Some((y, _)) = counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0))) {
                    lines.push(format!("IF user LIKES {} AND item HAS {} {} THEN RECOMMEND-{} {}", x, with, y, upper, x));
                }
            }
            "titles" => {
                let Some(first) = having.iter().find(|i| quotable(&i.title)) else { continue };
                if let Some(other) = most_similar(first, having.iter().copied()) {
                    lines.push(format!("IF user LIKES-ITEM \"{}\" THEN RECOMMEND-ITEM \"{}\"", first.title, other.title));
                }
            }
            _ => {}
        }
    }
    if lines.is_empty() {
        return String::from("I have no rules for this request.");
    }
    format!("# Rules for {} ({}):\n{}\n", focus, kind, lines.join("\n"))
}

impl Oracle {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Oracle { catalog }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// The answer to `prompt`.
    pub fn answer(&self, prompt: &str) -> String {
        match task(prompt) {
            Some("resolve-impasse") => resolve_impasse(prompt),
            Some("encode-user") => encode_user(prompt, &self.catalog),
            Some("rank-candidates") => rank(prompt),
            Some("bootstrap") => bootstrap(prompt, &self.catalog),
            _ => String::from("I do not understand the request."),
        }
    }
}

impl LanguageModel for Oracle {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        Ok(Completion { text: self.answer(request.prompt), cached: false })
    }
}
