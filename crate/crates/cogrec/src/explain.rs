//! Explanations as JSON lines and the saved form of one session.

use cogrec_core::agent::{Explanation, RecommendationResult};
use cogrec_core::data::{Catalog, UserId};
use cogrec_core::llm::Purpose;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub name: String,
    pub provenance: String,
    pub bindings: String,
}

/// One recommended item with the rules behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub user: String,
    pub rank: usize,
    pub item: String,
    pub rules: Vec<RuleRecord>,
    pub justification: Option<String>,
    pub fallback: bool,
}

impl ExplanationRecord {
    pub fn new(user: &UserId, e: &Explanation) -> Self {
        ExplanationRecord {
            user: user.to_string(),
            rank: e.rank,
            item: e.item.to_string(),
            rules: e
                .steps
                .iter()
                .map(|s| RuleRecord { name: s.rule.clone(), provenance: s.provenance.to_string(), bindings: s.bindings.clone() })
                .collect(),
            justification: e.justification.clone(),
            fallback: e.fallback(),
        }
    }
}

/// One JSON object per line.
pub fn to_jsonl<'a>(records: impl IntoIterator<Item = &'a ExplanationRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub rank: usize,
    pub item: String,
    pub title: String,
    pub resolution: String,
}

/// A session as written by `run` and read by `trace`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: String,
    pub user: String,
    pub items: Vec<RecommendedItem>,
    pub impasses: usize,
    pub chunks_learned: usize,
    pub truncated: bool,
    pub calls: Vec<(String, u64)>,
    pub trace: Vec<String>,
    pub explanations: Vec<ExplanationRecord>,
}

impl SessionRecord {
    pub fn new(r: &RecommendationResult, catalog: &Catalog) -> Self {
        SessionRecord {
            session: r.session.clone(),
            user: r.user.to_string(),
            items: r
                .explanations
                .iter()
                .map(|e| RecommendedItem {
                    rank: e.rank,
                    item: e.item.to_string(),
                    title: catalog.get(&e.item).map(|m| m.title.clone()).unwrap_or_default(),
                    resolution: e.resolution.as_str().to_string(),
                })
                .collect(),
            impasses: r.impasses,
            chunks_learned: r.chunks_learned,
            truncated: r.truncated,
            calls: Purpose::ALL.into_iter().map(|p| (p.as_str().to_string(), r.ledger.calls(p))).collect(),
            trace: r.trace.clone(),
            explanations: r.explanations.iter().map(|e| ExplanationRecord::new(&r.user, e)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
