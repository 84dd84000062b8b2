//! Serialized experiment results: `report.json`, `metrics.csv` and one
//! `lcf-<variant>.csv` per variant.

use std::path::Path;

use cogrec_core::llm::{LedgerSlice, Purpose};
use cogrec_core::metrics::RankingMetrics;
use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentOutput, VariantReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hr10: f64,
    pub hr20: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
    pub users: usize,
}

impl From<RankingMetrics> for Metrics {
    fn from(m: RankingMetrics) -> Self {
        Metrics { hr10: m.hr10, hr20: m.hr20, ndcg10: m.ndcg10, ndcg20: m.ndcg20, users: m.users }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calls {
    pub purpose: String,
    pub calls: u64,
    pub cache_hits: u64,
}

fn calls(l: &LedgerSlice) -> Vec<Calls> {
    Purpose::ALL
        .into_iter()
        .map(|p| Calls { purpose: p.as_str().to_string(), calls: l.calls(p), cache_hits: l.hits(p) })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub overall: Metrics,
    pub head: Metrics,
    pub tail: Metrics,
    /// Mean impasse and reprompt calls per session, by bucket of sessions.
    pub lcf: Vec<(usize, f64)>,
    pub calls: Vec<Calls>,
    pub sessions: usize,
    pub failed: usize,
    pub impasses: usize,
    pub chunks_learned: usize,
    pub fallback_items: usize,
    pub truncated: usize,
    pub rules_at_end: usize,
}

impl From<&VariantReport> for VariantSummary {
    fn from(r: &VariantReport) -> Self {
        VariantSummary {
            variant: r.variant.name().to_string(),
            overall: r.overall.into(),
            head: r.head.into(),
            tail: r.tail.into(),
            lcf: r.lcf.iter().map(|p| (p.bucket, p.calls_per_interaction)).collect(),
            calls: calls(&r.ledger),
            sessions: r.sessions,
            failed: r.failed,
            impasses: r.impasses,
            chunks_learned: r.chunks_learned,
            fallback_items: r.fallback_items,
            truncated: r.truncated,
            rules_at_end: r.rules_at_end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub provider_mode: String,
    pub dataset_id: String,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub sparsity: f64,
    pub eval_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub rules: usize,
    pub generated: usize,
    pub added: usize,
    pub duplicates: usize,
    pub rejected_lines: usize,
    pub calls: Vec<Calls>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: RunMeta,
    pub bootstrap: Option<BootstrapSummary>,
    pub variants: Vec<VariantSummary>,
}

impl Report {
    pub fn new(meta: RunMeta, out: &ExperimentOutput) -> Self {
        Report {
            meta,
            bootstrap: out.bootstrap.as_ref().map(|b| BootstrapSummary {
                rules: b.memory.len(),
                generated: b.report.generated,
                added: b.report.added,
                duplicates: b.report.duplicates,
                rejected_lines: b.report.rejected_lines,
                calls: calls(&b.ledger),
            }),
            variants: out.variants.iter().map(VariantSummary::from).collect(),
        }
    }

    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// `variant,group,hr10,hr20,ndcg10,ndcg20,users`
    pub fn metrics_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "group", "hr10", "hr20", "ndcg10", "ndcg20", "users"]).expect("in-memory write");
        for v in &self.variants {
            for (group, m) in [("overall", &v.overall), ("head", &v.head), ("tail", &v.tail)] {
                w.write_record([
                    v.variant.clone(),
                    group.to_string(),
                    format!("{:.6}", m.hr10),
                    format!("{:.6}", m.hr20),
                    format!("{:.6}", m.ndcg10),
                    format!("{:.6}", m.ndcg20),
                    m.users.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        into_string(w)
    }

    /// Writes the report files into `dir`, with one `lcf-<variant>.csv` per
    /// variant.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        for v in &self.variants {
            std::fs::write(dir.join(format!("lcf-{}.csv", slug(&v.variant))), lcf_csv(v))?;
        }
        Ok(())
    }

    /// A fixed-width table of overall, head and tail N@10 and HR@10.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<14} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8} {:>7}\n",
            "variant", "HR@10", "HR@20", "N@10", "N@20", "N@10 hd", "N@10 tl", "calls"
        );
        for v in &self.variants {
            let total: u64 = v.calls.iter().map(|c| c.calls).sum();
            s.push_str(&format!(
                "{:<14} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8.4} {:>8.4} {:>7}\n",
                v.variant, v.overall.hr10, v.overall.hr20, v.overall.ndcg10, v.overall.ndcg20, v.head.ndcg10, v.tail.ndcg10, total
            ));
        }
        s
    }
}

/// `bucket,calls_per_interaction`
pub fn lcf_csv(v: &VariantSummary) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bucket", "calls_per_interaction"]).expect("in-memory write");
    for (b, c) in &v.lcf {
        w.write_record([b.to_string(), format!("{c:.6}")]).expect("in-memory write");
    }
    into_string(w)
}

/// A variant name usable in file names.
pub fn slug(name: &str) -> String {
    name.replace('/', "-")
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Relative drop from `head` to `tail`; zero when the head score is zero.
pub fn relative_drop(head: f64, tail: f64) -> f64 {
    if head <= 0.0 {
        0.0
    } else {
        (head - tail) / head
    }
}
