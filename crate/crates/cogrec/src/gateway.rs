//! The model gateway: one `LanguageModel` in front of the oracle, a live
//! chat-completion endpoint or a recorded cache, with call accounting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use cogrec_core::data::Catalog;
use cogrec_core::llm::{Completion, CompletionRequest, LanguageModel, LedgerSlice, ProviderError, Purpose};
use cogrec_core::oracle::Oracle;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ProviderConfig, ProviderMode};

/// Per-session call counters; the cumulative view is their sum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CallLedger {
    sessions: BTreeMap<String, LedgerSlice>,
}

impl CallLedger {
    pub fn record(&mut self, session: &str, purpose: Purpose, cached: bool) {
        self.sessions.entry(session.to_string()).or_default().record(purpose, cached);
    }

    pub fn session(&self, session: &str) -> LedgerSlice {
        self.sessions.get(session).cloned().unwrap_or_default()
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&String, &LedgerSlice)> {
        self.sessions.iter()
    }

    pub fn cumulative(&self) -> LedgerSlice {
        let mut total = LedgerSlice::default();
        for slice in self.sessions.values() {
            total.merge(slice);
        }
        total
    }

    /// `session,purpose,calls,cache_hits`, one row per session and purpose
    /// with any activity.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["session", "purpose", "calls", "cache_hits"]).expect("in-memory write");
        for (session, slice) in &self.sessions {
            for p in Purpose::ALL {
                let (calls, hits) = (slice.calls(p), slice.hits(p));
                if calls + hits > 0 {
                    w.write_record([session.as_str(), p.as_str(), &calls.to_string(), &hits.to_string()])
                        .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

/// Responses stored as `<dir>/<sha256>.txt`, keyed by model and prompt.
#[derive(Clone, Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ResponseCache { dir: dir.to_path_buf() })
    }

    pub fn key(model: &str, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        std::fs::read_to_string(self.path(key)).ok()
    }

    /// Writes through a temporary file so readers never see partial text.
    pub fn put(&self, key: &str, text: &str) -> std::io::Result<()> {
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, self.path(key))
    }
}

/// Counting semaphore bounding concurrent provider calls.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Slots { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock poisoned");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completion client for any OpenAI-style endpoint.
pub struct LiveClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

enum CallFailure {
    Transient(String),
    Fatal(String),
    Timeout,
}

impl LiveClient {
    pub fn new(config: &ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        LiveClient {
            agent,
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            api_key: std::env::var(&config.api_key_env).ok(),
            temperature: config.temperature,
        }
    }

    fn call(&self, prompt: &str) -> Result<String, CallFailure> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        });
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(CallFailure::Timeout),
            Err(e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound)) => {
                return Err(CallFailure::Transient(e.to_string()))
            }
            Err(e) => return Err(CallFailure::Fatal(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(CallFailure::Transient(format!("HTTP {status}")));
        }
        if status != 200 {
            return Err(CallFailure::Fatal(format!("HTTP {status}")));
        }
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| CallFailure::Transient(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CallFailure::Fatal("response has no choices[0].message.content".into()))
    }
}

enum Backend {
    Oracle(Oracle),
    Live(LiveClient),
    Replay,
}

pub struct Gateway {
    backend: Backend,
    mode: ProviderMode,
    model: String,
    max_retries: u32,
    backoff: Duration,
    cache: Option<ResponseCache>,
    ledger: Mutex<CallLedger>,
    slots: Slots,
}

impl Gateway {
    pub fn new(config: &ProviderConfig, catalog: Arc<Catalog>) -> std::io::Result<Self> {
        let backend = match config.mode {
            ProviderMode::Oracle => Backend::Oracle(Oracle::new(catalog)),
            ProviderMode::Live => Backend::Live(LiveClient::new(config)),
            ProviderMode::Replay => Backend::Replay,
        };
        let cache = config.cache_dir.as_deref().map(ResponseCache::new).transpose()?;
        let model = match config.mode {
            ProviderMode::Oracle => String::from("oracle"),
            _ => config.model.clone(),
        };
        Ok(Gateway {
            backend,
            mode: config.mode,
            model,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(250),
            cache,
            ledger: Mutex::new(CallLedger::default()),
            slots: Slots::new(config.max_in_flight),
        })
    }

    /// The oracle with no cache.
    pub fn oracle(catalog: Arc<Catalog>) -> Self {
        Gateway::new(&ProviderConfig::default(), catalog).expect("no cache directory to create")
    }

    pub fn mode(&self) -> ProviderMode {
        self.mode
    }

    pub fn ledger(&self) -> CallLedger {
        self.ledger.lock().expect("ledger lock poisoned").clone()
    }

    fn record(&self, session: &str, purpose: Purpose, cached: bool) {
        self.ledger.lock().expect("ledger lock poisoned").record(session, purpose, cached);
    }

    fn fetch(&self, prompt: &str) -> Result<String, ProviderError> {
        match &self.backend {
            Backend::Oracle(o) => Ok(o.answer(prompt)),
            Backend::Replay => Err(ProviderError::Unavailable("no recorded response for this prompt".into())),
            Backend::Live(client) => {
                let _slot = self.slots.acquire();
                let mut attempt = 0;
                loop {
                    match client.call(prompt) {
                        Ok(text) => return Ok(text),
                        Err(CallFailure::Fatal(m)) => return Err(ProviderError::Unavailable(m)),
                        Err(failure) if attempt >= self.max_retries => {
                            return Err(match failure {
                                CallFailure::Timeout => ProviderError::Timeout,
                                CallFailure::Transient(m) | CallFailure::Fatal(m) => ProviderError::Unavailable(m),
                            })
                        }
                        Err(failure) => {
                            if let CallFailure::Transient(m) = &failure {
                                log::warn!("provider call failed ({m}); retrying");
                            }
                            std::thread::sleep(self.backoff * 2u32.pow(attempt));
                            attempt += 1;
                        }
                    }
                }
            }
        }
    }
}

impl LanguageModel for Gateway {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        let key = ResponseCache::key(&self.model, request.prompt);
        if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            self.record(request.session, request.purpose, true);
            return Ok(Completion { text, cached: true });
        }
        let text = self.fetch(request.prompt)?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&key, &text) {
                log::warn!("cannot write response cache: {e}");
            }
        }
        self.record(request.session, request.purpose, false);
        Ok(Completion { text, cached: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cogrec_core::data::ItemMeta;

    fn catalog() -> Arc<Catalog> {
        Arc::new(Catalog::infer(1, vec![ItemMeta::new(1u64, "Alien").with("genre", "sci-fi")]).unwrap())
    }

    fn req<'a>(prompt: &'a str, purpose: Purpose) -> CompletionRequest<'a> {
        CompletionRequest { prompt, purpose, session: "s" }
    }

    #[test]
    fn cache_serves_repeats_without_new_calls() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ProviderConfig { cache_dir: Some(dir.path().to_path_buf()), ..ProviderConfig::default() };
        let g = Gateway::new(&cfg, catalog()).unwrap();
        let a = g.complete(&req("TASK: encode-user\nHISTORY:\n- \"Alien\": genre = sci-fi\n", Purpose::Encode)).unwrap();
        let b = g.complete(&req("TASK: encode-user\nHISTORY:\n- \"Alien\": genre = sci-fi\n", Purpose::Encode)).unwrap();
        assert_eq!(a.text, b.text);
        assert!(!a.cached && b.cached);
        let l = g.ledger().cumulative();
        assert_eq!((l.calls(Purpose::Encode), l.hits(Purpose::Encode)), (1, 1));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

        let replay_cfg = ProviderConfig { mode: ProviderMode::Replay, model: "oracle".into(), ..cfg };
        let replay = Gateway::new(&replay_cfg, catalog()).unwrap();
        let hit = replay.complete(&req("TASK: encode-user\nHISTORY:\n- \"Alien\": genre = sci-fi\n", Purpose::Encode)).unwrap();
        assert_eq!(hit, Completion { text: a.text, cached: true });
        assert!(replay.complete(&req("TASK: encode-user\nHISTORY:\n", Purpose::Encode)).is_err());
        assert_eq!(replay.ledger().cumulative().total_calls(), 0);
    }

    #[test]
    fn ledger_counts_by_purpose_and_exports_csv() {
        let g = Gateway::oracle(catalog());
        for i in 0..3 {
            g.complete(&CompletionRequest { prompt: &format!("p{i}"), purpose: Purpose::ImpasseResolve, session: "u1" }).unwrap();
        }
        g.complete(&CompletionRequest { prompt: "x", purpose: Purpose::Bootstrap, session: "bootstrap" }).unwrap();
        let ledger = g.ledger();
        assert_eq!(ledger.session("u1").calls(Purpose::ImpasseResolve), 3);
        assert_eq!(ledger.cumulative().total_calls(), 4);
        assert_eq!(
            ledger.to_csv(),
            "session,purpose,calls,cache_hits\nbootstrap,bootstrap,1,0\nu1,impasse-resolve,3,0\n"
        );
    }

    #[test]
    fn unreachable_endpoint_is_a_provider_error() {
        let cfg = ProviderConfig {
            mode: ProviderMode::Live,
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            max_retries: 1,
            timeout_secs: 2,
            ..ProviderConfig::default()
        };
        let mut g = Gateway::new(&cfg, catalog()).unwrap();
        g.backoff = Duration::from_millis(1);
        assert!(g.complete(&req("hello", Purpose::Direct)).is_err());
        assert_eq!(g.ledger().cumulative().total_calls(), 0);
    }
}
