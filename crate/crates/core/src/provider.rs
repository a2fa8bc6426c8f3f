//! Count providers: a uniform contract for obtaining document-frequency
//! counts, with a persistent cache, rate limiting and query accounting
//! wrapped around any count source (offline index, fixture file, or a
//! remote HTTP endpoint).

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{Index, TokenizerConfig};

/// A normalized count query: a single term, or an unordered term pair
/// (stored with the terms in lexicographic order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Term(String),
    Pair(String, String),
}

impl Query {
    pub fn term(t: &str) -> Result<Query> {
        let cfg = TokenizerConfig::default();
        Ok(Query::Term(cfg.normalize_term(t)?))
    }

    pub fn pair(x: &str, y: &str) -> Result<Query> {
        let cfg = TokenizerConfig::default();
        let a = cfg.normalize_term(x)?;
        let b = cfg.normalize_term(y)?;
        if a == b {
            return Ok(Query::Term(a));
        }
        Ok(if a < b {
            Query::Pair(a, b)
        } else {
            Query::Pair(b, a)
        })
    }

    /// Query text sent to a remote engine: pair terms are space-joined
    /// (AND semantics).
    pub fn as_query_string(&self) -> String {
        match self {
            Query::Term(t) => t.clone(),
            Query::Pair(a, b) => format!("{a} {b}"),
        }
    }
}

/// One document-frequency observation, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub query: Query,
    pub count: u64,
    pub n_snapshot: f64,
    pub provider_id: String,
    pub fetched_at: u64,
}

/// Running totals since provider creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAccounting {
    pub remote_fetches: u64,
    pub cache_hits: u64,
    pub quota_remaining: u64,
}

/// Something that can answer a count query. Implementations do not cache;
/// caching, rate limiting and quota live in [`Provider`].
pub trait CountSource: Send + Sync {
    fn id(&self) -> &str;
    fn fetch(&self, query: &Query) -> Result<u64>;
}

/// Clock abstraction so the rate limiter is testable with fake time.
pub trait Clock: Send + Sync {
    /// Monotonic seconds.
    fn now(&self) -> f64;
    fn sleep(&self, seconds: f64);
    /// Wall-clock unix seconds, for record provenance.
    fn unix_now(&self) -> u64;
}

pub struct SystemClock {
    origin: std::time::Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: std::time::Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
    fn sleep(&self, seconds: f64) {
        std::thread::sleep(Duration::from_secs_f64(seconds.max(0.0)));
    }
    fn unix_now(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// Minimum-interval limiter: admits at most `rate` requests per second.
pub struct RateLimiter {
    min_interval: f64,
    last: Mutex<Option<f64>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        let min_interval = if requests_per_second.is_finite() && requests_per_second > 0.0 {
            1.0 / requests_per_second
        } else {
            0.0
        };
        Self {
            min_interval,
            last: Mutex::new(None),
            clock,
        }
    }

    /// Blocks until a request may proceed.
    pub fn acquire(&self) {
        if self.min_interval == 0.0 {
            return;
        }
        let mut last = self.last.lock().unwrap();
        let now = self.clock.now();
        let ready_at = match *last {
            Some(t) => t + self.min_interval,
            None => now,
        };
        if ready_at > now {
            self.clock.sleep(ready_at - now);
        }
        *last = Some(self.clock.now().max(ready_at));
    }
}

/// Provider configuration. Defaults mirror a public engine's limits:
/// 1 request/second and a 500-query daily quota.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub n: f64,
    pub requests_per_second: f64,
    pub daily_quota: u64,
    pub cache_path: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn new(n: f64) -> Self {
        Self {
            n,
            requests_per_second: 1.0,
            daily_quota: 500,
            cache_path: None,
        }
    }

    /// Unlimited rate and quota, for local sources.
    pub fn local(n: f64) -> Self {
        Self {
            n,
            requests_per_second: f64::INFINITY,
            daily_quota: u64::MAX,
            cache_path: None,
        }
    }

    /// Applies `NGD_CACHE_PATH` and `NGD_DAILY_QUOTA` if set.
    pub fn apply_env(mut self) -> Self {
        if let Ok(p) = std::env::var("NGD_CACHE_PATH") {
            if !p.is_empty() {
                self.cache_path = Some(PathBuf::from(p));
            }
        }
        if let Ok(q) = std::env::var("NGD_DAILY_QUOTA") {
            if let Ok(q) = q.parse() {
                self.daily_quota = q;
            }
        }
        self
    }
}

struct ProviderState {
    cache: HashMap<Query, CountRecord>,
    remote_fetches: u64,
    cache_hits: u64,
    quota_used: u64,
    cache_file: Option<fs::File>,
}

/// Cache-first count provider. All lookups go through one lock, so
/// concurrent misses for the same key coalesce into a single source fetch.
pub struct Provider {
    source: Box<dyn CountSource>,
    config: ProviderConfig,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    state: Mutex<ProviderState>,
}

impl Provider {
    pub fn new(source: Box<dyn CountSource>, config: ProviderConfig) -> Result<Provider> {
        Self::with_clock(source, config, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(
        source: Box<dyn CountSource>,
        config: ProviderConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Provider> {
        let mut cache = HashMap::new();
        let mut cache_file = None;
        if let Some(path) = &config.cache_path {
            if path.exists() {
                load_cache(path, &mut cache)?;
            }
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            cache_file = Some(fs::OpenOptions::new().create(true).append(true).open(path)?);
        }
        Ok(Provider {
            limiter: RateLimiter::new(config.requests_per_second, clock.clone()),
            source,
            config,
            clock,
            state: Mutex::new(ProviderState {
                cache,
                remote_fetches: 0,
                cache_hits: 0,
                quota_used: 0,
                cache_file,
            }),
        })
    }

    /// Index-backed provider with unlimited rate and quota. `n` defaults to
    /// the corpus normalizer over all indexed terms when not given.
    pub fn from_index(index: Index, n: Option<f64>) -> Result<Provider> {
        let n = match n {
            Some(n) => n,
            None => index.corpus_stats(None)?.n as f64,
        };
        Provider::new(Box::new(IndexSource::new(index)), ProviderConfig::local(n))
    }

    /// Fixture-backed provider (planted counts from a JSONL file).
    pub fn from_fixture(path: &Path, n: f64) -> Result<Provider> {
        Ok(Provider::new(
            Box::new(FixtureSource::load(path)?),
            ProviderConfig::local(n),
        )?)
    }

    pub fn n(&self) -> f64 {
        self.config.n
    }

    pub fn id(&self) -> String {
        self.source.id().to_string()
    }

    /// Cache-first lookup. Identical repeated queries cause exactly one
    /// source fetch; a miss with the quota exhausted is an error and
    /// produces no partial result.
    pub fn get_count(&self, query: &Query) -> Result<CountRecord> {
        let mut state = self.state.lock().unwrap();
        if let Some(rec) = state.cache.get(query).cloned() {
            state.cache_hits += 1;
            return Ok(rec);
        }
        if state.quota_used >= self.config.daily_quota {
            return Err(Error::QuotaExceeded);
        }
        self.limiter.acquire();
        let count = self.source.fetch(query)?;
        let record = CountRecord {
            query: query.clone(),
            count,
            n_snapshot: self.config.n,
            provider_id: self.source.id().to_string(),
            fetched_at: self.clock.unix_now(),
        };
        state.remote_fetches += 1;
        state.quota_used += 1;
        if let Some(file) = state.cache_file.as_mut() {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            file.write_all(&line)?;
        }
        state.cache.insert(query.clone(), record.clone());
        Ok(record)
    }

    pub fn accounting(&self) -> QueryAccounting {
        let state = self.state.lock().unwrap();
        QueryAccounting {
            remote_fetches: state.remote_fetches,
            cache_hits: state.cache_hits,
            quota_remaining: self.config.daily_quota.saturating_sub(state.quota_used),
        }
    }
}

/// Append-only record-per-line cache; the last record for a key wins.
fn load_cache(path: &Path, cache: &mut HashMap<Query, CountRecord>) -> Result<()> {
    let reader = BufReader::new(fs::File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CountRecord = serde_json::from_str(&line)?;
        cache.insert(record.query.clone(), record);
    }
    Ok(())
}

/// Adapter serving counts from an offline [`Index`].
pub struct IndexSource {
    index: Index,
}

impl IndexSource {
    pub fn new(index: Index) -> Self {
        Self { index }
    }

    pub fn index(&self) -> &Index {
        &self.index
    }
}

impl CountSource for IndexSource {
    fn id(&self) -> &str {
        "index"
    }

    fn fetch(&self, query: &Query) -> Result<u64> {
        match query {
            Query::Term(t) => self.index.doc_freq(t),
            Query::Pair(a, b) => self.index.pair_freq(a, b),
        }
    }
}

#[derive(Debug, Deserialize)]
struct FixtureRecord {
    #[serde(default)]
    term: Option<String>,
    #[serde(default)]
    pair: Option<(String, String)>,
    count: u64,
}

/// Planted counts loaded from a JSONL file. Each line is either
/// `{"term": "horse", "count": 46700000}` or
/// `{"pair": ["horse", "rider"], "count": 2630000}`.
/// Absent queries count 0.
pub struct FixtureSource {
    counts: HashMap<Query, u64>,
    id: String,
}

impl FixtureSource {
    pub fn load(path: &Path) -> Result<FixtureSource> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut counts = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedFixture(format!("line {}: {e}", lineno + 1)))?;
            let query = match (&rec.term, &rec.pair) {
                (Some(t), None) => Query::term(t)?,
                (None, Some((a, b))) => Query::pair(a, b)?,
                _ => {
                    return Err(Error::MalformedFixture(format!(
                        "line {}: exactly one of `term` or `pair` required",
                        lineno + 1
                    )))
                }
            };
            counts.insert(query, rec.count);
        }
        Ok(FixtureSource {
            counts,
            id: format!("fixture:{}", path.display()),
        })
    }

    pub fn from_counts(counts: HashMap<Query, u64>) -> FixtureSource {
        FixtureSource {
            counts,
            id: "fixture".to_string(),
        }
    }
}

impl CountSource for FixtureSource {
    fn id(&self) -> &str {
        &self.id
    }

    fn fetch(&self, query: &Query) -> Result<u64> {
        Ok(self.counts.get(query).copied().unwrap_or(0))
    }
}

/// Remote count client speaking a minimal HTTP+JSON protocol: GET with the
/// query as a parameter, response body a JSON object with an integer
/// `count` field.
///
/// The endpoint is either a template containing `{query}` or a base URL to
/// which `?q=<query>` is appended.
pub struct RemoteSource {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteSource {
    pub fn new(endpoint: &str) -> RemoteSource {
        RemoteSource {
            endpoint: endpoint.to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

impl CountSource for RemoteSource {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn fetch(&self, query: &Query) -> Result<u64> {
        let q = query.as_query_string();
        let response = if self.endpoint.contains("{query}") {
            let url = self.endpoint.replace("{query}", &percent_encode(&q));
            self.agent.get(&url).call()
        } else {
            self.agent.get(&self.endpoint).query("q", &q).call()
        };
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(Error::Remote(format!("status {code}: {body}")));
            }
            Err(e) => return Err(Error::Remote(e.to_string())),
        };
        let body = response
            .into_string()
            .map_err(|e| Error::Remote(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|_| Error::MalformedResponse(body.clone()))?;
        value
            .get("count")
            .and_then(|c| c.as_u64())
            .ok_or(Error::MalformedResponse(body))
    }
}
