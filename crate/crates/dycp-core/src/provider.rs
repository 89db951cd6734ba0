//! Embedding providers: the bi-encoder boundary of the system.
//!
//! Everything upstream of scoring consumes embeddings through the
//! [`EmbeddingProvider`] trait. Two implementations ship here:
//!
//! * [`TestEmbedder`] — a fully deterministic, offline hashing embedder.
//!   Not a semantic model; it exists so tests and benchmarks get stable,
//!   platform-independent vectors with the useful property that texts
//!   sharing vocabulary score higher than texts that don't.
//! * [`HttpEmbedder`] — a blocking client for an external embedding
//!   service speaking a small JSON protocol (see [`HttpEmbedder`] docs),
//!   with bounded retries on transport failures.
//!
//! Providers must be shareable across threads; both implementations are
//! stateless apart from the `HttpEmbedder`'s learned dimension.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{DycpError, Result};

/// Source of embedding vectors for turns and queries.
///
/// Implementations must be `Send + Sync`: the service embeds from
/// request handlers and the evaluation harness may embed from worker
/// threads.
pub trait EmbeddingProvider: Send + Sync {
    /// Short human-readable identifier, e.g. `"test:64"`.
    fn name(&self) -> &str;

    /// The embedding dimension, once known. The test embedder knows it
    /// at construction; the HTTP embedder learns it from the first
    /// response and enforces consistency from then on.
    fn dim(&self) -> Option<usize>;

    /// Embeds every text, returning exactly `texts.len()` vectors of a
    /// uniform dimension with all components finite.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// 64-bit FNV-1a over a byte string.
///
/// Offset basis 0xcbf29ce484222325, prime 0x100000001b3; overflow wraps.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic offline embedder based on hashed bag-of-words.
///
/// Per text: split on whitespace; each token's FNV-1a 64-bit hash picks a
/// bucket (`hash mod dim`) and a sign (+1 when the top hash bit is clear,
/// −1 when set); signs accumulate per bucket; the result is L2-normalized
/// (an empty text stays the zero vector). Identical `(text, dim)` input
/// produces bit-identical output on every platform: accumulation uses
/// small integers (exact in f32) and normalization goes through f64.
#[derive(Debug, Clone)]
pub struct TestEmbedder {
    name: String,
    dim: usize,
}

impl TestEmbedder {
    /// `dim` must be ≥ 1.
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        TestEmbedder { name: format!("test:{dim}"), dim }
    }
}

impl EmbeddingProvider for TestEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| hash_embed(t, self.dim)).collect())
    }
}

/// One text through the hashing scheme of [`TestEmbedder`].
pub fn test_embed(texts: &[&str], dim: usize) -> Vec<Vec<f32>> {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    texts.iter().map(|t| hash_embed(t, dim)).collect()
}

fn hash_embed(text: &str, dim: usize) -> Vec<f32> {
    let mut acc = vec![0.0f32; dim];
    for token in text.split_whitespace() {
        let hash = fnv1a64(token.as_bytes());
        let bucket = (hash % dim as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0f32 } else { -1.0f32 };
        acc[bucket] += sign;
    }
    let norm = acc.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut acc {
            *c = (f64::from(*c) / norm) as f32;
        }
    }
    acc
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f32>>,
}

/// Blocking client for a remote embedding service.
///
/// Wire protocol (UTF-8 JSON): `POST` to the endpoint with
/// `{"model": string, "texts": [string, ...]}`; the service answers
/// `{"dim": integer, "embeddings": [[number, ...], ...]}` with one vector
/// per input text. If the configured URL has no path, `/embed` is used.
///
/// Transport failures (connection errors, timeouts, HTTP 5xx) are retried
/// with exponential backoff — 3 attempts starting at 200 ms by default —
/// and surface as [`DycpError::ProviderTransport`] once exhausted.
/// Malformed answers (count or dimension mismatch, non-finite values,
/// HTTP 4xx) are [`DycpError::ProviderContract`] and are not retried.
pub struct HttpEmbedder {
    name: String,
    endpoint: String,
    model: String,
    client: reqwest::blocking::Client,
    attempts: u32,
    initial_backoff: Duration,
    // 0 = not yet learned; embedding dims are always ≥ 1.
    seen_dim: AtomicUsize,
}

impl HttpEmbedder {
    /// `url` may omit a path (then `/embed` is assumed). `model` is sent
    /// verbatim in every request.
    pub fn new(url: &str, model: &str) -> Result<Self> {
        let mut parsed = reqwest::Url::parse(url)
            .map_err(|e| DycpError::Validation(format!("embedder url {url:?}: {e}")))?;
        if parsed.path().is_empty() || parsed.path() == "/" {
            parsed.set_path("/embed");
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| DycpError::ProviderTransport(format!("http client: {e}")))?;
        Ok(HttpEmbedder {
            name: format!("http:{parsed}"),
            endpoint: parsed.to_string(),
            model: model.to_string(),
            client,
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
            seen_dim: AtomicUsize::new(0),
        })
    }

    /// Overrides the retry schedule (tests use a near-zero backoff).
    pub fn with_retry(mut self, attempts: u32, initial_backoff: Duration) -> Self {
        assert!(attempts >= 1, "at least one attempt is required");
        self.attempts = attempts;
        self.initial_backoff = initial_backoff;
        self
    }

    fn post_once(&self, texts: &[&str]) -> std::result::Result<EmbedResponse, Retry> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { model: &self.model, texts })
            .send()
            .map_err(|e| Retry::Transport(format!("{e}")))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Retry::Transport(format!("server answered {status}")));
        }
        if !status.is_success() {
            return Err(Retry::Fatal(DycpError::ProviderContract(format!(
                "server answered {status}"
            ))));
        }
        response
            .json::<EmbedResponse>()
            .map_err(|e| Retry::Fatal(DycpError::ProviderContract(format!("bad response body: {e}"))))
    }

    fn validate(&self, texts: &[&str], resp: EmbedResponse) -> Result<Vec<Vec<f32>>> {
        if resp.embeddings.len() != texts.len() {
            return Err(DycpError::ProviderContract(format!(
                "sent {} texts, got {} embeddings",
                texts.len(),
                resp.embeddings.len()
            )));
        }
        if resp.dim == 0 {
            return Err(DycpError::ProviderContract("declared dim 0".into()));
        }
        for (row, vec) in resp.embeddings.iter().enumerate() {
            if vec.len() != resp.dim {
                return Err(DycpError::ProviderContract(format!(
                    "row {row} has {} components, declared dim {}",
                    vec.len(),
                    resp.dim
                )));
            }
            if let Some(col) = vec.iter().position(|c| !c.is_finite()) {
                return Err(DycpError::ProviderContract(format!(
                    "non-finite component at row {row}, column {col}"
                )));
            }
        }
        // First successful batch pins the dimension for the session.
        let prev = self.seen_dim.compare_exchange(0, resp.dim, Ordering::AcqRel, Ordering::Acquire);
        if let Err(seen) = prev {
            if seen != resp.dim {
                return Err(DycpError::ProviderContract(format!(
                    "dimension changed from {seen} to {}",
                    resp.dim
                )));
            }
        }
        Ok(resp.embeddings)
    }
}

enum Retry {
    /// Worth another attempt (network trouble, 5xx).
    Transport(String),
    /// Pointless to retry (the server is answering, but wrongly).
    Fatal(DycpError),
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> Option<usize> {
        match self.seen_dim.load(Ordering::Acquire) {
            0 => None,
            d => Some(d),
        }
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut backoff = self.initial_backoff;
        let mut last_transport = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            match self.post_once(texts) {
                Ok(resp) => return self.validate(texts, resp),
                Err(Retry::Fatal(e)) => return Err(e),
                Err(Retry::Transport(msg)) => last_transport = msg,
            }
        }
        Err(DycpError::ProviderTransport(format!(
            "{} after {} attempts: {last_transport}",
            self.endpoint, self.attempts
        )))
    }
}

/// Builds a provider from a compact spec string.
///
/// Two forms are accepted:
///
/// * `test:<dim>` — the deterministic hashing embedder, e.g. `test:64`.
/// * `http://…` or `https://…` — a remote embedder. A trailing
///   `:<model>` selects the model: the suffix after the last colon is
///   taken as a model name when it contains no `/` and is not purely
///   digits (purely-digit suffixes are ports). So
///   `http://host:9000/embed:contriever` embeds with model
///   `contriever`, while `http://host:9000` keeps its port and uses the
///   default model.
pub fn parse_embedder_spec(spec: &str) -> Result<Box<dyn EmbeddingProvider>> {
    if let Some(rest) = spec.strip_prefix("test:") {
        let dim: usize = rest
            .parse()
            .map_err(|_| DycpError::Validation(format!("bad test embedder dim {rest:?}")))?;
        if dim == 0 {
            return Err(DycpError::Validation("embedder dim must be ≥ 1".into()));
        }
        return Ok(Box::new(TestEmbedder::new(dim)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let (url, model) = split_model_suffix(spec);
        return Ok(Box::new(HttpEmbedder::new(url, model)?));
    }
    Err(DycpError::Validation(format!(
        "unrecognized embedder spec {spec:?} (expected test:<dim> or http(s)://…[:model])"
    )))
}

/// Default model name sent when the spec names none.
pub const DEFAULT_MODEL: &str = "default";

fn split_model_suffix(spec: &str) -> (&str, &str) {
    if let Some(pos) = spec.rfind(':') {
        let suffix = &spec[pos + 1..];
        let looks_like_port = !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit());
        if !suffix.is_empty() && !suffix.contains('/') && !looks_like_port {
            return (&spec[..pos], suffix);
        }
    }
    (spec, DEFAULT_MODEL)
}
