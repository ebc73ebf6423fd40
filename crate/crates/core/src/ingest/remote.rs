//! Client for an HTTP embedding endpoint.
//!
//! Request body: `{"model": ..., "input": [text, ...]}`.
//! Response body: `{"data": [{"index": i, "embedding": [f, ...]}, ...]}`.
//!
//! The API key is read from a named environment variable and sent as a
//! bearer token. It never appears in errors or logs.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::embeddings::EmbeddingStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub batch_size: usize,
    /// Extra attempts after the first, for 429, 5xx and transport failures.
    pub retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Batches sent concurrently.
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: None,
            batch_size: 64,
            retries: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            max_in_flight: 1,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f64>,
}

/// Fetches one embedding per `(id, text)` pair and returns them as a
/// normalized store in input order.
pub fn fetch_embeddings_remote(texts: &[(String, String)], cfg: &RemoteConfig) -> Result<EmbeddingStore> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let key = match &cfg.api_key_env {
        Some(var) => Some(
            std::env::var(var).map_err(|_| Error::InvalidInput(format!("environment variable {var} is not set")))?,
        ),
        None => None,
    };
    let agent = ureq::Agent::new_with_config(
        ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(cfg.timeout)).build(),
    );

    let batches: Vec<&[(String, String)]> = texts.chunks(cfg.batch_size).collect();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
    for wave in batches.chunks(cfg.max_in_flight.max(1)) {
        let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    let (agent, key) = (&agent, key.as_deref());
                    s.spawn(move || fetch_batch(agent, cfg, key, batch))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Remote("worker panicked".into()))))
                .collect()
        });
        for r in results {
            vectors.extend(r?);
        }
    }

    let mut store = EmbeddingStore::new(0);
    for ((id, text), v) in texts.iter().zip(vectors) {
        store.insert(id.clone(), v, Some(text.clone()))?;
    }
    Ok(store)
}

fn fetch_batch(
    agent: &ureq::Agent,
    cfg: &RemoteConfig,
    key: Option<&str>,
    batch: &[(String, String)],
) -> Result<Vec<Vec<f64>>> {
    let body = EmbedRequest { model: &cfg.model, input: batch.iter().map(|(_, t)| t.as_str()).collect() };
    let mut delay = cfg.initial_backoff;
    let mut last = String::new();
    for attempt in 0..=cfg.retries {
        if attempt > 0 {
            log::info!("retrying embedding batch in {delay:?} ({last})");
            std::thread::sleep(delay);
            delay = (delay * 2).min(cfg.max_backoff);
        }
        let mut req = agent.post(&cfg.endpoint);
        if let Some(k) = key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(e) => {
                last = format!("transport error: {e}");
                continue;
            }
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {
                let parsed: EmbedResponse =
                    resp.body_mut().read_json().map_err(|e| Error::Remote(format!("unreadable response body: {e}")))?;
                return order_by_index(parsed, batch.len());
            }
            401 | 403 => return Err(Error::Auth { status }),
            429 | 500..=599 => last = format!("HTTP {status}"),
            _ => return Err(Error::Remote(format!("unexpected HTTP status {status}"))),
        }
    }
    Err(Error::RetriesExhausted { attempts: cfg.retries + 1, last })
}

fn order_by_index(resp: EmbedResponse, expected: usize) -> Result<Vec<Vec<f64>>> {
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for item in resp.data {
        let slot = slots
            .get_mut(item.index)
            .ok_or_else(|| Error::Remote(format!("response index {} out of range", item.index)))?;
        if slot.replace(item.embedding).is_some() {
            return Err(Error::Remote(format!("response repeats index {}", item.index)));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Remote(format!("response missing index {i}"))))
        .collect()
}
