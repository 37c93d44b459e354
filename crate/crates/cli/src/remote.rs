//! HTTP client for an external question/answer/rationale service.
//!
//! Wire format: `POST {"seed", "image_id", "modality"}` answered by
//! `{"question", "answer", "cot"}`. Timeouts, connection failures and 5xx
//! replies are retried with exponential backoff; 4xx replies and malformed
//! bodies are not.

use std::thread;
use std::time::Duration;

use curriculum_core::forge::generator::{generator_registry, GeneratorError, QaGenerator, QaRequest, QaTriple};
use curriculum_core::registry::{Registry, RegistryError, StrategySpec};
use log::warn;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteParams {
    /// `http://` URL of the generation endpoint.
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Total attempts per request, including the first.
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    /// Delay before the first retry; doubled after each further failure.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_attempts() -> usize {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Serialize)]
struct WireRequest<'a> {
    seed: &'a str,
    image_id: &'a str,
    modality: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    question: String,
    answer: String,
    cot: String,
}

pub struct RemoteGenerator {
    params: RemoteParams,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for RemoteGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteGenerator").field("params", &self.params).finish()
    }
}

enum Failure {
    Retryable(String),
    Fatal(GeneratorError),
}

impl RemoteGenerator {
    pub fn new(params: RemoteParams) -> Result<Self, String> {
        if !params.endpoint.starts_with("http://") {
            return Err(format!("endpoint `{}` must be an http:// URL", params.endpoint));
        }
        if params.attempts == 0 || params.timeout_ms == 0 {
            return Err("attempts and timeout_ms must be >= 1".into());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(params.timeout_ms))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { params, client })
    }

    pub fn params(&self) -> &RemoteParams {
        &self.params
    }

    /// Delay after failed attempt `attempt` (0-based).
    pub fn backoff(&self, attempt: usize) -> Duration {
        Duration::from_millis(self.params.backoff_base_ms.saturating_mul(1 << attempt.min(16)))
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Result<QaTriple, Failure> {
        let response = self
            .client
            .post(&self.params.endpoint)
            .json(body)
            .send()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(GeneratorError::Transport {
                attempts: 1,
                reason: format!("HTTP {status}"),
            }));
        }
        let text = response.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(GeneratorError::Malformed(e.to_string())))?;
        Ok(QaTriple {
            question: wire.question,
            answer: wire.answer,
            cot: wire.cot,
        })
    }
}

impl QaGenerator for RemoteGenerator {
    fn id(&self) -> &str {
        "remote"
    }

    fn generate(&self, request: &QaRequest<'_>) -> Result<QaTriple, GeneratorError> {
        let body = WireRequest {
            seed: request.seed,
            image_id: request.image_id,
            modality: request.modality.as_str(),
        };
        let mut last = String::new();
        for attempt in 0..self.params.attempts {
            if attempt > 0 {
                thread::sleep(self.backoff(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(triple) => return Ok(triple),
                Err(Failure::Fatal(GeneratorError::Transport { reason, .. })) => {
                    return Err(GeneratorError::Transport {
                        attempts: attempt + 1,
                        reason,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(reason)) => {
                    warn!(
                        "{} attempt {}/{} failed: {reason}",
                        request.image_id,
                        attempt + 1,
                        self.params.attempts
                    );
                    last = reason;
                }
            }
        }
        Err(GeneratorError::Transport {
            attempts: self.params.attempts,
            reason: last,
        })
    }
}

/// Built-in backends plus `remote`.
pub fn backend_registry() -> Registry<dyn QaGenerator> {
    let mut registry = generator_registry();
    registry.register("remote", |spec: &StrategySpec| {
        let params: RemoteParams = spec.parse_params()?;
        let generator = RemoteGenerator::new(params).map_err(|reason| RegistryError::InvalidParams {
            name: spec.name.clone(),
            reason,
        })?;
        Ok(Box::new(generator))
    });
    registry
}
