//! Chat-completions transport: one HTTP POST per answer, with transport
//! retries. Parse failures are never retried — they are data the evaluation
//! layer accounts for.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::parse::parse_answer;
use super::template::PromptTemplate;
use super::{LlmError, ModelAnswer};
use crate::context::{token_estimate, ContextBlock};

pub const ENDPOINT_ENV: &str = "AUDITOR_LLM_ENDPOINT";
pub const MODEL_ENV: &str = "AUDITOR_LLM_MODEL";
pub const TOKEN_ENV: &str = "AUDITOR_LLM_TOKEN";

/// Sampling parameters for one backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
}

impl SamplingConfig {
    pub fn new(temperature: f64, top_p: f64) -> Result<Self, LlmError> {
        SamplingConfig {
            temperature,
            top_p,
            max_output_tokens: 256,
            seed: None,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidConfig(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_output_tokens must be positive".into()));
        }
        Ok(self)
    }

    /// Best-performing stage-one cell: temperature 0.2, top-p 0.9.
    pub fn default_bugid() -> Self {
        SamplingConfig::new(0.2, 0.9).expect("static config")
    }

    /// Best-performing stage-two cell: temperature 0.2, top-p 0.7.
    pub fn default_responsiveness() -> Self {
        SamplingConfig::new(0.2, 0.7).expect("static config")
    }

    /// Stable digest used as a cache and sweep key.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = format!(
            "t={:.4};p={:.4};m={};s={}",
            self.temperature,
            self.top_p,
            self.max_output_tokens,
            self.seed.map(|s| s.to_string()).unwrap_or_default()
        );
        let hash = Sha256::digest(canonical.as_bytes());
        hex::encode(&hash[..6])
    }
}

/// The sampling grid swept when tuning: temperatures 0.0/0.2/0.5/0.8/1.0
/// crossed with top-p 0.7/0.8/0.9/0.95 — twenty cells.
pub fn default_sweep_grid() -> Vec<SamplingConfig> {
    let mut grid = Vec::with_capacity(20);
    for temperature in [0.0, 0.2, 0.5, 0.8, 1.0] {
        for top_p in [0.7, 0.8, 0.9, 0.95] {
            grid.push(SamplingConfig::new(temperature, top_p).expect("grid values in range"));
        }
    }
    grid
}

pub struct ChatBackend {
    http: reqwest::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    timeout: Duration,
    /// Input ceiling enforced before sending.
    context_limit: u32,
    transport_attempts: u32,
}

impl ChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, LlmError> {
        let timeout = Duration::from_secs(120);
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(ChatBackend {
            http,
            endpoint: endpoint.into(),
            model: model.into(),
            token: std::env::var(TOKEN_ENV).ok(),
            timeout,
            context_limit: 8192,
            transport_attempts: 3,
        })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| LlmError::BackendUnavailable(format!("{ENDPOINT_ENV} not set")))?;
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| "default".to_string());
        Self::new(endpoint, model)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_context_limit(mut self, limit: u32) -> Self {
        self.context_limit = limit;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// Send instruction + context as a chat exchange and parse the reply.
    pub async fn complete(
        &self,
        template: &PromptTemplate,
        context: &ContextBlock,
        cfg: &SamplingConfig,
    ) -> Result<ModelAnswer, LlmError> {
        let input_estimate = token_estimate(&template.instruction_text) + context.token_estimate;
        if input_estimate > self.context_limit {
            return Err(LlmError::ContextTooLarge {
                estimate: input_estimate,
                limit: self.context_limit,
            });
        }

        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": template.instruction_text},
                {"role": "user", "content": context.text},
            ],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_output_tokens,
        });
        if let Some(seed) = cfg.seed {
            body["seed"] = json!(seed);
        }

        let started = std::time::Instant::now();
        let raw_text = self.post_with_retries(&body).await?;
        let latency_ms = started.elapsed().as_millis() as u64;

        let outcome = parse_answer(&raw_text, template);
        Ok(ModelAnswer {
            task: template.task,
            raw_text,
            parsed: outcome.parsed,
            parse_status: outcome.status,
            latency_ms,
        })
    }

    async fn post_with_retries(&self, body: &serde_json::Value) -> Result<String, LlmError> {
        let mut last_error = String::new();
        for attempt in 0..self.transport_attempts {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(500 * (1 << attempt))).await;
            }
            let mut request = self.http.post(&self.endpoint).json(body);
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            match request.send().await {
                Ok(resp) if resp.status().is_success() => {
                    let value: serde_json::Value = resp
                        .json()
                        .await
                        .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
                    let content = value
                        .pointer("/choices/0/message/content")
                        .or_else(|| value.pointer("/choices/0/text"))
                        .and_then(|v| v.as_str())
                        .unwrap_or_default();
                    return Ok(content.to_string());
                }
                Ok(resp) => {
                    last_error = format!("status {}", resp.status());
                }
                Err(e) if e.is_timeout() => {
                    return Err(LlmError::Timeout(self.timeout));
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(LlmError::BackendUnavailable(format!(
            "{} after {} attempts: {last_error}",
            self.endpoint, self.transport_attempts
        )))
    }
}
