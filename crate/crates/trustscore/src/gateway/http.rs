//! Blocking HTTP backend speaking the chat-completions JSON protocol.

use super::{Backend, GatewayError, RetryConfig};
use crate::domain::DecodingConfig;
use serde_json::json;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// Counting semaphore bounding in-flight requests.
struct InFlight {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.freed.wait(available).unwrap();
        }
        *available -= 1;
    }

    fn release(&self) {
        *self.available.lock().unwrap() += 1;
        self.freed.notify_one();
    }
}

/// Chat-completions backend with bounded concurrency and exponential-backoff
/// retries. The bearer token comes from the environment, never from config.
pub struct HttpChatBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    model_name: String,
    retry: RetryConfig,
    in_flight: InFlight,
}

impl HttpChatBackend {
    pub fn new(
        base_url: impl Into<String>,
        model_name: impl Into<String>,
        api_key_env_var: Option<&str>,
        max_in_flight: usize,
        retry: RetryConfig,
    ) -> Result<Self, GatewayError> {
        let api_key = match api_key_env_var {
            Some(var) => Some(
                std::env::var(var).map_err(|_| GatewayError::MissingApiKey(var.to_string()))?,
            ),
            None => None,
        };
        Ok(Self {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model_name: model_name.into(),
            retry,
            in_flight: InFlight::new(max_in_flight),
        })
    }

    fn request_once(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, String> {
        let body = json!({
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.effective_temperature(),
            "max_tokens": decoding.max_tokens,
        });
        let url = format!("{}/chat/completions", self.base_url);
        let mut request = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = request.send_json(body).map_err(|e| e.to_string())?;
        let value: serde_json::Value = response.into_json().map_err(|e| e.to_string())?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| format!("response missing choices[0].message.content: {value}"))
    }
}

impl Backend for HttpChatBackend {
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, GatewayError> {
        self.in_flight.acquire();
        let result = (|| {
            let mut last_error = String::new();
            for attempt in 1..=self.retry.max_attempts.max(1) {
                match self.request_once(prompt, decoding) {
                    Ok(text) => return Ok(text),
                    Err(message) => last_error = message,
                }
                if attempt < self.retry.max_attempts {
                    let backoff = self.retry.backoff_base_ms << (attempt - 1).min(16);
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
            Err(GatewayError::Transport {
                message: last_error,
                attempts: self.retry.max_attempts.max(1),
            })
        })();
        self.in_flight.release();
        result
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}
