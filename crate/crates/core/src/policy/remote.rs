//! Chat-completions style HTTP provider.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PolicyError, PolicyProvider, PolicyRequest};

/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "MOLSEARCH_API_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
}

fn default_timeout() -> u64 {
    120
}

fn default_concurrency() -> usize {
    4
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.free.lock().expect("semaphore");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore");
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore") += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteProvider {
    config: RemoteConfig,
    token: Option<String>,
    agent: ureq::Agent,
    gate: Semaphore,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Reply,
}

#[derive(Deserialize)]
struct Reply {
    content: String,
}

impl RemoteProvider {
    /// Reads the token from [`TOKEN_ENV`] if set.
    pub fn new(config: RemoteConfig) -> Self {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: RemoteConfig, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Semaphore {
            free: Mutex::new(config.max_concurrent.max(1)),
            cv: Condvar::new(),
        };
        RemoteProvider {
            config,
            token,
            agent,
            gate,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

impl PolicyProvider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, PolicyError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.config.model,
            messages: [Message {
                role: "user",
                content: &request.prompt,
            }],
            temperature: self.config.temperature,
            top_p: self.config.top_p,
        })
        .expect("request serializes");
        let _permit = self.gate.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let unreachable = |e: ureq::Error| PolicyError::Unreachable(format!("{}: {e}", self.config.endpoint));
        let mut resp = req.content_type("application/json").send(body).map_err(unreachable)?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(unreachable)?;
        if !status.is_success() {
            return Err(PolicyError::Unreachable(format!(
                "{} answered {status}: {}",
                self.config.endpoint,
                text.chars().take(200).collect::<String>()
            )));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| PolicyError::Malformed(format!("response body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(PolicyError::Empty)?;
        if content.trim().is_empty() {
            return Err(PolicyError::Empty);
        }
        Ok(content)
    }
}
