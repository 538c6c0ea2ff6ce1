//! Client for a SafeSearch-style sensitivity annotation service.

use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ExtractError;
use crate::feature_model::{Likelihood, PrivacyFeatureVector, Sensitivity, SensitivityClass};

pub const URL_ENV: &str = "PRIVLENS_SAFESEARCH_URL";
pub const KEY_ENV: &str = "PRIVLENS_SAFESEARCH_KEY";

/// Five likelihoods; `None` is the service's "unknown".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeSearchResult {
    pub adult: Option<Likelihood>,
    pub racy: Option<Likelihood>,
    pub medical: Option<Likelihood>,
    pub spoofed: Option<Likelihood>,
    pub violent: Option<Likelihood>,
}

impl SafeSearchResult {
    pub fn get(&self, class: SensitivityClass) -> Option<Likelihood> {
        match class {
            SensitivityClass::Adult => self.adult,
            SensitivityClass::Racy => self.racy,
            SensitivityClass::Medical => self.medical,
            SensitivityClass::Spoofed => self.spoofed,
            SensitivityClass::Violent => self.violent,
        }
    }

    /// Copies the five likelihoods into `features`; unknowns become missing.
    pub fn apply_to(&self, features: &mut PrivacyFeatureVector) {
        for class in SensitivityClass::ALL {
            features.set_sensitivity(class, self.get(class).map(Sensitivity::Level));
        }
    }
}

/// Wire name of each class in service responses.
fn response_field(class: SensitivityClass) -> &'static str {
    match class {
        SensitivityClass::Adult => "adult",
        SensitivityClass::Racy => "racy",
        SensitivityClass::Medical => "medical",
        SensitivityClass::Spoofed => "spoof",
        SensitivityClass::Violent => "violence",
    }
}

/// Accepts the flat `{"adult": ..., "spoof": ...}` form as well as the
/// `safeSearchAnnotation` object, bare or inside a `responses` array.
pub fn parse_response(body: &Value) -> Result<SafeSearchResult, ExtractError> {
    let annotation = if let Some(first) = body.get("responses").and_then(|r| r.get(0)) {
        if let Some(err) = first.get("error") {
            return Err(ExtractError::MalformedResponse(format!("service error: {err}")));
        }
        first.get("safeSearchAnnotation")
    } else if let Some(a) = body.get("safeSearchAnnotation") {
        Some(a)
    } else {
        Some(body)
    }
    .ok_or_else(|| ExtractError::MalformedResponse("no safeSearchAnnotation".into()))?;

    let level = |class: SensitivityClass| -> Result<Option<Likelihood>, ExtractError> {
        let field = response_field(class);
        let token = annotation
            .get(field)
            .and_then(Value::as_str)
            .ok_or_else(|| ExtractError::MalformedResponse(format!("missing field '{field}'")))?;
        if token.eq_ignore_ascii_case("UNKNOWN") {
            return Ok(None);
        }
        Likelihood::from_token(token)
            .map(Some)
            .ok_or_else(|| ExtractError::MalformedResponse(format!("{field}: unknown level '{token}'")))
    };
    Ok(SafeSearchResult {
        adult: level(SensitivityClass::Adult)?,
        racy: level(SensitivityClass::Racy)?,
        medical: level(SensitivityClass::Medical)?,
        spoofed: level(SensitivityClass::Spoofed)?,
        violent: level(SensitivityClass::Violent)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
    pub requests_per_second: f64,
    pub timeout: Duration,
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ClientConfig {
            endpoint: endpoint.into(),
            api_key: None,
            max_attempts: 5,
            backoff_base: Duration::from_secs(1),
            backoff_max: Duration::from_secs(60),
            requests_per_second: 5.0,
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads `PRIVLENS_SAFESEARCH_URL` and `PRIVLENS_SAFESEARCH_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(URL_ENV).ok().filter(|s| !s.is_empty())?;
        let mut cfg = ClientConfig::new(endpoint);
        cfg.api_key = std::env::var(KEY_ENV).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }

    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.backoff_base.saturating_mul(factor).min(self.backoff_max)
    }
}

/// Client-side token bucket.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        let capacity = requests_per_second.max(1.0);
        RateLimiter {
            rate: requests_per_second,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available. A non-positive rate disables limiting.
    pub fn acquire(&self) {
        if self.rate <= 0.0 || !self.rate.is_finite() {
            return;
        }
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.rate).min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                Duration::from_secs_f64((1.0 - tokens) / self.rate)
            };
            thread::sleep(wait);
        }
    }
}

/// Blocking HTTP client, shareable across worker threads.
pub struct SafeSearchClient {
    agent: ureq::Agent,
    config: ClientConfig,
    limiter: RateLimiter,
}

enum Attempt {
    Done(Result<SafeSearchResult, ExtractError>),
    Retry(ExtractError),
}

impl SafeSearchClient {
    pub fn new(config: ClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        SafeSearchClient {
            agent,
            limiter: RateLimiter::new(config.requests_per_second),
            config,
        }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Request body for one image. Existing local files are sent inline,
    /// anything else is passed as an image URI.
    pub fn request_body(image_ref: &str) -> Result<Value, ExtractError> {
        let image = if Path::new(image_ref).is_file() {
            let bytes = std::fs::read(image_ref).map_err(|e| ExtractError::input(Path::new(image_ref), e))?;
            json!({ "content": base64::engine::general_purpose::STANDARD.encode(bytes) })
        } else {
            json!({ "source": { "imageUri": image_ref } })
        };
        Ok(json!({
            "requests": [{
                "image": image,
                "features": [{ "type": "SAFE_SEARCH_DETECTION" }]
            }]
        }))
    }

    /// Annotates one image, retrying 429, 5xx and transport failures with
    /// exponential backoff up to `max_attempts` total attempts.
    pub fn annotate(&self, image_ref: &str) -> Result<SafeSearchResult, ExtractError> {
        let body = Self::request_body(image_ref)?;
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(self.config.backoff(attempt - 1));
            }
            self.limiter.acquire();
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) => {
                    log::debug!("safe-search attempt {attempt}/{attempts} for {image_ref}: {err}");
                    last = Some(err);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("x-goog-api-key", key);
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(ExtractError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {
                let parsed = resp
                    .body_mut()
                    .read_json::<Value>()
                    .map_err(|e| ExtractError::MalformedResponse(e.to_string()))
                    .and_then(|v| parse_response(&v));
                Attempt::Done(parsed)
            }
            401 | 403 => Attempt::Done(Err(ExtractError::Auth(status))),
            429 => Attempt::Retry(ExtractError::RateLimited),
            500..=599 => Attempt::Retry(ExtractError::HttpStatus(status)),
            _ => Attempt::Done(Err(ExtractError::HttpStatus(status))),
        }
    }
}
