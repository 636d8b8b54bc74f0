//! HTTP client for an external guidance server.
//!
//! `POST <endpoint>/guidance` with a JSON body carrying the rendered opacity
//! as base64 little-endian `f32`; the reply carries a loss and a gradient
//! image in the same encoding.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{Guidance, GuidanceContext, GuidanceResult, OpacityGradient};
use crate::raster::{Camera, OpacityMap};

pub const PROTOCOL_VERSION: &str = "1";

/// Environment variable consulted for the default endpoint.
pub const GUIDANCE_URL_ENV: &str = "JACDEFORM_GUIDANCE_URL";

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("guidance server at {endpoint} unreachable after {attempts} attempts: {last}")]
    Exhausted {
        endpoint: String,
        attempts: usize,
        last: String,
    },
    #[error("malformed guidance response: {0}")]
    Malformed(String),
    #[error("guidance server rejected protocol version {sent} (HTTP 426): {body}")]
    VersionMismatch { sent: String, body: String },
    #[error("guidance server rejected the request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("guidance server reported a fatal error: {0}")]
    Fatal(String),
    #[error("invalid base64 payload: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRequest {
    pub version: String,
    pub prompt: String,
    pub iteration: u64,
    pub camera: Camera,
    pub width: usize,
    pub height: usize,
    pub opacity_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb_b64: Option<String>,
}

impl GuidanceRequest {
    pub fn new(prompt: &str, iteration: u64, camera: &Camera, opacity: &OpacityMap) -> Self {
        Self {
            version: PROTOCOL_VERSION.to_string(),
            prompt: prompt.to_string(),
            iteration,
            camera: camera.clone(),
            width: opacity.width,
            height: opacity.height,
            opacity_b64: encode_f32(&opacity.values),
            rgb_b64: None,
        }
    }

    /// Attaches a diagnostic RGB image (row-major, 3 bytes per pixel).
    pub fn with_rgb(mut self, rgb: &[u8]) -> Self {
        self.rgb_b64 = Some(B64.encode(rgb));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Ok,
    Retry,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceResponse {
    pub status: ResponseStatus,
    #[serde(default)]
    pub loss: Option<f64>,
    #[serde(default)]
    pub grad_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// A validated `ok` reply.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceReply {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

impl GuidanceResponse {
    pub fn ok(loss: f64, gradient: &[f64]) -> Self {
        Self {
            status: ResponseStatus::Ok,
            loss: Some(loss),
            grad_b64: Some(encode_f32(gradient)),
            message: None,
        }
    }

    /// Checks an `ok` response against the request dimensions.
    pub fn into_reply(self, width: usize, height: usize) -> Result<GuidanceReply, GuidanceError> {
        let loss = self
            .loss
            .ok_or_else(|| GuidanceError::Malformed("missing loss".into()))?;
        if !loss.is_finite() {
            return Err(GuidanceError::Malformed(format!("non-finite loss {loss}")));
        }
        let grad = self
            .grad_b64
            .ok_or_else(|| GuidanceError::Malformed("missing grad_b64".into()))?;
        let gradient = decode_f32(&grad).map_err(|e| GuidanceError::Malformed(e.to_string()))?;
        if gradient.len() != width * height {
            return Err(GuidanceError::Malformed(format!(
                "gradient has {} values, expected {width}x{height}",
                gradient.len()
            )));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(GuidanceError::Malformed("non-finite gradient value".into()));
        }
        Ok(GuidanceReply { loss, gradient })
    }
}

/// Values narrowed to `f32`, little endian, base64.
pub fn encode_f32(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(4 * values.len());
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f32(text: &str) -> Result<Vec<f64>, GuidanceError> {
    let bytes = B64
        .decode(text)
        .map_err(|e| GuidanceError::Payload(e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(GuidanceError::Payload(format!(
            "{} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    /// Additional attempts after the first.
    pub retries: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            retries: 3,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: usize) -> Duration {
        let factor = 1u32 << attempt.min(16);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

fn guidance_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/guidance") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/guidance")
    }
}

/// Sends `request`, retrying with exponential backoff on transport errors,
/// HTTP 5xx and `retry` replies.
pub fn call_guidance(
    endpoint: &str,
    request: &GuidanceRequest,
    policy: &RetryPolicy,
) -> Result<GuidanceReply, GuidanceError> {
    let url = guidance_url(endpoint);
    let body = serde_json::to_string(request).map_err(|e| GuidanceError::Payload(e.to_string()))?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(policy.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut last = String::new();
    for attempt in 0..=policy.retries {
        if attempt > 0 {
            std::thread::sleep(policy.delay(attempt - 1));
        }
        let response = agent
            .post(&url)
            .header("Content-Type", "application/json")
            .send(body.as_str());
        let mut response = match response {
            Ok(r) => r,
            Err(e) => {
                last = e.to_string();
                log::warn!("guidance attempt {} failed: {last}", attempt + 1);
                continue;
            }
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        match status {
            200 => {}
            426 => {
                return Err(GuidanceError::VersionMismatch {
                    sent: request.version.clone(),
                    body: text,
                })
            }
            s if s >= 500 => {
                last = format!("HTTP {s}: {text}");
                log::warn!("guidance attempt {} failed: {last}", attempt + 1);
                continue;
            }
            s => return Err(GuidanceError::Rejected { status: s, body: text }),
        }
        let parsed: GuidanceResponse =
            serde_json::from_str(&text).map_err(|e| GuidanceError::Malformed(e.to_string()))?;
        match parsed.status {
            ResponseStatus::Ok => return parsed.into_reply(request.width, request.height),
            ResponseStatus::Retry => {
                last = format!("server asked to retry: {}", parsed.message.unwrap_or_default());
                continue;
            }
            ResponseStatus::Fatal => {
                return Err(GuidanceError::Fatal(parsed.message.unwrap_or_default()))
            }
        }
    }
    Err(GuidanceError::Exhausted {
        endpoint: url,
        attempts: policy.retries + 1,
        last,
    })
}

/// Guidance backed by a remote server; gradients arrive in opacity space for
/// the step camera.
#[derive(Debug, Clone)]
pub struct HttpGuidance {
    endpoint: String,
    prompt: String,
    policy: RetryPolicy,
}

impl HttpGuidance {
    pub fn new(endpoint: impl Into<String>, prompt: impl Into<String>, policy: RetryPolicy) -> Self {
        Self {
            endpoint: endpoint.into(),
            prompt: prompt.into(),
            policy,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Guidance for HttpGuidance {
    fn evaluate(&mut self, ctx: &GuidanceContext<'_>) -> crate::Result<GuidanceResult> {
        let opacity = ctx
            .opacity
            .ok_or_else(|| crate::Error::Invalid("remote guidance needs a rendered silhouette".into()))?;
        let prompt = if ctx.prompt.is_empty() { &self.prompt } else { ctx.prompt };
        let request = GuidanceRequest::new(prompt, ctx.iteration as u64, ctx.camera, opacity);
        let reply = call_guidance(&self.endpoint, &request, &self.policy)?;
        Ok(GuidanceResult {
            loss: reply.loss,
            vertex_gradient: None,
            opacity_gradient: Some(OpacityGradient {
                camera: ctx.camera.clone(),
                sigma: ctx.sigma,
                opacity: opacity.clone(),
                values: reply.gradient,
            }),
        })
    }

    fn needs_opacity(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "http"
    }
}
