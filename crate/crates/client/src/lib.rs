//! Async client for the session service. Responses are decoded into the
//! engine's own types, so a remote session reads exactly like a local one.

use hasod_core::api::{ApiSessionSummary, CreateSessionRequest, ErrorBody, SurfacePoint};
use hasod_core::screening::ScreeningReport;
use hasod_core::session::{HasodResult, PendingRun, Response, SessionState};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{error} (HTTP {status}): {message}")]
    Api {
        status: u16,
        error: String,
        message: String,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service's error name, or the client-side failure kind.
    pub fn name(&self) -> &str {
        match self {
            ClientError::Api { error, .. } => error,
            ClientError::Transport(_) => "Transport",
            ClientError::Decode(_) => "Decode",
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/sessions{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()));
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(b) => Err(ClientError::Api {
                status: status.as_u16(),
                error: b.error,
                message: b.message,
            }),
            Err(_) => Err(ClientError::Api {
                status: status.as_u16(),
                error: status.canonical_reason().unwrap_or("Http").to_string(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            }),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    pub async fn create_session(&self, req: &CreateSessionRequest) -> Result<ApiSessionSummary> {
        Self::decode(self.http.post(self.url("")).json(req).send().await?).await
    }

    pub async fn list_sessions(&self) -> Result<Vec<ApiSessionSummary>> {
        self.get("").await
    }

    pub async fn session(&self, id: &str) -> Result<SessionState> {
        self.get(&format!("/{id}")).await
    }

    pub async fn batch(&self, id: &str) -> Result<Vec<PendingRun>> {
        self.get(&format!("/{id}/batch")).await
    }

    pub async fn submit_responses(&self, id: &str, batch: &[Response]) -> Result<ApiSessionSummary> {
        let resp = self
            .http
            .post(self.url(&format!("/{id}/responses")))
            .json(batch)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn report(&self, id: &str) -> Result<HasodResult> {
        self.get(&format!("/{id}/report")).await
    }

    pub async fn screening(&self, id: &str) -> Result<ScreeningReport> {
        self.get(&format!("/{id}/screening")).await
    }

    pub async fn surface(&self, id: &str, x: &[f64]) -> Result<SurfacePoint> {
        let levels: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        self.get(&format!("/{id}/surface?x={}", levels.join(","))).await
    }
}
