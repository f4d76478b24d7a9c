//! Typed client for the driftlab HTTP API.

use reqwest::header::{HeaderValue, IF_MATCH};
use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use driftlab_api as api;
use driftlab_api::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{status}: {} ({})", .body.message, .body.code)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("unexpected response ({status}): {text}")]
    Decode { status: StatusCode, text: String },
}

impl ClientError {
    /// The service's error code, when the service answered with one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
    if_match: Option<u64>,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
            if_match: None,
        }
    }

    /// Sends `If-Match` with this revision on every mutation.
    pub fn with_revision(mut self, revision: Option<u64>) -> Self {
        self.if_match = revision;
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}{}", self.base, PREFIX, path)
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        let mut req = self.http.request(method.clone(), self.url(path));
        if method != Method::GET {
            if let Some(rev) = self.if_match {
                req = req.header(IF_MATCH, HeaderValue::from_str(&revision_tag(rev)).expect("ascii tag"));
            }
        }
        req
    }

    async fn text(req: RequestBuilder) -> Result<String> {
        let res = req.send().await?;
        let status = res.status();
        let text = res.text().await?;
        if status.is_success() {
            return Ok(text);
        }
        match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => Err(ClientError::Api { status, body }),
            Err(_) => Err(ClientError::Decode { status, text }),
        }
    }

    async fn send<T: DeserializeOwned>(req: RequestBuilder) -> Result<T> {
        let text = Self::text(req).await?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode {
            status: StatusCode::OK,
            text: format!("{e}: {text}"),
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T> {
        Self::send(self.request(Method::GET, path).query(query)).await
    }

    async fn with_body<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: &B) -> Result<T> {
        Self::send(self.request(method, path).json(body)).await
    }

    pub async fn health(&self) -> Result<serde_json::Value> {
        self.get("/health", &[]).await
    }

    pub async fn openapi(&self) -> Result<serde_json::Value> {
        self.get("/spec", &[]).await
    }

    pub async fn list_sessions(&self) -> Result<SessionList> {
        self.get("/sessions", &[]).await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionInfo> {
        self.with_body(Method::POST, "/sessions", req).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionInfo> {
        self.get(&format!("/sessions/{id}"), &[]).await
    }

    pub async fn delete_session(&self, id: &str) -> Result<()> {
        Self::text(self.request(Method::DELETE, &format!("/sessions/{id}"))).await.map(|_| ())
    }

    /// The full session document, verbatim.
    pub async fn export(&self, id: &str) -> Result<String> {
        Self::text(self.request(Method::GET, &format!("/sessions/{id}/export"))).await
    }

    pub async fn import(&self, document: String, id: Option<&str>) -> Result<SessionInfo> {
        let mut req = self
            .request(Method::POST, "/sessions/import")
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(document);
        if let Some(id) = id {
            req = req.query(&[("id", id)]);
        }
        Self::send(req).await
    }

    pub async fn stream(&self, id: &str, req: &StreamRequest) -> Result<StreamResponse> {
        self.with_body(Method::POST, &format!("/sessions/{id}/stream"), req).await
    }

    pub async fn drift(&self, id: &str, features: &[&str], clusters: bool) -> Result<DriftSeries> {
        let mut q = vec![("clusters", clusters.to_string())];
        if !features.is_empty() {
            q.push(("features", features.join(",")));
        }
        self.get(&format!("/sessions/{id}/drift"), &q).await
    }

    pub async fn samples(&self, id: &str, selection: &Selection) -> Result<SamplesView> {
        self.get(&format!("/sessions/{id}/samples"), &[("selection", selection.to_string())]).await
    }

    pub async fn components(&self, id: &str) -> Result<ComponentsView> {
        self.get(&format!("/sessions/{id}/components"), &[]).await
    }

    pub async fn merge(&self, id: &str, ids: &[ComponentId]) -> Result<MergeResponse> {
        let body = MergeRequest { ids: ids.to_vec() };
        self.with_body(Method::POST, &format!("/sessions/{id}/components/merge"), &body).await
    }

    pub async fn projection(&self, id: &str) -> Result<ProjectionView> {
        self.get(&format!("/sessions/{id}/projection"), &[]).await
    }

    pub async fn refresh_projection(&self, id: &str, wait: bool) -> Result<RefreshResponse> {
        let req = self
            .request(Method::POST, &format!("/sessions/{id}/projection/refresh"))
            .query(&[("wait", wait.to_string())]);
        Self::send(req).await
    }

    pub async fn density_diff(&self, id: &str, newer: &Selection, older: &Selection) -> Result<DensityDiffView> {
        let q = [("newer", newer.to_string()), ("older", older.to_string())];
        self.get(&format!("/sessions/{id}/density-diff"), &q).await
    }

    pub async fn create_learner(&self, id: &str, req: &CreateLearner) -> Result<LearnerCreated> {
        self.with_body(Method::POST, &format!("/sessions/{id}/learners"), req).await
    }

    pub async fn learners(&self, id: &str) -> Result<LearnersView> {
        self.get(&format!("/sessions/{id}/learners"), &[]).await
    }

    pub async fn ensemble(&self, id: &str) -> Result<EnsembleView> {
        self.get(&format!("/sessions/{id}/ensemble"), &[]).await
    }

    pub async fn set_ensemble(&self, id: &str, req: &SetEnsemble) -> Result<EnsembleView> {
        self.with_body(Method::PUT, &format!("/sessions/{id}/ensemble"), req).await
    }

    pub async fn update_ensemble(&self, id: &str, selection: &Selection) -> Result<UpdateResponse> {
        let body = UpdateEnsemble {
            selection: selection.to_string(),
        };
        self.with_body(Method::POST, &format!("/sessions/{id}/ensemble/update"), &body).await
    }

    pub async fn performance(&self, id: &str, selection: &Selection, bins: usize, compare: bool) -> Result<PerformanceView> {
        let mut q = vec![("selection", selection.to_string()), ("bins", bins.to_string())];
        if compare {
            q.push(("compare", "prev".into()));
        }
        self.get(&format!("/sessions/{id}/performance"), &q).await
    }

    pub async fn predict(&self, id: &str, values: &[f64]) -> Result<Prediction> {
        let body = PredictRequest { values: values.to_vec() };
        self.with_body(Method::POST, &format!("/sessions/{id}/predict"), &body).await
    }

    pub async fn add_sample_set(&self, id: &str, name: &str, ids: &[SampleId]) -> Result<SampleSetView> {
        let body = SampleSetRequest {
            name: name.to_string(),
            ids: ids.to_vec(),
        };
        self.with_body(Method::POST, &format!("/sessions/{id}/samples-of-interest"), &body).await
    }

    pub async fn sample_sets(&self, id: &str) -> Result<SampleSetsView> {
        self.get(&format!("/sessions/{id}/samples-of-interest"), &[]).await
    }

    pub async fn sample_set(&self, id: &str, name: &str) -> Result<SampleSetView> {
        let mut url = reqwest::Url::parse(&self.url(&format!("/sessions/{id}/samples-of-interest")))
            .map_err(|e| ClientError::Decode {
                status: StatusCode::BAD_REQUEST,
                text: e.to_string(),
            })?;
        url.path_segments_mut()
            .map_err(|_| ClientError::Decode {
                status: StatusCode::BAD_REQUEST,
                text: "base url cannot carry a path".into(),
            })?
            .push(name);
        Self::send(self.http.get(url)).await
    }
}
