//! Request and response bodies of the driftlab HTTP API.
//!
//! Every route lives under [`PREFIX`]. Mutating routes accept an optional
//! `If-Match` header carrying the revision the caller last saw; responses
//! report the current revision both in the body and in the `ETag` header.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use driftlab_core::density::DensityDiff;
pub use driftlab_core::energy::{ClusterDrift, DriftPoint};
pub use driftlab_core::ensemble::{EnsembleModel, LogisticConfig, PerformanceSummary, Prediction};
pub use driftlab_core::gmm::NewComponentsCreated;
pub use driftlab_core::projection::ProjectionSolution;
pub use driftlab_core::{ComponentId, CsvSchema, LearnerId, Row, SampleId, Selection, SessionConfig, Tick};

pub const PREFIX: &str = "/v1";

/// Uniform error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable code, e.g. `out_of_order`.
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub csv: String,
    pub schema: CsvSchema,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub revision: u64,
    pub feature_names: Vec<String>,
    pub labeled: bool,
    pub rows: usize,
    pub training_rows: usize,
    pub end_tick: Tick,
    pub window_length: i64,
    pub window_size: usize,
    pub components: usize,
    pub pending: usize,
    pub learners: usize,
    pub projection_stale: bool,
    pub projection_running: bool,
    pub alert_ticks: Vec<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionList {
    pub sessions: Vec<SessionInfo>,
}

/// Rows to append, given either as JSON rows or as CSV with a schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamRequest {
    #[serde(default)]
    pub rows: Vec<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
    /// Slide the window to this tick after the rows are in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advance_to: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResponse {
    pub revision: u64,
    pub end_tick: Tick,
    pub ids: Vec<SampleId>,
    pub drift_points: Vec<DriftPoint>,
    pub new_components: Vec<NewComponentsCreated>,
    pub firm: usize,
    pub provisional: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftLine {
    pub tick: Tick,
    pub overall: f64,
    /// Only the requested features.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_feature: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_cluster: Option<BTreeMap<ComponentId, ClusterDrift>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub revision: u64,
    pub threshold: f64,
    pub features: Vec<String>,
    pub points: Vec<DriftLine>,
    pub alert_ticks: Vec<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentView {
    pub id: ComponentId,
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
    pub member_count: usize,
    pub created_tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentsView {
    pub revision: u64,
    pub components: Vec<ComponentView>,
    pub pending: usize,
    pub provisional: usize,
    /// Merged-away ids and where they went.
    pub merged_into: BTreeMap<ComponentId, ComponentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRequest {
    pub ids: Vec<ComponentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResponse {
    pub revision: u64,
    pub merged: ComponentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionView {
    pub revision: u64,
    pub stale: bool,
    pub running: bool,
    pub solution: ProjectionSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshResponse {
    pub revision: u64,
    /// False when a solve was already running; no second job is queued.
    pub started: bool,
    pub running: bool,
    /// Tick of the installed solution, once one exists.
    pub tick: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDiffView {
    pub revision: u64,
    pub newer: String,
    pub older: String,
    pub projection_tick: Tick,
    pub diff: DensityDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleView {
    pub id: SampleId,
    pub tick: Tick,
    pub values: Vec<f64>,
    pub label: Option<i64>,
    pub component: ComponentId,
    pub firm: bool,
    pub training: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesView {
    pub revision: u64,
    pub samples: Vec<SampleView>,
}

/// Training data for a new learner: explicit ids, a selection string, or both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateLearner {
    #[serde(default)]
    pub sample_ids: Vec<SampleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<LogisticConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerView {
    pub id: LearnerId,
    /// `logistic` or `constant`.
    pub kind: String,
    pub classes: Vec<i64>,
    pub created_tick: Tick,
    pub training_size: usize,
    pub component_histogram: BTreeMap<ComponentId, f64>,
    /// Current ensemble weight; absent when not a member.
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerCreated {
    pub revision: u64,
    pub learner: LearnerView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnersView {
    pub revision: u64,
    pub learners: Vec<LearnerView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEnsemble {
    pub members: Vec<LearnerId>,
    /// Uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleView {
    pub revision: u64,
    pub model: EnsembleModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateEnsemble {
    /// Labeled samples to score the members on; the current window by default.
    #[serde(default = "default_selection")]
    pub selection: String,
}

impl Default for UpdateEnsemble {
    fn default() -> Self {
        Self {
            selection: default_selection(),
        }
    }
}

fn default_selection() -> String {
    Selection::Window.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateResponse {
    pub revision: u64,
    pub pruned: Vec<LearnerId>,
    pub model: EnsembleModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceView {
    pub revision: u64,
    pub selection: String,
    pub current: PerformanceSummary,
    /// The ensemble before the latest adaptation; only with `compare=prev`.
    pub previous: Option<PerformanceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetRequest {
    pub name: String,
    pub ids: Vec<SampleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetView {
    pub name: String,
    pub ids: Vec<SampleId>,
    /// Share of ensemble agreement per member over the set; absent without an ensemble.
    pub model_distribution: Option<BTreeMap<LearnerId, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetsView {
    pub revision: u64,
    pub sets: Vec<SampleSetView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub revision: u64,
}

/// Parses an `ETag` / `If-Match` value such as `"12"`, `W/"12"` or `12`.
pub fn parse_revision_tag(value: &str) -> Option<u64> {
    let v = value.trim();
    let v = v.strip_prefix("W/").unwrap_or(v);
    v.trim_matches('"').parse().ok()
}

pub fn revision_tag(revision: u64) -> String {
    format!("\"{revision}\"")
}
