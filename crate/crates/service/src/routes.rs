use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use driftlab_api::*;
use driftlab_core::dataset::{ingest_csv, parse_csv_rows};
use driftlab_core::ensemble::{BaseLearner, Classifier};
use driftlab_core::{projection, CoreError, StreamSession};

use crate::error::ApiError;
use crate::store::{check_revision, mutate, persist, Entry, Slot};
use crate::AppState;

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

fn reply<T: Serialize>(status: StatusCode, revision: u64, body: &T) -> Response {
    let mut res = (status, Json(body)).into_response();
    if let Ok(tag) = HeaderValue::from_str(&revision_tag(revision)) {
        res.headers_mut().insert(header::ETAG, tag);
    }
    res
}

fn if_match(headers: &HeaderMap) -> Result<Option<u64>, ApiError> {
    match headers.get(header::IF_MATCH) {
        None => Ok(None),
        Some(v) => {
            let text = v.to_str().map_err(|_| ApiError::bad_request("If-Match is not text"))?;
            if text.trim() == "*" {
                return Ok(None);
            }
            parse_revision_tag(text)
                .map(Some)
                .ok_or_else(|| ApiError::bad_request(format!("If-Match {text:?} is not a revision")))
        }
    }
}

/// Parses a JSON body; an empty body yields the type's default.
fn body_or_default<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    body(bytes)
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", format!("request body: {e}"))
            .with_detail(serde_json::json!({ "line": e.line(), "column": e.column() }))
    })
}

fn selection(text: &str) -> Result<Selection, ApiError> {
    text.parse::<Selection>().map_err(ApiError::from)
}

pub fn session_info(entry: &Entry, slot: &Slot) -> SessionInfo {
    let s = &slot.session;
    SessionInfo {
        id: entry.id.clone(),
        revision: slot.revision,
        feature_names: s.dataset.feature_names().to_vec(),
        labeled: s.dataset.has_labels(),
        rows: s.dataset.len(),
        training_rows: s.training_ids.len(),
        end_tick: s.end_tick(),
        window_length: s.window.length(),
        window_size: s.window.len(),
        components: s.gmm.components.len(),
        pending: s.gmm.pending_buffer.len(),
        learners: s.learners.len(),
        projection_stale: s.projection_stale || s.projection.is_none(),
        projection_running: entry.projection_running(),
        alert_ticks: s.alert_ticks(),
    }
}

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub async fn openapi() -> Json<serde_json::Value> {
    Json(crate::openapi::document())
}

pub async fn list_sessions(State(app): Shared) -> Json<SessionList> {
    let mut sessions = Vec::new();
    for entry in app.store.list().await {
        let slot = entry.slot.read().await;
        sessions.push(session_info(&entry, &slot));
    }
    Json(SessionList { sessions })
}

pub async fn create_session(State(app): Shared, bytes: Bytes) -> ApiResult {
    let req: CreateSession = body(&bytes)?;
    let session = tokio::task::spawn_blocking(move || -> Result<StreamSession, ApiError> {
        let dataset = ingest_csv(&req.csv, &req.schema)?;
        Ok(StreamSession::create(dataset, req.config)?)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let entry = app.store.insert(id, session, 1).await?;
    let slot = entry.slot.read().await;
    Ok(reply(StatusCode::CREATED, slot.revision, &session_info(&entry, &slot)))
}

#[derive(Deserialize)]
pub struct ImportQuery {
    id: Option<String>,
}

pub async fn import_session(State(app): Shared, Query(q): Query<ImportQuery>, bytes: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&bytes).map_err(|_| ApiError::bad_request("document is not UTF-8"))?;
    let (revision, session) = StreamSession::from_document(text)?;
    let id = match q.id {
        Some(id) if !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') => id,
        Some(id) => return Err(ApiError::bad_request(format!("invalid session id {id:?}"))),
        None => uuid::Uuid::new_v4().simple().to_string(),
    };
    let entry = app.store.insert(id, session, revision).await?;
    let slot = entry.slot.read().await;
    Ok(reply(StatusCode::CREATED, slot.revision, &session_info(&entry, &slot)))
}

pub async fn get_session(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    Ok(reply(StatusCode::OK, slot.revision, &session_info(&entry, &slot)))
}

pub async fn delete_session(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    app.store.remove(&id).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

pub async fn export_session(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let doc = slot.session.to_document(slot.revision)?;
    let mut res = ([(header::CONTENT_TYPE, "application/json")], doc).into_response();
    if let Ok(tag) = HeaderValue::from_str(&revision_tag(slot.revision)) {
        res.headers_mut().insert(header::ETAG, tag);
    }
    Ok(res)
}

pub async fn stream(State(app): Shared, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: StreamRequest = body(&bytes)?;
    let entry = app.store.get(&id).await?;
    let (revision, (report, end_tick)) = mutate(&app.store, &entry, if_match(&headers)?, move |s| {
        let mut rows = req.rows;
        if let Some(csv) = &req.csv {
            let schema = req
                .schema
                .as_ref()
                .ok_or_else(|| ApiError::bad_request("csv rows need a schema"))?;
            let (names, parsed) = parse_csv_rows(csv, schema, s.dataset.next_id().0)?;
            if names != s.dataset.feature_names() {
                return Err(ApiError::from(CoreError::Schema(format!(
                    "feature columns {names:?} do not match the session's {:?}",
                    s.dataset.feature_names()
                ))));
            }
            rows.extend(parsed);
        }
        let report = s.advance(rows, req.advance_to)?;
        Ok((report, s.end_tick()))
    })
    .await?;
    let res = StreamResponse {
        revision,
        end_tick,
        ids: report.ids,
        drift_points: report.drift_points,
        new_components: report.new_components,
        firm: report.firm,
        provisional: report.provisional,
    };
    Ok(reply(StatusCode::OK, revision, &res))
}

#[derive(Deserialize)]
pub struct DriftQuery {
    features: Option<String>,
    #[serde(default)]
    clusters: bool,
}

pub async fn drift(State(app): Shared, Path(id): Path<String>, Query(q): Query<DriftQuery>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let s = &slot.session;
    let features: Vec<String> = q
        .features
        .as_deref()
        .map(|f| f.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect())
        .unwrap_or_default();
    for f in &features {
        if !s.dataset.feature_names().contains(f) {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "unknown_feature", format!("unknown feature {f:?}"))
                .with_detail(serde_json::json!({ "feature": f, "available": s.dataset.feature_names() })));
        }
    }
    let points = s
        .drift_series
        .iter()
        .map(|p| DriftLine {
            tick: p.tick,
            overall: p.overall,
            per_feature: features
                .iter()
                .filter_map(|f| p.per_feature.get(f).map(|v| (f.clone(), *v)))
                .collect(),
            per_cluster: q.clusters.then(|| p.per_cluster.clone()),
        })
        .collect();
    let series = DriftSeries {
        revision: slot.revision,
        threshold: s.config.drift_alert_threshold,
        features,
        points,
        alert_ticks: s.alert_ticks(),
    };
    Ok(reply(StatusCode::OK, slot.revision, &series))
}

pub async fn components(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let g = &slot.session.gmm;
    let view = ComponentsView {
        revision: slot.revision,
        components: g
            .components
            .iter()
            .map(|c| ComponentView {
                id: c.id,
                weight: c.weight,
                mean: c.mean.clone(),
                covariance: c.covariance.clone(),
                member_count: c.member_count,
                created_tick: c.created_tick,
            })
            .collect(),
        pending: g.pending_buffer.len(),
        provisional: g.provisional_count(),
        merged_into: g.merged_into.clone(),
    };
    Ok(reply(StatusCode::OK, slot.revision, &view))
}

pub async fn merge(State(app): Shared, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: MergeRequest = body(&bytes)?;
    let entry = app.store.get(&id).await?;
    let (revision, merged) = mutate(&app.store, &entry, if_match(&headers)?, move |s| {
        let distinct: BTreeSet<ComponentId> = req.ids.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(ApiError::bad_request("merging needs at least two distinct component ids"));
        }
        Ok(s.merge_components(&req.ids)?)
    })
    .await?;
    Ok(reply(StatusCode::OK, revision, &MergeResponse { revision, merged }))
}

#[derive(Deserialize)]
pub struct SamplesQuery {
    selection: Option<String>,
}

pub async fn samples(State(app): Shared, Path(id): Path<String>, Query(q): Query<SamplesQuery>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let s = &slot.session;
    let sel = selection(q.selection.as_deref().unwrap_or("window"))?;
    let samples = s
        .resolve(&sel)?
        .into_iter()
        .map(|sid| {
            let a = s.gmm.assignment(sid).expect("ingested samples are assigned");
            Ok(SampleView {
                id: sid,
                tick: s.dataset.tick(sid)?,
                values: s.dataset.values(sid)?.to_vec(),
                label: s.dataset.label(sid)?,
                component: a.component,
                firm: a.firm,
                training: s.training_ids.contains(&sid),
            })
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok(reply(StatusCode::OK, slot.revision, &SamplesView { revision: slot.revision, samples }))
}

pub async fn get_projection(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let solution = slot.session.projection.clone().ok_or(CoreError::NoProjection)?;
    let view = ProjectionView {
        revision: slot.revision,
        stale: slot.session.projection_stale,
        running: entry.projection_running(),
        solution,
    };
    Ok(reply(StatusCode::OK, slot.revision, &view))
}

#[derive(Deserialize)]
pub struct RefreshQuery {
    #[serde(default)]
    wait: bool,
}

/// Starts a background solve. The revision moves once, when the result is
/// installed; `wait=true` holds the response until then.
pub async fn refresh_projection(
    State(app): Shared,
    Path(id): Path<String>,
    Query(q): Query<RefreshQuery>,
    headers: HeaderMap,
) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let expected = if_match(&headers)?;
    let started = !entry.projecting.swap(true, Ordering::SeqCst);
    let job = if started {
        let prepared = {
            let slot = entry.slot.read().await;
            check_revision(expected, slot.revision).and_then(|_| {
                Ok((slot.session.projection_problem()?, slot.session.config.projection.clone()))
            })
        };
        let (problem, config) = match prepared {
            Ok(p) => p,
            Err(e) => {
                entry.projecting.store(false, Ordering::SeqCst);
                return Err(e);
            }
        };
        let app = app.clone();
        let entry = entry.clone();
        Some(tokio::spawn(async move {
            let solved = tokio::task::spawn_blocking(move || projection::solve(&problem, &config)).await;
            let outcome = match solved {
                Ok(Ok(solution)) => {
                    let mut slot = entry.slot.write().await;
                    slot.session.install_projection(solution);
                    slot.revision += 1;
                    if app.store.contains(&entry.id).await {
                        persist(app.store.data_dir(), &entry.id, &slot.session, slot.revision)
                    } else {
                        Ok(())
                    }
                }
                Ok(Err(e)) => Err(ApiError::from(e)),
                Err(e) => Err(ApiError::internal(e.to_string())),
            };
            if let Err(e) = &outcome {
                tracing::warn!(session = %entry.id, error = %e, "projection solve failed");
            }
            entry.projecting.store(false, Ordering::SeqCst);
            outcome
        }))
    } else {
        None
    };
    if q.wait {
        match job {
            Some(handle) => handle.await.map_err(|e| ApiError::internal(e.to_string()))??,
            None => {
                while entry.projection_running() {
                    tokio::time::sleep(Duration::from_millis(20)).await;
                }
            }
        }
    }
    let slot = entry.slot.read().await;
    let res = RefreshResponse {
        revision: slot.revision,
        started,
        running: entry.projection_running(),
        tick: slot.session.projection.as_ref().map(|p| p.tick),
    };
    let status = if q.wait { StatusCode::OK } else { StatusCode::ACCEPTED };
    Ok(reply(status, slot.revision, &res))
}

#[derive(Deserialize)]
pub struct DiffQuery {
    newer: Option<String>,
    older: Option<String>,
}

pub async fn density_diff(State(app): Shared, Path(id): Path<String>, Query(q): Query<DiffQuery>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let newer = selection(q.newer.as_deref().unwrap_or("window"))?;
    let older = selection(q.older.as_deref().unwrap_or("previous-window"))?;
    let diff = slot.session.density_diff(&newer, &older)?;
    let view = DensityDiffView {
        revision: slot.revision,
        newer: newer.to_string(),
        older: older.to_string(),
        projection_tick: slot.session.projection.as_ref().map_or(0, |p| p.tick),
        diff,
    };
    Ok(reply(StatusCode::OK, slot.revision, &view))
}

fn learner_view(l: &BaseLearner, s: &StreamSession) -> LearnerView {
    LearnerView {
        id: l.id,
        kind: match l.model {
            Classifier::Constant { .. } => "constant",
            Classifier::Logistic { .. } => "logistic",
        }
        .to_string(),
        classes: l.model.classes(),
        created_tick: l.created_tick,
        training_size: l.training_ids.len(),
        component_histogram: l.component_histogram.clone(),
        weight: s.ensemble.weight_of(l.id),
    }
}

pub async fn create_learner(State(app): Shared, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: CreateLearner = body(&bytes)?;
    let entry = app.store.get(&id).await?;
    let (revision, view) = mutate(&app.store, &entry, if_match(&headers)?, move |s| {
        let mut ids = req.sample_ids;
        if let Some(sel) = &req.selection {
            ids.extend(s.resolve(&selection(sel)?)?);
        }
        let lid = s.train_learner(&ids, req.hyper)?;
        Ok(learner_view(&s.learners[&lid], s))
    })
    .await?;
    Ok(reply(StatusCode::CREATED, revision, &LearnerCreated { revision, learner: view }))
}

pub async fn list_learners(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let s = &slot.session;
    let learners = s.learners.values().map(|l| learner_view(l, s)).collect();
    Ok(reply(StatusCode::OK, slot.revision, &LearnersView { revision: slot.revision, learners }))
}

pub async fn get_ensemble(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let view = EnsembleView {
        revision: slot.revision,
        model: slot.session.ensemble.clone(),
    };
    Ok(reply(StatusCode::OK, slot.revision, &view))
}

pub async fn set_ensemble(State(app): Shared, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: SetEnsemble = body(&bytes)?;
    let entry = app.store.get(&id).await?;
    let (revision, model) = mutate(&app.store, &entry, if_match(&headers)?, move |s| {
        s.set_ensemble(&req.members, req.weights.as_deref())?;
        Ok(s.ensemble.clone())
    })
    .await?;
    Ok(reply(StatusCode::OK, revision, &EnsembleView { revision, model }))
}

pub async fn update_ensemble(State(app): Shared, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: UpdateEnsemble = body_or_default(&bytes)?;
    let sel = selection(&req.selection)?;
    let entry = app.store.get(&id).await?;
    let (revision, (pruned, model)) = mutate(&app.store, &entry, if_match(&headers)?, move |s| {
        let pruned = s.update_ensemble(&sel)?;
        Ok((pruned, s.ensemble.clone()))
    })
    .await?;
    Ok(reply(StatusCode::OK, revision, &UpdateResponse { revision, pruned, model }))
}

#[derive(Deserialize)]
pub struct PerformanceQuery {
    selection: Option<String>,
    bins: Option<usize>,
    compare: Option<String>,
}

pub async fn performance(State(app): Shared, Path(id): Path<String>, Query(q): Query<PerformanceQuery>) -> ApiResult {
    let compare = match q.compare.as_deref() {
        None | Some("") | Some("none") => false,
        Some("prev") | Some("previous") => true,
        Some(other) => return Err(ApiError::bad_request(format!("compare must be \"prev\", got {other:?}"))),
    };
    let sel = selection(q.selection.as_deref().unwrap_or("window"))?;
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let pair = slot.session.performance(&sel, q.bins.unwrap_or(10), compare)?;
    let view = PerformanceView {
        revision: slot.revision,
        selection: sel.to_string(),
        current: pair.current,
        previous: pair.previous,
    };
    Ok(reply(StatusCode::OK, slot.revision, &view))
}

pub async fn predict(State(app): Shared, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let req: PredictRequest = body(&bytes)?;
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let p = slot.session.predict(&req.values)?;
    Ok(reply(StatusCode::OK, slot.revision, &p))
}

fn sample_set_view(s: &StreamSession, name: &str, ids: &BTreeSet<SampleId>) -> Result<SampleSetView, ApiError> {
    let ids: Vec<SampleId> = ids.iter().copied().collect();
    let model_distribution = if s.ensemble.members.is_empty() {
        None
    } else {
        Some(s.model_distribution(&ids)?)
    };
    Ok(SampleSetView {
        name: name.to_string(),
        ids,
        model_distribution,
    })
}

pub async fn add_sample_set(State(app): Shared, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    let req: SampleSetRequest = body(&bytes)?;
    let entry = app.store.get(&id).await?;
    let (revision, view) = mutate(&app.store, &entry, if_match(&headers)?, move |s| {
        s.add_samples_of_interest(&req.name, &req.ids)?;
        sample_set_view(s, &req.name, &s.samples_of_interest[&req.name])
    })
    .await?;
    Ok(reply(StatusCode::CREATED, revision, &view))
}

pub async fn list_sample_sets(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let s = &slot.session;
    let sets = s
        .samples_of_interest
        .iter()
        .map(|(name, ids)| sample_set_view(s, name, ids))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reply(StatusCode::OK, slot.revision, &SampleSetsView { revision: slot.revision, sets }))
}

pub async fn get_sample_set(State(app): Shared, Path((id, name)): Path<(String, String)>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let s = &slot.session;
    let ids = s
        .samples_of_interest
        .get(&name)
        .ok_or_else(|| ApiError::from(CoreError::UnknownSampleSet(name.clone())))?;
    Ok(reply(StatusCode::OK, slot.revision, &sample_set_view(s, &name, ids)?))
}

pub async fn config(State(app): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = app.store.get(&id).await?;
    let slot = entry.slot.read().await;
    let body: BTreeMap<&str, serde_json::Value> = BTreeMap::from([
        ("revision", serde_json::json!(slot.revision)),
        ("config", serde_json::to_value(&slot.session.config).map_err(CoreError::from)?),
    ]);
    Ok(reply(StatusCode::OK, slot.revision, &body))
}
