//! A streaming analysis session: training data, the stream seen so far, and
//! everything derived from them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Row};
use crate::density::{self, DensityDiff};
use crate::energy::{self, DriftBreakdown, DriftPoint, EnergyOptions, Labeled};
use crate::ensemble::{self, BaseLearner, EnsembleConfig, EnsembleModel, Learners, LogisticConfig, PerformanceSummary, Prediction};
use crate::gmm::{self, BufferThreshold, GmmConfig, GmmState, NewComponentsCreated};
use crate::projection::{self, ProjectionConfig, ProjectionProblem, ProjectionSolution};
use crate::window::SlidingWindow;
use crate::{ComponentId, CoreError, LearnerId, Result, SampleId, Tick};

/// Schema tag written into every persisted session document.
pub const SESSION_SCHEMA: &str = "driftlab.session/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Window length in ticks.
    pub window_length: i64,
    pub drift_alert_threshold: f64,
    /// Rows with a tick at or below this form the training set; `None` means
    /// every row of the initial dataset.
    pub training_until: Option<Tick>,
    pub gmm_k_range: (usize, usize),
    pub gmm_assign_confidence: f64,
    pub new_component_buffer_threshold: BufferThreshold,
    pub gmm_seed: u64,
    pub energy: EnergyOptions,
    pub projection: ProjectionConfig,
    pub ensemble: EnsembleConfig,
    pub density_resolution: (usize, usize),
    pub density_smoothing: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let gmm = GmmConfig::default();
        Self {
            window_length: 100,
            drift_alert_threshold: 0.15,
            training_until: None,
            gmm_k_range: gmm.k_range,
            gmm_assign_confidence: gmm.assign_confidence,
            new_component_buffer_threshold: gmm.buffer_threshold,
            gmm_seed: gmm.seed,
            energy: EnergyOptions::default(),
            projection: ProjectionConfig::default(),
            ensemble: EnsembleConfig::default(),
            density_resolution: density::DEFAULT_RESOLUTION,
            density_smoothing: true,
        }
    }
}

impl SessionConfig {
    pub fn gmm(&self) -> GmmConfig {
        GmmConfig {
            k_range: self.gmm_k_range,
            assign_confidence: self.gmm_assign_confidence,
            buffer_threshold: self.new_component_buffer_threshold,
            seed: self.gmm_seed,
            ..GmmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 1 {
            return Err(CoreError::InvalidArgument("window_length must be >= 1".into()));
        }
        if self.drift_alert_threshold.is_nan() || self.drift_alert_threshold < 0.0 {
            return Err(CoreError::InvalidArgument("drift_alert_threshold must be >= 0".into()));
        }
        if self.energy.sample_cap < 2 {
            return Err(CoreError::InvalidArgument("energy sample_cap must be >= 2".into()));
        }
        if self.density_resolution.0 < 2 || self.density_resolution.1 < 2 {
            return Err(CoreError::InvalidArgument("density resolution must be at least 2x2".into()));
        }
        self.gmm().validate()?;
        self.projection.validate()?;
        self.ensemble.validate()
    }
}

/// A set of samples named by how it is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The current sliding window.
    Window,
    /// The window one length before the current one.
    PreviousWindow,
    Training,
    /// A stored sample-of-interest set.
    Named(String),
    Ids(Vec<SampleId>),
    /// Rows with tick in `(after, upto]`.
    Ticks { after: Tick, upto: Tick },
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selection::Window => f.write_str("window"),
            Selection::PreviousWindow => f.write_str("previous-window"),
            Selection::Training => f.write_str("training"),
            Selection::Named(name) => write!(f, "set:{name}"),
            Selection::Ids(ids) => {
                let list: Vec<String> = ids.iter().map(|id| id.to_string()).collect();
                write!(f, "ids:{}", list.join(","))
            }
            Selection::Ticks { after, upto } => write!(f, "ticks:{after}..{upto}"),
        }
    }
}

/// Parses `window`, `previous-window`, `training`, `set:NAME`, `ids:1,2,3`
/// or `ticks:AFTER..UPTO`.
impl std::str::FromStr for Selection {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoreError::InvalidArgument(format!("unrecognised selection {s:?}"));
        Ok(match s {
            "window" => Selection::Window,
            "previous-window" => Selection::PreviousWindow,
            "training" => Selection::Training,
            _ => match s.split_once(':').ok_or_else(bad)? {
                ("set", name) if !name.is_empty() => Selection::Named(name.to_string()),
                ("ids", list) => Selection::Ids(
                    list.split(',')
                        .filter(|x| !x.is_empty())
                        .map(|x| x.trim().parse::<u64>().map(SampleId).map_err(|_| bad()))
                        .collect::<Result<_>>()?,
                ),
                ("ticks", range) => {
                    let (a, b) = range.split_once("..").ok_or_else(bad)?;
                    Selection::Ticks {
                        after: a.trim().parse().map_err(|_| bad())?,
                        upto: b.trim().parse().map_err(|_| bad())?,
                    }
                }
                _ => return Err(bad()),
            },
        })
    }
}

/// What one stream advance did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvanceReport {
    pub ids: Vec<SampleId>,
    pub drift_points: Vec<DriftPoint>,
    pub new_components: Vec<NewComponentsCreated>,
    pub firm: usize,
    pub provisional: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformancePair {
    pub current: PerformanceSummary,
    /// The model in place before the latest adaptation, when there was one.
    pub previous: Option<PerformanceSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamSession {
    pub dataset: Dataset,
    pub training_ids: BTreeSet<SampleId>,
    pub window: SlidingWindow,
    pub gmm: GmmState,
    pub drift_series: Vec<DriftPoint>,
    pub projection: Option<ProjectionSolution>,
    /// Whether samples arrived or components changed since the last solve.
    pub projection_stale: bool,
    pub learners: Learners,
    pub ensemble: EnsembleModel,
    pub previous_ensemble: Option<EnsembleModel>,
    pub samples_of_interest: BTreeMap<String, BTreeSet<SampleId>>,
    pub config: SessionConfig,
    next_learner: u32,
}

#[derive(Serialize, Deserialize)]
struct SessionDocument<S> {
    schema: String,
    revision: u64,
    session: S,
}

impl StreamSession {
    /// Fits the mixture on the training rows and streams any later rows in.
    pub fn create(dataset: Dataset, config: SessionConfig) -> Result<StreamSession> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(CoreError::InvalidArgument("dataset has no rows".into()));
        }
        let cut = config.training_until.unwrap_or(Tick::MAX);
        let n_train = dataset.ticks().partition_point(|t| *t <= cut);
        if n_train == 0 {
            return Err(CoreError::InvalidArgument("no rows fall into the training range".into()));
        }
        let mut training = Dataset::new(dataset.feature_names().to_vec());
        let mut rest = Vec::new();
        for (i, id) in dataset.ids().iter().enumerate() {
            let row = Row {
                id: Some(*id),
                tick: dataset.ticks()[i],
                values: dataset.rows()[i].clone(),
                label: dataset.labels()[i],
            };
            if i < n_train {
                training.push(row)?;
            } else {
                rest.push(row);
            }
        }
        let mut gmm_config = config.gmm();
        let (lo, hi) = gmm_config.k_range;
        gmm_config.k_range = (lo.min(n_train), hi.min(n_train));
        let points: Vec<(SampleId, &[f64])> = training
            .ids()
            .iter()
            .zip(training.rows())
            .map(|(id, r)| (*id, r.as_slice()))
            .collect();
        let last = training.last_tick().expect("non-empty");
        let gmm = gmm::offline_fit(&points, &gmm_config, last)?;
        let mut session = StreamSession {
            training_ids: training.ids().iter().copied().collect(),
            dataset: training,
            window: SlidingWindow::new(config.window_length, last)?,
            gmm,
            drift_series: Vec::new(),
            projection: None,
            projection_stale: true,
            learners: BTreeMap::new(),
            ensemble: EnsembleModel::new(&config.ensemble),
            previous_ensemble: None,
            samples_of_interest: BTreeMap::new(),
            config,
            next_learner: 0,
        };
        if !rest.is_empty() {
            session.advance(rest, None)?;
        }
        Ok(session)
    }

    pub fn end_tick(&self) -> Tick {
        self.window.end_tick()
    }

    /// Appends rows tick batch by tick batch, then optionally slides the
    /// window further to `advance_to`.
    ///
    /// Rows sharing a tick form one batch and yield one drift point. A batch
    /// may not reuse a tick that already has a drift point.
    pub fn advance(&mut self, mut rows: Vec<Row>, advance_to: Option<Tick>) -> Result<AdvanceReport> {
        rows.sort_by_key(|r| r.tick);
        let end = self.end_tick();
        let closed = self.drift_series.last().map(|p| p.tick);
        for r in &rows {
            if r.tick < end || Some(r.tick) == closed.filter(|c| *c >= r.tick) {
                return Err(CoreError::OutOfOrder { tick: r.tick, end_tick: end });
            }
            if r.values.len() != self.dataset.dim() {
                return Err(CoreError::Dimension {
                    expected: self.dataset.dim(),
                    got: r.values.len(),
                });
            }
            if let Some(pos) = r.values.iter().position(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite {
                    row: self.dataset.len() + 1,
                    column: self.dataset.feature_names()[pos].clone(),
                });
            }
            if r.id.is_some_and(|id| self.dataset.contains(id)) {
                return Err(CoreError::InvalidArgument(format!(
                    "duplicate sample id {}",
                    r.id.expect("checked")
                )));
            }
        }
        let mut seen = BTreeSet::new();
        if let Some(id) = rows.iter().filter_map(|r| r.id).find(|id| !seen.insert(*id)) {
            return Err(CoreError::InvalidArgument(format!("duplicate sample id {id}")));
        }
        // fix fresh ids up front so they cannot collide with explicit ones
        let first = seen.last().map_or(0, |id| id.0 + 1).max(self.dataset.next_id().0);
        for (next, r) in (first..).zip(rows.iter_mut().filter(|r| r.id.is_none())) {
            r.id = Some(SampleId(next));
        }
        if let Some(t) = advance_to {
            let newest = rows.last().map_or(end, |r| r.tick);
            if t < newest {
                return Err(CoreError::OutOfOrder { tick: t, end_tick: newest });
            }
        }

        let mut report = AdvanceReport::default();
        let mut i = 0;
        while i < rows.len() {
            let tick = rows[i].tick;
            let j = i + rows[i..].iter().take_while(|r| r.tick == tick).count();
            self.apply_batch(&rows[i..j], &mut report)?;
            i = j;
        }
        if let Some(t) = advance_to {
            for gone in self.window.advance_to(t)? {
                self.gmm.expire_pending(gone);
            }
        }
        if !report.ids.is_empty() {
            self.projection_stale = true;
        }
        Ok(report)
    }

    fn apply_batch(&mut self, batch: &[Row], report: &mut AdvanceReport) -> Result<()> {
        let tick = batch[0].tick;
        for gone in self.window.advance_to(tick)? {
            self.gmm.expire_pending(gone);
        }
        for row in batch {
            let id = self.dataset.push(row.clone())?;
            self.window.push(id, tick)?;
            let outcome = self.gmm.online_assign(id, &row.values, tick)?;
            if outcome.firm {
                report.firm += 1;
            } else {
                report.provisional += 1;
            }
            if let Some(ev) = outcome.created {
                report.new_components.push(ev);
            }
            report.ids.push(id);
        }
        if let Some(point) = self.drift_at(tick) {
            self.drift_series.push(point.clone());
            report.drift_points.push(point);
        }
        Ok(())
    }

    fn label_of(&self, id: SampleId) -> ComponentId {
        self.gmm
            .assignment(id)
            .map(|a| a.component)
            .expect("every ingested sample has an assignment")
    }

    fn labeled(&self, ids: impl IntoIterator<Item = SampleId>) -> Vec<Labeled<'_>> {
        ids.into_iter()
            .map(|id| (self.label_of(id), self.dataset.values(id).expect("known sample")))
            .collect()
    }

    /// Drift breakdown of the current window under the current clustering.
    pub fn current_drift(&self) -> Option<DriftBreakdown> {
        let window = self.labeled(self.window.member_ids().iter().copied());
        let training = self.labeled(self.training_ids.iter().copied());
        energy::drift_degree(&window, &training, &self.config.energy)
    }

    fn drift_at(&self, tick: Tick) -> Option<DriftPoint> {
        let window = self.labeled(self.window.member_ids().iter().copied());
        let training = self.labeled(self.training_ids.iter().copied());
        let b = energy::drift_degree(&window, &training, &self.config.energy)?;
        let per_feature = energy::drift_per_feature(&window, &training, self.dataset.feature_names(), &self.config.energy);
        Some(DriftPoint {
            tick,
            overall: b.overall,
            per_feature,
            per_cluster: b.per_cluster,
        })
    }

    /// Ticks where the drift degree crosses the alert threshold upward.
    pub fn alert_ticks(&self) -> Vec<Tick> {
        let th = self.config.drift_alert_threshold;
        let mut prev = f64::NEG_INFINITY;
        let mut out = Vec::new();
        for p in &self.drift_series {
            if p.overall >= th && prev < th {
                out.push(p.tick);
            }
            prev = p.overall;
        }
        out
    }

    pub fn merge_components(&mut self, ids: &[ComponentId]) -> Result<ComponentId> {
        let merged = self.gmm.merge_components(ids, self.end_tick())?;
        self.projection_stale = true;
        Ok(merged)
    }

    pub fn resolve(&self, selection: &Selection) -> Result<Vec<SampleId>> {
        let len = self.window.length();
        let end = self.end_tick();
        let ids = match selection {
            Selection::Window => self.window.member_ids().to_vec(),
            Selection::PreviousWindow => self
                .dataset
                .ids_in_ticks(end - 2 * len, end - len)
                .filter(|id| !self.training_ids.contains(id))
                .collect(),
            Selection::Training => self.training_ids.iter().copied().collect(),
            Selection::Named(name) => self
                .samples_of_interest
                .get(name)
                .ok_or_else(|| CoreError::UnknownSampleSet(name.clone()))?
                .iter()
                .copied()
                .collect(),
            Selection::Ids(ids) => {
                for id in ids {
                    if !self.dataset.contains(*id) {
                        return Err(CoreError::UnknownSample(*id));
                    }
                }
                ids.clone()
            }
            Selection::Ticks { after, upto } => self.dataset.ids_in_ticks(*after, *upto).collect(),
        };
        Ok(ids)
    }

    /// Samples the next projection covers: the most recent rows up to the cap.
    pub fn projection_sample_ids(&self) -> Vec<SampleId> {
        let ids = self.dataset.ids();
        let from = ids.len().saturating_sub(self.config.projection.max_points);
        ids[from..].to_vec()
    }

    /// Snapshot of everything a solve needs, so it can run off the session.
    pub fn projection_problem(&self) -> Result<ProjectionProblem> {
        let ids = self.projection_sample_ids();
        let samples: Vec<(SampleId, &[f64], ComponentId)> = ids
            .iter()
            .map(|id| Ok((*id, self.dataset.values(*id)?, self.label_of(*id))))
            .collect::<Result<_>>()?;
        let current: BTreeSet<ComponentId> = self.gmm.component_ids().into_iter().collect();
        let keep = self
            .projection
            .as_ref()
            .and_then(|p| projection::reusable_anchors(p, &current));
        ProjectionProblem::build(
            self.end_tick(),
            &samples,
            &self.gmm.components,
            self.projection.as_ref(),
            keep.as_deref(),
            &self.config.projection,
        )
    }

    /// Installs a solution computed from [`Self::projection_problem`].
    pub fn install_projection(&mut self, solution: ProjectionSolution) {
        // rows that arrived while the solve ran leave the layout stale
        self.projection_stale = solution.tick < self.end_tick();
        self.projection = Some(solution);
    }

    pub fn solve_projection(&mut self) -> Result<&ProjectionSolution> {
        let problem = self.projection_problem()?;
        let solution = projection::solve(&problem, &self.config.projection)?;
        self.install_projection(solution);
        Ok(self.projection.as_ref().expect("just installed"))
    }

    fn projected(&self, ids: &[SampleId]) -> Result<Vec<[f64; 2]>> {
        let sol = self.projection.as_ref().ok_or(CoreError::NoProjection)?;
        let pos = sol.coords_by_id();
        Ok(ids.iter().filter_map(|id| pos.get(id).copied()).collect())
    }

    /// Signed density difference between two selections in the latest layout.
    /// Samples missing from the layout are skipped.
    pub fn density_diff(&self, newer: &Selection, older: &Selection) -> Result<DensityDiff> {
        let a = self.projected(&self.resolve(newer)?)?;
        let b = self.projected(&self.resolve(older)?)?;
        density::diff_batches(&a, &b, self.config.density_resolution, self.config.density_smoothing)
    }

    fn labeled_rows(&self, ids: &[SampleId]) -> Result<Vec<(&[f64], i64)>> {
        ids.iter()
            .map(|id| {
                let label = self.dataset.label(*id)?.ok_or(CoreError::Unlabeled(*id))?;
                Ok((self.dataset.values(*id)?, label))
            })
            .collect()
    }

    pub fn train_learner(&mut self, ids: &[SampleId], hyper: Option<LogisticConfig>) -> Result<LearnerId> {
        let unique: BTreeSet<SampleId> = ids.iter().copied().collect();
        if unique.is_empty() {
            return Err(CoreError::InvalidArgument("a learner needs at least one sample".into()));
        }
        let mut samples = Vec::with_capacity(unique.len());
        for id in &unique {
            let values = self.dataset.values(*id)?;
            let label = self.dataset.label(*id)?.ok_or(CoreError::Unlabeled(*id))?;
            samples.push((*id, values, label, self.label_of(*id)));
        }
        let config = hyper.unwrap_or_else(|| self.config.ensemble.learner.clone());
        let id = LearnerId(self.next_learner);
        let learner = BaseLearner::train(id, &samples, &config, self.end_tick())?;
        self.next_learner += 1;
        self.learners.insert(id, learner);
        Ok(id)
    }

    /// Chooses the ensemble members; missing weights mean uniform weighting.
    pub fn set_ensemble(&mut self, ids: &[LearnerId], weights: Option<&[f64]>) -> Result<()> {
        let mut next = self.ensemble.clone();
        next.set_members(&self.learners, ids, weights)?;
        if !self.ensemble.members.is_empty() {
            self.previous_ensemble = Some(self.ensemble.clone());
        }
        self.ensemble = next;
        Ok(())
    }

    /// Runs one weighted-majority update on a labeled selection.
    pub fn update_ensemble(&mut self, selection: &Selection) -> Result<Vec<LearnerId>> {
        if self.ensemble.members.is_empty() {
            return Err(CoreError::EmptyEnsemble);
        }
        let end = self.end_tick();
        if let Some(last) = self.ensemble.last_update_tick {
            if end - last < self.ensemble.update_period {
                return Err(CoreError::TooSoon {
                    last,
                    period: self.ensemble.update_period,
                });
            }
        }
        let ids = self.resolve(selection)?;
        if ids.is_empty() {
            return Err(CoreError::InvalidArgument("update selection is empty".into()));
        }
        let batch = self.labeled_rows(&ids)?;
        let mut next = self.ensemble.clone();
        let pruned = next.dwm_update(&self.learners, &batch)?;
        next.last_update_tick = Some(end);
        self.previous_ensemble = Some(std::mem::replace(&mut self.ensemble, next));
        Ok(pruned)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.ensemble.predict(&self.learners, x)
    }

    pub fn performance(&self, selection: &Selection, bins: usize, compare: bool) -> Result<PerformancePair> {
        let ids = self.resolve(selection)?;
        let batch = self.labeled_rows(&ids)?;
        let current = ensemble::performance_summary(&self.ensemble, &self.learners, &batch, bins)?;
        let previous = match (&self.previous_ensemble, compare) {
            (Some(prev), true) => Some(ensemble::performance_summary(prev, &self.learners, &batch, bins)?),
            _ => None,
        };
        Ok(PerformancePair { current, previous })
    }

    pub fn model_distribution(&self, ids: &[SampleId]) -> Result<BTreeMap<LearnerId, f64>> {
        let xs: Vec<&[f64]> = ids.iter().map(|id| self.dataset.values(*id)).collect::<Result<_>>()?;
        self.ensemble.model_distribution(&self.learners, &xs)
    }

    pub fn add_samples_of_interest(&mut self, name: &str, ids: &[SampleId]) -> Result<()> {
        if name.is_empty() {
            return Err(CoreError::InvalidArgument("sample set needs a name".into()));
        }
        if ids.is_empty() {
            return Err(CoreError::InvalidArgument("sample set is empty".into()));
        }
        for id in ids {
            if !self.dataset.contains(*id) {
                return Err(CoreError::UnknownSample(*id));
            }
        }
        self.samples_of_interest.insert(name.to_string(), ids.iter().copied().collect());
        Ok(())
    }

    /// Serializes the session with its revision under the schema tag.
    pub fn to_document(&self, revision: u64) -> Result<String> {
        Ok(serde_json::to_string(&SessionDocument {
            schema: SESSION_SCHEMA.to_string(),
            revision,
            session: self,
        })?)
    }

    pub fn from_document(text: &str) -> Result<(u64, StreamSession)> {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.schema != SESSION_SCHEMA {
            return Err(CoreError::SchemaVersion(header.schema));
        }
        let doc: SessionDocument<StreamSession> = serde_json::from_str(text)?;
        Ok((doc.revision, doc.session))
    }
}
