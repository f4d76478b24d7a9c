//! Incremental Gaussian mixture: an offline BIC-selected fit on the training
//! set, then online assignment of stream samples.
//!
//! A stream sample inside the high-density ellipsoid of some component
//! (squared Mahalanobis distance below the chi-square quantile at the
//! configured confidence) is firmly assigned and folded into that component's
//! moments. Anything else is provisionally assigned to the densest component
//! and buffered; once the buffer is large enough, a fresh mixture is fitted to
//! the buffered samples and its components join the model.

mod component;
pub mod em;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub use component::GaussianComponent;
pub use em::{BicSelection, EmConfig, MixtureFit};

use crate::{ComponentId, CoreError, Result, SampleId, Tick};

/// Size of the pending buffer that triggers a new-component fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BufferThreshold {
    /// Half of the average component size, at least one.
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for BufferThreshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BufferThreshold::Auto => s.serialize_str("auto"),
            BufferThreshold::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BufferThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(BufferThreshold::Fixed(n as usize)),
            Raw::Str(s) if s == "auto" => Ok(BufferThreshold::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or an integer, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    /// Inclusive range of component counts tried by the offline fit.
    pub k_range: (usize, usize),
    pub assign_confidence: f64,
    pub buffer_threshold: BufferThreshold,
    /// Largest component count tried when fitting the pending buffer.
    pub buffer_k_max: usize,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k_range: (1, 10),
            assign_confidence: 0.95,
            buffer_threshold: BufferThreshold::Auto,
            buffer_k_max: 3,
            em: EmConfig::default(),
            seed: 17,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.k_range;
        if lo == 0 || lo > hi || hi > 20 {
            return Err(CoreError::InvalidArgument(format!(
                "k_range must satisfy 1 <= min <= max <= 20, got {lo}..={hi}"
            )));
        }
        if !(self.assign_confidence > 0.0 && self.assign_confidence < 1.0) {
            return Err(CoreError::InvalidArgument(
                "assign_confidence must lie in (0, 1)".into(),
            ));
        }
        if self.buffer_k_max == 0 {
            return Err(CoreError::InvalidArgument("buffer_k_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Where a sample currently belongs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub component: ComponentId,
    pub firm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSample {
    pub values: Vec<f64>,
    pub tick: Tick,
}

/// Components appended after fitting the pending buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewComponentsCreated {
    pub component_ids: Vec<ComponentId>,
    /// New firm assignment of every sample that was in the buffer.
    pub reassigned: Vec<(SampleId, ComponentId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentOutcome {
    pub component: ComponentId,
    pub firm: bool,
    pub created: Option<NewComponentsCreated>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmState {
    pub components: Vec<GaussianComponent>,
    pub pending_buffer: BTreeMap<SampleId, PendingSample>,
    pub assignments: BTreeMap<SampleId, Assignment>,
    pub config: GmmConfig,
    /// Smallest eigenvalue any covariance may have.
    pub reg_floor: f64,
    /// Chi-square quantile at `assign_confidence` with `dim` degrees of freedom.
    pub membership_radius_sq: f64,
    /// Ids of merged-away components and the component they now live in.
    #[serde(default)]
    pub merged_into: BTreeMap<ComponentId, ComponentId>,
    dim: usize,
    next_id: u32,
}

/// Chi-square quantile used as the squared Mahalanobis membership radius.
pub fn membership_radius_sq(dim: usize, confidence: f64) -> f64 {
    ChiSquared::new(dim as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(confidence)
}

/// Offline fit on training samples with BIC-selected component count.
///
/// Components are labelled by argmax responsibility; components that end up
/// with no hard members are dropped.
pub fn offline_fit<P: AsRef<[f64]>>(
    samples: &[(SampleId, P)],
    config: &GmmConfig,
    tick: Tick,
) -> Result<GmmState> {
    config.validate()?;
    if samples.is_empty() {
        return Err(CoreError::InvalidArgument("offline fit needs samples".into()));
    }
    let points: Vec<&[f64]> = samples.iter().map(|(_, p)| p.as_ref()).collect();
    let (k_min, k_max) = config.k_range;
    if points.len() < k_max {
        return Err(CoreError::InvalidArgument(format!(
            "{} training samples cannot support up to {k_max} components",
            points.len()
        )));
    }
    let dim = points[0].len();
    let floor = em::regularization_floor(&points);
    let selection = em::select_by_bic(&points, k_min, k_max, floor, &config.em, config.seed)?;
    let mut state = GmmState {
        components: Vec::new(),
        pending_buffer: BTreeMap::new(),
        assignments: BTreeMap::new(),
        config: config.clone(),
        reg_floor: floor,
        membership_radius_sq: membership_radius_sq(dim, config.assign_confidence),
        merged_into: BTreeMap::new(),
        dim,
        next_id: 0,
    };
    let ids: Vec<SampleId> = samples.iter().map(|(id, _)| *id).collect();
    state.append_fit(&selection.best, &ids, tick);
    Ok(state)
}

impl GmmState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, id: ComponentId) -> Option<&GaussianComponent> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn component_ids(&self) -> Vec<ComponentId> {
        self.components.iter().map(|c| c.id).collect()
    }

    pub fn assignment(&self, id: SampleId) -> Option<Assignment> {
        self.assignments.get(&id).copied()
    }

    /// Resolves a possibly merged-away id to the live component holding it.
    pub fn resolve(&self, mut id: ComponentId) -> Option<ComponentId> {
        while let Some(next) = self.merged_into.get(&id) {
            id = *next;
        }
        self.component(id).map(|c| c.id)
    }

    pub fn buffer_threshold(&self) -> usize {
        match self.config.buffer_threshold {
            BufferThreshold::Fixed(n) => n.max(1),
            BufferThreshold::Auto => {
                if self.components.is_empty() {
                    return 1;
                }
                let total: usize = self.components.iter().map(|c| c.member_count).sum();
                (total / self.components.len() / 2).max(1)
            }
        }
    }

    /// Squared Mahalanobis distance of `x` to every component, in component order.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.mahalanobis_sq(x)).collect()
    }

    fn alloc_id(&mut self) -> ComponentId {
        let id = ComponentId(self.next_id);
        self.next_id += 1;
        id
    }

    fn renormalize_weights(&mut self) {
        let total: usize = self.components.iter().map(|c| c.member_count).sum();
        if total == 0 {
            return;
        }
        for c in &mut self.components {
            c.weight = c.member_count as f64 / total as f64;
        }
    }

    /// Adds the components of `fit` with fresh ids and firm hard assignments.
    fn append_fit(&mut self, fit: &MixtureFit, ids: &[SampleId], tick: Tick) -> Vec<(SampleId, ComponentId)> {
        let mut members: Vec<BTreeSet<SampleId>> = vec![BTreeSet::new(); fit.k()];
        for (id, label) in ids.iter().zip(&fit.hard_labels) {
            members[*label].insert(*id);
        }
        let mut reassigned = Vec::with_capacity(ids.len());
        let mut local_to_id = vec![None; fit.k()];
        for (c, m) in members.into_iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let id = self.alloc_id();
            local_to_id[c] = Some(id);
            self.components.push(GaussianComponent::from_moments(
                id,
                fit.means[c].clone(),
                &fit.covariances[c],
                m,
                tick,
                self.reg_floor,
            ));
        }
        for (sid, label) in ids.iter().zip(&fit.hard_labels) {
            let component = local_to_id[*label].expect("non-empty component");
            self.assignments.insert(
                *sid,
                Assignment {
                    component,
                    firm: true,
                },
            );
            reassigned.push((*sid, component));
        }
        self.renormalize_weights();
        reassigned
    }

    /// Index of the densest component overall, and of the densest component
    /// whose membership ellipsoid contains `x`.
    fn classify(&self, x: &[f64]) -> (usize, Option<usize>) {
        let mut best = (0, f64::NEG_INFINITY);
        let mut best_inside: Option<(usize, f64)> = None;
        for (i, c) in self.components.iter().enumerate() {
            let m2 = c.mahalanobis_sq(x);
            let ld = c.log_density(x);
            if ld > best.1 {
                best = (i, ld);
            }
            if m2 <= self.membership_radius_sq && best_inside.is_none_or(|(_, b)| ld > b) {
                best_inside = Some((i, ld));
            }
        }
        (best.0, best_inside.map(|(i, _)| i))
    }

    /// Assigns one stream sample; may fit new components from the buffer.
    pub fn online_assign(&mut self, id: SampleId, x: &[f64], tick: Tick) -> Result<AssignmentOutcome> {
        if x.len() != self.dim {
            return Err(CoreError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.components.is_empty() {
            return Err(CoreError::InvalidArgument("mixture has no components".into()));
        }
        let (densest, inside) = self.classify(x);
        if let Some(i) = inside {
            let floor = self.reg_floor;
            let c = &mut self.components[i];
            c.absorb(id, x, floor);
            let component = c.id;
            self.assignments.insert(id, Assignment { component, firm: true });
            self.renormalize_weights();
            return Ok(AssignmentOutcome {
                component,
                firm: true,
                created: None,
            });
        }
        let component = self.components[densest].id;
        self.assignments.insert(id, Assignment { component, firm: false });
        self.pending_buffer.insert(
            id,
            PendingSample {
                values: x.to_vec(),
                tick,
            },
        );
        let created = if self.pending_buffer.len() >= self.buffer_threshold() {
            Some(self.fit_buffer(tick)?)
        } else {
            None
        };
        let (component, firm) = match &created {
            Some(ev) => {
                let c = ev
                    .reassigned
                    .iter()
                    .find(|(s, _)| *s == id)
                    .map(|(_, c)| *c)
                    .unwrap_or(component);
                (c, true)
            }
            None => (component, false),
        };
        Ok(AssignmentOutcome {
            component,
            firm,
            created,
        })
    }

    fn fit_buffer(&mut self, tick: Tick) -> Result<NewComponentsCreated> {
        let buffered = std::mem::take(&mut self.pending_buffer);
        let ids: Vec<SampleId> = buffered.keys().copied().collect();
        let points: Vec<&[f64]> = buffered.values().map(|p| p.values.as_slice()).collect();
        let k_max = self.config.buffer_k_max.min(points.len());
        let selection = em::select_by_bic(
            &points,
            1,
            k_max,
            self.reg_floor,
            &self.config.em,
            self.config.seed ^ tick as u64,
        )?;
        let before = self.components.len();
        let reassigned = self.append_fit(&selection.best, &ids, tick);
        let component_ids = self.components[before..].iter().map(|c| c.id).collect();
        Ok(NewComponentsCreated {
            component_ids,
            reassigned,
        })
    }

    /// Drops a sample from the pending buffer; it stays provisionally assigned.
    pub fn expire_pending(&mut self, id: SampleId) -> bool {
        self.pending_buffer.remove(&id).is_some()
    }

    pub fn provisional_count(&self) -> usize {
        self.assignments.values().filter(|a| !a.firm).count()
    }

    /// Pools the given components into one and re-evaluates buffered samples.
    ///
    /// The merged component keeps the smallest id. Merging ids that already
    /// resolve to a single component is a no-op.
    pub fn merge_components(&mut self, ids: &[ComponentId], tick: Tick) -> Result<ComponentId> {
        let distinct: BTreeSet<ComponentId> = ids.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(CoreError::InvalidArgument(
                "merging needs at least two component ids".into(),
            ));
        }
        let mut live = BTreeSet::new();
        for id in &distinct {
            live.insert(self.resolve(*id).ok_or(CoreError::UnknownComponent(*id))?);
        }
        let target = *live.iter().next().expect("non-empty");
        if live.len() == 1 {
            return Ok(target);
        }
        let parts: Vec<&GaussianComponent> =
            self.components.iter().filter(|c| live.contains(&c.id)).collect();
        let created = parts.iter().map(|c| c.created_tick).min().unwrap_or(tick);
        let merged = GaussianComponent::pooled(target, &parts, created, self.reg_floor);
        let pos = self
            .components
            .iter()
            .position(|c| c.id == target)
            .expect("target is live");
        self.components[pos] = merged;
        self.components.retain(|c| c.id == target || !live.contains(&c.id));
        for gone in live.iter().filter(|c| **c != target) {
            self.merged_into.insert(*gone, target);
        }
        for a in self.assignments.values_mut() {
            if live.contains(&a.component) {
                a.component = target;
            }
        }
        self.renormalize_weights();
        self.reevaluate_pending();
        Ok(target)
    }

    /// One assignment pass over the buffer without triggering a buffer fit.
    fn reevaluate_pending(&mut self) {
        let ids: Vec<SampleId> = self.pending_buffer.keys().copied().collect();
        for id in ids {
            let x = self.pending_buffer[&id].values.clone();
            let (densest, inside) = self.classify(&x);
            if let Some(i) = inside {
                let floor = self.reg_floor;
                self.components[i].absorb(id, &x, floor);
                let component = self.components[i].id;
                self.assignments.insert(id, Assignment { component, firm: true });
                self.pending_buffer.remove(&id);
            } else {
                let component = self.components[densest].id;
                self.assignments.insert(id, Assignment { component, firm: false });
            }
        }
        self.renormalize_weights();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blob(rng: &mut ChaCha8Rng, n: usize, center: [f64; 2], start: u64) -> Vec<(SampleId, Vec<f64>)> {
        let g = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                (
                    SampleId(start + i as u64),
                    vec![center[0] + g.sample(rng), center[1] + g.sample(rng)],
                )
            })
            .collect()
    }

    fn two_cluster_state() -> GmmState {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = blob(&mut rng, 150, [0.0, 0.0], 0);
        pts.extend(blob(&mut rng, 150, [12.0, 0.0], 150));
        let cfg = GmmConfig {
            k_range: (1, 4),
            ..GmmConfig::default()
        };
        offline_fit(&pts, &cfg, 0).unwrap()
    }

    fn check_invariants(s: &GmmState) {
        let d = s.dim();
        for c in &s.components {
            assert_eq!(c.member_count, c.member_ids.len());
            for i in 0..d {
                for j in 0..d {
                    assert!((c.covariance[i * d + j] - c.covariance[j * d + i]).abs() < 1e-9);
                }
            }
            assert!(linalg::min_eigenvalue(&c.covariance, d) >= s.reg_floor * (1.0 - 1e-9));
        }
        let members: usize = s.components.iter().map(|c| c.member_count).sum();
        assert_eq!(members + s.provisional_count(), s.assignments.len());
        assert!(s.pending_buffer.len() <= s.provisional_count());
    }

    #[test]
    fn offline_fit_finds_two_clusters() {
        let s = two_cluster_state();
        assert_eq!(s.components.len(), 2);
        check_invariants(&s);
        let w: f64 = s.components.iter().map(|c| c.weight).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_at_mean_is_firm() {
        let mut s = two_cluster_state();
        let c = s.components[1].clone();
        let before = c.member_count;
        let out = s.online_assign(SampleId(10_000), &c.mean, 1).unwrap();
        assert!(out.firm);
        assert_eq!(out.component, c.id);
        assert_eq!(s.component(c.id).unwrap().member_count, before + 1);
        assert_eq!(s.components.len(), 2);
        check_invariants(&s);
    }

    #[test]
    fn far_cluster_creates_components_once() {
        let mut s = two_cluster_state();
        s.config.buffer_threshold = BufferThreshold::Fixed(10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let far = blob(&mut rng, 10, [0.0, 60.0], 5000);
        let mut events = Vec::new();
        for (id, x) in &far {
            let out = s.online_assign(*id, x, 1).unwrap();
            if let Some(ev) = out.created {
                events.push(ev);
            }
        }
        assert_eq!(events.len(), 1);
        let ev = &events[0];
        assert!(!ev.component_ids.is_empty());
        let (lo_x, hi_x) = far.iter().fold((f64::MAX, f64::MIN), |(a, b), (_, p)| (a.min(p[0]), b.max(p[0])));
        let (lo_y, hi_y) = far.iter().fold((f64::MAX, f64::MIN), |(a, b), (_, p)| (a.min(p[1]), b.max(p[1])));
        for id in &ev.component_ids {
            let m = &s.component(*id).unwrap().mean;
            assert!(m[0] >= lo_x && m[0] <= hi_x && m[1] >= lo_y && m[1] <= hi_y);
        }
        assert!(s.pending_buffer.is_empty());
        for (id, _) in &far {
            assert!(s.assignment(*id).unwrap().firm);
        }
        check_invariants(&s);
    }

    #[test]
    fn auto_threshold_is_half_mean_size() {
        let s = two_cluster_state();
        assert_eq!(s.buffer_threshold(), 75);
    }

    #[test]
    fn online_assign_is_deterministic() {
        let mut a = two_cluster_state();
        let mut b = a.clone();
        for i in 0..50 {
            let x = [i as f64 * 0.7 - 10.0, (i as f64).sin() * 8.0];
            let oa = a.online_assign(SampleId(9000 + i), &x, 1).unwrap();
            let ob = b.online_assign(SampleId(9000 + i), &x, 1).unwrap();
            assert_eq!(oa, ob);
        }
        check_invariants(&a);
    }

    #[test]
    fn merge_pools_members() {
        let mut s = two_cluster_state();
        let (a, b) = (s.components[0].clone(), s.components[1].clone());
        let merged = s.merge_components(&[a.id, b.id], 2).unwrap();
        assert_eq!(s.components.len(), 1);
        let m = s.component(merged).unwrap();
        assert_eq!(m.member_count, a.member_count + b.member_count);
        for i in 0..2 {
            let expect = (a.member_count as f64 * a.mean[i] + b.member_count as f64 * b.mean[i])
                / m.member_count as f64;
            assert!((m.mean[i] - expect).abs() < 1e-9);
        }
        check_invariants(&s);
        // idempotent on an already merged set
        assert_eq!(s.merge_components(&[a.id, b.id], 3).unwrap(), merged);
        assert_eq!(s.components.len(), 1);
    }

    #[test]
    fn merge_rejects_bad_input() {
        let mut s = two_cluster_state();
        let id = s.components[0].id;
        assert!(matches!(
            s.merge_components(&[id], 0),
            Err(CoreError::InvalidArgument(_))
        ));
        assert!(matches!(
            s.merge_components(&[id, ComponentId(99)], 0),
            Err(CoreError::UnknownComponent(ComponentId(99)))
        ));
    }

    #[test]
    fn merge_reevaluates_pending() {
        let mut s = two_cluster_state();
        s.config.buffer_threshold = BufferThreshold::Fixed(1000);
        // a point between the clusters: outside both ellipsoids
        let out = s.online_assign(SampleId(7000), &[6.0, 0.0], 1).unwrap();
        assert!(!out.firm);
        let ids = s.component_ids();
        s.merge_components(&ids, 2).unwrap();
        // the pooled component is wide enough to contain the midpoint
        assert!(s.assignment(SampleId(7000)).unwrap().firm);
        assert!(s.pending_buffer.is_empty());
        check_invariants(&s);
    }

    #[test]
    fn buffer_threshold_serde() {
        let auto: BufferThreshold = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(auto, BufferThreshold::Auto);
        let fixed: BufferThreshold = serde_json::from_str("12").unwrap();
        assert_eq!(fixed, BufferThreshold::Fixed(12));
        assert_eq!(serde_json::to_string(&BufferThreshold::Auto).unwrap(), "\"auto\"");
        assert!(serde_json::from_str::<BufferThreshold>("\"half\"").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn invariants_hold_under_streaming(
                xs in prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 1..80),
                threshold in 1usize..20,
            ) {
                let mut s = two_cluster_state();
                s.config.buffer_threshold = BufferThreshold::Fixed(threshold);
                for (i, (a, b)) in xs.iter().enumerate() {
                    s.online_assign(SampleId(10_000 + i as u64), &[*a, *b], 1).unwrap();
                }
                check_invariants(&s);
            }
        }
    }
}
