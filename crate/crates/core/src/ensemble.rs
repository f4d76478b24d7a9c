//! Base learners and a dynamically weighted majority ensemble.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{ComponentId, CoreError, LearnerId, Result, SampleId, Tick};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    pub epochs: usize,
    pub step: f64,
    /// Step at epoch `e` is `step / (1 + decay * e)`.
    pub decay: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 500,
            step: 0.1,
            decay: 0.01,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.step > 0.0 && self.decay >= 0.0) || self.epochs == 0 {
            return Err(CoreError::InvalidArgument(
                "learner hyperparameters need l2 >= 0, step > 0, decay >= 0, epochs >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Logistic {
        classes: Vec<i64>,
        /// One row of `d` weights per class.
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        feature_mean: Vec<f64>,
        feature_scale: Vec<f64>,
    },
    /// Fallback for single-class training data.
    Constant { class: i64 },
}

impl Classifier {
    pub fn fit(xs: &[&[f64]], ys: &[i64], config: &LogisticConfig) -> Result<Classifier> {
        config.validate()?;
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(CoreError::InvalidArgument("training set is empty".into()));
        }
        let classes: Vec<i64> = ys.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if classes.len() == 1 {
            return Ok(Classifier::Constant { class: classes[0] });
        }
        let d = xs[0].len();
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(*x) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for x in xs {
            for j in 0..d {
                scale[j] += (x[j] - mean[j]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| (0..d).map(|j| (x[j] - mean[j]) / scale[j]).collect())
            .collect();
        let target: Vec<usize> = ys
            .iter()
            .map(|y| classes.binary_search(y).expect("class present"))
            .collect();

        let k = classes.len();
        let mut w = vec![vec![0.0; d]; k];
        let mut b = vec![0.0; k];
        let mut probs = vec![0.0; k];
        for epoch in 0..config.epochs {
            let mut gw = vec![vec![0.0; d]; k];
            let mut gb = vec![0.0; k];
            for (zi, &ti) in z.iter().zip(&target) {
                softmax_into(&w, &b, zi, &mut probs);
                for c in 0..k {
                    let err = probs[c] - if c == ti { 1.0 } else { 0.0 };
                    gb[c] += err / n;
                    for j in 0..d {
                        gw[c][j] += err * zi[j] / n;
                    }
                }
            }
            let lr = config.step / (1.0 + config.decay * epoch as f64);
            for c in 0..k {
                b[c] -= lr * gb[c];
                for j in 0..d {
                    w[c][j] -= lr * (gw[c][j] + config.l2 * w[c][j]);
                }
            }
        }
        Ok(Classifier::Logistic {
            classes,
            weights: w,
            bias: b,
            feature_mean: mean,
            feature_scale: scale,
        })
    }

    pub fn classes(&self) -> Vec<i64> {
        match self {
            Classifier::Logistic { classes, .. } => classes.clone(),
            Classifier::Constant { class } => vec![*class],
        }
    }

    /// Class probabilities keyed by class label.
    pub fn probabilities(&self, x: &[f64]) -> BTreeMap<i64, f64> {
        match self {
            Classifier::Constant { class } => BTreeMap::from([(*class, 1.0)]),
            Classifier::Logistic {
                classes,
                weights,
                bias,
                feature_mean,
                feature_scale,
            } => {
                let z: Vec<f64> = x
                    .iter()
                    .zip(feature_mean.iter().zip(feature_scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect();
                let mut p = vec![0.0; classes.len()];
                softmax_into(weights, bias, &z, &mut p);
                classes.iter().copied().zip(p).collect()
            }
        }
    }

    /// Most probable class and its probability; ties go to the smaller class.
    pub fn predict(&self, x: &[f64]) -> (i64, f64) {
        argmax(&self.probabilities(x))
    }
}

fn softmax_into(w: &[Vec<f64>], b: &[f64], z: &[f64], out: &mut [f64]) {
    let mut hi = f64::NEG_INFINITY;
    for c in 0..w.len() {
        out[c] = b[c] + w[c].iter().zip(z).map(|(a, v)| a * v).sum::<f64>();
        hi = hi.max(out[c]);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - hi).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn argmax(p: &BTreeMap<i64, f64>) -> (i64, f64) {
    let mut best = (i64::MAX, f64::NEG_INFINITY);
    for (c, v) in p {
        // BTreeMap iterates classes ascending, so strict > keeps the smallest on ties
        if *v > best.1 {
            best = (*c, *v);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseLearner {
    pub id: LearnerId,
    pub training_ids: BTreeSet<SampleId>,
    pub component_histogram: BTreeMap<ComponentId, f64>,
    pub model: Classifier,
    pub created_tick: Tick,
}

impl BaseLearner {
    /// Trains a learner; `samples` pairs each id with its features, label and component.
    pub fn train(
        id: LearnerId,
        samples: &[(SampleId, &[f64], i64, ComponentId)],
        config: &LogisticConfig,
        created_tick: Tick,
    ) -> Result<BaseLearner> {
        if samples.is_empty() {
            return Err(CoreError::InvalidArgument("a learner needs at least one sample".into()));
        }
        let xs: Vec<&[f64]> = samples.iter().map(|s| s.1).collect();
        let ys: Vec<i64> = samples.iter().map(|s| s.2).collect();
        let model = Classifier::fit(&xs, &ys, config)?;
        let mut histogram: BTreeMap<ComponentId, f64> = BTreeMap::new();
        for s in samples {
            *histogram.entry(s.3).or_default() += 1.0;
        }
        for v in histogram.values_mut() {
            *v /= samples.len() as f64;
        }
        Ok(BaseLearner {
            id,
            training_ids: samples.iter().map(|s| s.0).collect(),
            component_histogram: histogram,
            model,
            created_tick,
        })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.model, Classifier::Constant { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub learner: LearnerId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub beta_w: f64,
    pub prune_threshold: f64,
    pub update_period: i64,
    pub learner: LogisticConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            beta_w: 0.5,
            prune_threshold: 0.01,
            update_period: 1,
            learner: LogisticConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_w > 0.0 && self.beta_w < 1.0) {
            return Err(CoreError::InvalidArgument("beta_w must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(CoreError::InvalidArgument("prune_threshold must lie in [0, 1)".into()));
        }
        if self.update_period < 1 {
            return Err(CoreError::InvalidArgument("update_period must be >= 1".into()));
        }
        self.learner.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
    pub beta_w: f64,
    pub prune_threshold: f64,
    pub update_period: i64,
    pub last_update_tick: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub learner: LearnerId,
    pub class: i64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: i64,
    pub confidence: f64,
    pub votes: Vec<Vote>,
}

pub type Learners = BTreeMap<LearnerId, BaseLearner>;

impl EnsembleModel {
    pub fn new(config: &EnsembleConfig) -> Self {
        EnsembleModel {
            members: Vec::new(),
            beta_w: config.beta_w,
            prune_threshold: config.prune_threshold,
            update_period: config.update_period,
            last_update_tick: None,
        }
    }

    /// Replaces the members; missing weights mean uniform weighting.
    pub fn set_members(&mut self, learners: &Learners, ids: &[LearnerId], weights: Option<&[f64]>) -> Result<()> {
        if ids.is_empty() {
            return Err(CoreError::EmptyEnsemble);
        }
        let unique: BTreeSet<LearnerId> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            return Err(CoreError::InvalidArgument("duplicate learner in ensemble".into()));
        }
        for id in ids {
            if !learners.contains_key(id) {
                return Err(CoreError::UnknownLearner(*id));
            }
        }
        let raw: Vec<f64> = match weights {
            None => vec![1.0; ids.len()],
            Some(w) => {
                if w.len() != ids.len() {
                    return Err(CoreError::InvalidArgument(
                        "weights and member ids differ in length".into(),
                    ));
                }
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                    return Err(CoreError::InvalidArgument(
                        "weights must be finite, non-negative and not all zero".into(),
                    ));
                }
                w.to_vec()
            }
        };
        self.members = ids
            .iter()
            .zip(raw)
            .map(|(id, weight)| Member { learner: *id, weight })
            .collect();
        self.normalize();
        Ok(())
    }

    fn normalize(&mut self) {
        let total: f64 = self.members.iter().map(|m| m.weight).sum();
        if total > 0.0 {
            for m in &mut self.members {
                m.weight /= total;
            }
        } else if !self.members.is_empty() {
            let u = 1.0 / self.members.len() as f64;
            for m in &mut self.members {
                m.weight = u;
            }
        }
    }

    pub fn weight_of(&self, id: LearnerId) -> Option<f64> {
        self.members.iter().find(|m| m.learner == id).map(|m| m.weight)
    }

    pub fn predict(&self, learners: &Learners, x: &[f64]) -> Result<Prediction> {
        let total: f64 = self.members.iter().map(|m| m.weight).sum();
        if self.members.is_empty() || total <= 0.0 {
            return Err(CoreError::EmptyEnsemble);
        }
        let mut combined: BTreeMap<i64, f64> = BTreeMap::new();
        let mut votes = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let learner = learners.get(&m.learner).ok_or(CoreError::UnknownLearner(m.learner))?;
            let probs = learner.model.probabilities(x);
            for (c, p) in &probs {
                *combined.entry(*c).or_default() += m.weight / total * p;
            }
            let (class, confidence) = argmax(&probs);
            votes.push(Vote {
                learner: m.learner,
                class,
                confidence,
            });
        }
        let (class, confidence) = argmax(&combined);
        Ok(Prediction {
            class,
            confidence,
            votes,
        })
    }

    /// Multiplies the weight of every member that mispredicts a sample by
    /// `beta_w`, renormalizes, then prunes members below the threshold.
    /// Returns the pruned learner ids.
    pub fn dwm_update(&mut self, learners: &Learners, batch: &[(&[f64], i64)]) -> Result<Vec<LearnerId>> {
        if self.members.is_empty() {
            return Err(CoreError::EmptyEnsemble);
        }
        for (x, y) in batch {
            for m in &mut self.members {
                let learner = learners.get(&m.learner).ok_or(CoreError::UnknownLearner(m.learner))?;
                if learner.model.predict(x).0 != *y {
                    m.weight *= self.beta_w;
                }
            }
        }
        self.normalize();
        let mut pruned = Vec::new();
        loop {
            if self.members.len() <= 1 {
                break;
            }
            let low = self
                .members
                .iter()
                .enumerate()
                .filter(|(_, m)| m.weight < self.prune_threshold)
                .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
                .map(|(i, _)| i);
            let Some(i) = low else { break };
            pruned.push(self.members.remove(i).learner);
            self.normalize();
        }
        Ok(pruned)
    }

    /// Share of the ensemble decision each member accounts for over a sample set:
    /// a member earns its weight on every sample where it agrees with the ensemble.
    pub fn model_distribution(&self, learners: &Learners, xs: &[&[f64]]) -> Result<BTreeMap<LearnerId, f64>> {
        if xs.is_empty() {
            return Err(CoreError::InvalidArgument("sample set is empty".into()));
        }
        let mut share: BTreeMap<LearnerId, f64> = self.members.iter().map(|m| (m.learner, 0.0)).collect();
        for x in xs {
            let p = self.predict(learners, x)?;
            for (m, v) in self.members.iter().zip(&p.votes) {
                if v.class == p.class {
                    *share.get_mut(&m.learner).expect("member") += m.weight;
                }
            }
        }
        let total: f64 = share.values().sum();
        if total > 0.0 {
            for v in share.values_mut() {
                *v /= total;
            }
        } else {
            // no member ever matched the blended decision; fall back to weights
            for m in &self.members {
                share.insert(m.learner, m.weight);
            }
        }
        Ok(share)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    /// Upper edges of the confidence bins; bin `b` covers `(edges[b-1], edges[b]]`.
    pub bin_edges: Vec<f64>,
    pub per_class: BTreeMap<i64, Vec<BinCounts>>,
    pub support: BTreeMap<i64, usize>,
    pub accuracy: f64,
    pub sample_count: usize,
}

/// Right-closed bin index; a confidence of 0 lands in the first bin.
pub fn confidence_bin(confidence: f64, bins: usize) -> usize {
    let t = (confidence * bins as f64).ceil() as i64 - 1;
    t.clamp(0, bins as i64 - 1) as usize
}

pub fn performance_summary(
    ensemble: &EnsembleModel,
    learners: &Learners,
    samples: &[(&[f64], i64)],
    bins: usize,
) -> Result<PerformanceSummary> {
    if bins == 0 {
        return Err(CoreError::InvalidArgument("need at least one confidence bin".into()));
    }
    let mut per_class: BTreeMap<i64, Vec<BinCounts>> = BTreeMap::new();
    let mut support: BTreeMap<i64, usize> = BTreeMap::new();
    let mut correct = 0usize;
    for (x, y) in samples {
        let p = ensemble.predict(learners, x)?;
        let b = confidence_bin(p.confidence, bins);
        *support.entry(*y).or_default() += 1;
        if p.class == *y {
            correct += 1;
            per_class.entry(*y).or_insert_with(|| vec![BinCounts::default(); bins])[b].true_positive += 1;
        } else {
            per_class.entry(p.class).or_insert_with(|| vec![BinCounts::default(); bins])[b].false_positive += 1;
            per_class.entry(*y).or_insert_with(|| vec![BinCounts::default(); bins])[b].false_negative += 1;
        }
    }
    Ok(PerformanceSummary {
        bin_edges: (1..=bins).map(|b| b as f64 / bins as f64).collect(),
        per_class,
        support,
        accuracy: if samples.is_empty() {
            0.0
        } else {
            correct as f64 / samples.len() as f64
        },
        sample_count: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(id: u32, class: i64) -> BaseLearner {
        BaseLearner {
            id: LearnerId(id),
            training_ids: BTreeSet::from([SampleId(0)]),
            component_histogram: BTreeMap::from([(ComponentId(0), 1.0)]),
            model: Classifier::Constant { class },
            created_tick: 0,
        }
    }

    fn registry(ls: Vec<BaseLearner>) -> Learners {
        ls.into_iter().map(|l| (l.id, l)).collect()
    }

    #[test]
    fn separable_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 2]> = (0..300)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .filter(|p: &[f64; 2]| (p[0] + p[1]).abs() > 0.3)
            .collect();
        let xs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let ys: Vec<i64> = pts.iter().map(|p| (p[0] + p[1] > 0.0) as i64).collect();
        let model = Classifier::fit(&xs, &ys, &LogisticConfig::default()).unwrap();
        let hits = xs.iter().zip(&ys).filter(|(x, y)| model.predict(x).0 == **y).count();
        assert!(hits as f64 / xs.len() as f64 >= 0.99);
    }

    #[test]
    fn single_class_is_constant() {
        let xs: Vec<&[f64]> = vec![&[1.0], &[2.0]];
        let model = Classifier::fit(&xs, &[4, 4], &LogisticConfig::default()).unwrap();
        assert_eq!(model.predict(&[100.0]), (4, 1.0));
    }

    #[test]
    fn histogram_fractions() {
        let v = [0.0];
        let samples: Vec<(SampleId, &[f64], i64, ComponentId)> = (0..4)
            .map(|i| (SampleId(i), &v[..], 1, ComponentId((i % 2) as u32)))
            .collect();
        let l = BaseLearner::train(LearnerId(0), &samples, &LogisticConfig::default(), 0).unwrap();
        assert_eq!(l.component_histogram[&ComponentId(0)], 0.5);
        assert_eq!(l.component_histogram[&ComponentId(1)], 0.5);
    }

    #[test]
    fn weighted_vote() {
        let ls = registry(vec![constant(0, 1), constant(1, 2)]);
        let mut e = EnsembleModel::new(&EnsembleConfig::default());
        e.set_members(&ls, &[LearnerId(0), LearnerId(1)], Some(&[0.9, 0.1])).unwrap();
        let p = e.predict(&ls, &[0.0]).unwrap();
        assert_eq!(p.class, 1);
        assert!((p.confidence - 0.9).abs() < 1e-12);
        // equal weights: tie goes to the smaller class
        e.set_members(&ls, &[LearnerId(1), LearnerId(0)], None).unwrap();
        assert_eq!(e.predict(&ls, &[0.0]).unwrap().class, 1);
    }

    #[test]
    fn single_member_matches_learner() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<[f64; 1]> = (0..50).map(|_| [rng.random_range(-1.0..1.0)]).collect();
        let samples: Vec<(SampleId, &[f64], i64, ComponentId)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (SampleId(i as u64), p.as_slice(), (p[0] > 0.0) as i64, ComponentId(0)))
            .collect();
        let l = BaseLearner::train(LearnerId(3), &samples, &LogisticConfig::default(), 0).unwrap();
        let ls = registry(vec![l.clone()]);
        let mut e = EnsembleModel::new(&EnsembleConfig::default());
        e.set_members(&ls, &[LearnerId(3)], None).unwrap();
        for p in &pts {
            let a = e.predict(&ls, p).unwrap();
            let b = l.model.predict(p);
            assert_eq!(a.class, b.0);
            assert!((a.confidence - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_is_exact() {
        let ls = registry(vec![constant(0, 1), constant(1, 2)]);
        let mut e = EnsembleModel::new(&EnsembleConfig {
            prune_threshold: 0.0,
            ..EnsembleConfig::default()
        });
        e.set_members(&ls, &[LearnerId(0), LearnerId(1)], None).unwrap();
        let x = [0.0];
        let batch = [(&x[..], 1), (&x[..], 1), (&x[..], 1)];
        e.dwm_update(&ls, &batch).unwrap();
        // raw weights 0.5 and 0.5 * 0.125
        let ratio = e.weight_of(LearnerId(1)).unwrap() / e.weight_of(LearnerId(0)).unwrap();
        assert_eq!(ratio, 0.125);
        assert!((e.members.iter().map(|m| m.weight).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_members_keep_weights() {
        let ls = registry(vec![constant(0, 1), constant(1, 1)]);
        let mut e = EnsembleModel::new(&EnsembleConfig::default());
        e.set_members(&ls, &[LearnerId(0), LearnerId(1)], Some(&[0.7, 0.3])).unwrap();
        let x = [0.0];
        e.dwm_update(&ls, &[(&x[..], 1)]).unwrap();
        assert!((e.weight_of(LearnerId(0)).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn pruning_never_empties() {
        let ls = registry(vec![constant(0, 1), constant(1, 2)]);
        let mut e = EnsembleModel::new(&EnsembleConfig::default());
        e.set_members(&ls, &[LearnerId(0), LearnerId(1)], None).unwrap();
        let x = [0.0];
        let batch: Vec<(&[f64], i64)> = (0..10).map(|_| (&x[..], 1)).collect();
        let pruned = e.dwm_update(&ls, &batch).unwrap();
        assert_eq!(pruned, vec![LearnerId(1)]);
        assert_eq!(e.members.len(), 1);
        assert_eq!(e.members[0].weight, 1.0);
        // everyone wrong: the last member survives
        let wrong: Vec<(&[f64], i64)> = (0..50).map(|_| (&x[..], 9)).collect();
        e.dwm_update(&ls, &wrong).unwrap();
        assert_eq!(e.members.len(), 1);
    }

    #[test]
    fn distribution_readings() {
        let ls = registry(vec![constant(0, 1), constant(1, 2), constant(2, 1)]);
        let x = [0.0];
        let xs: Vec<&[f64]> = vec![&x, &x, &x];
        let mut e = EnsembleModel::new(&EnsembleConfig::default());
        e.set_members(&ls, &[LearnerId(0)], None).unwrap();
        assert_eq!(e.model_distribution(&ls, &xs).unwrap()[&LearnerId(0)], 1.0);
        // learner 1 disagrees with the 2-vs-1 majority on every sample
        e.set_members(&ls, &[LearnerId(0), LearnerId(1), LearnerId(2)], None).unwrap();
        let d = e.model_distribution(&ls, &xs).unwrap();
        assert_eq!(d[&LearnerId(1)], 0.0);
        assert!((d[&LearnerId(0)] - 0.5).abs() < 1e-12);
        e.set_members(&ls, &[LearnerId(0), LearnerId(2)], Some(&[0.7, 0.3])).unwrap();
        let d = e.model_distribution(&ls, &xs).unwrap();
        assert!((d[&LearnerId(0)] - 0.7).abs() < 1e-12);
        assert!((d[&LearnerId(2)] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn summary_edges_and_counts() {
        assert_eq!(confidence_bin(1.0, 10), 9);
        assert_eq!(confidence_bin(0.0, 10), 0);
        assert_eq!(confidence_bin(0.1, 10), 0);
        assert_eq!(confidence_bin(0.1000001, 10), 1);

        let ls = registry(vec![constant(0, 1)]);
        let mut e = EnsembleModel::new(&EnsembleConfig::default());
        e.set_members(&ls, &[LearnerId(0)], None).unwrap();
        let x = [0.0];
        let perfect: Vec<(&[f64], i64)> = (0..5).map(|_| (&x[..], 1)).collect();
        let s = performance_summary(&e, &ls, &perfect, 10).unwrap();
        assert_eq!(s.per_class[&1][9].true_positive, 5);
        assert_eq!(s.accuracy, 1.0);

        let wrong: Vec<(&[f64], i64)> = (0..4).map(|i| (&x[..], if i < 3 { 0 } else { 2 })).collect();
        let s = performance_summary(&e, &ls, &wrong, 10).unwrap();
        let fn0: usize = s.per_class[&0].iter().map(|b| b.false_negative).sum();
        let tp: usize = s.per_class.values().flatten().map(|b| b.true_positive).sum();
        assert_eq!((fn0, tp), (3, 0));
        for (class, n) in &s.support {
            let bins = &s.per_class[class];
            let total: usize = bins.iter().map(|b| b.true_positive + b.false_negative).sum();
            assert_eq!(total, *n);
        }
    }

    #[test]
    fn adaptation_beats_frozen_model_after_abrupt_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draw = |n: usize, angle: f64| -> Vec<([f64; 2], i64)> {
            let normal = [angle.cos(), angle.sin()];
            (0..n)
                .map(|_| {
                    let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                    (p, (p[0] * normal[0] + p[1] * normal[1] > 0.0) as i64)
                })
                .collect()
        };
        let before = draw(400, 0.0);
        let after_train = draw(200, std::f64::consts::FRAC_PI_2);
        let after_test = draw(1000, std::f64::consts::FRAC_PI_2);
        let train = |id: u32, data: &[([f64; 2], i64)]| {
            let samples: Vec<(SampleId, &[f64], i64, ComponentId)> = data
                .iter()
                .enumerate()
                .map(|(i, (p, y))| (SampleId(i as u64), p.as_slice(), *y, ComponentId(0)))
                .collect();
            BaseLearner::train(LearnerId(id), &samples, &LogisticConfig::default(), 0).unwrap()
        };
        let ls = registry(vec![train(0, &before), train(1, &after_train)]);
        let accuracy = |e: &EnsembleModel| {
            let hits = after_test
                .iter()
                .filter(|(p, y)| e.predict(&ls, p).unwrap().class == *y)
                .count();
            hits as f64 / after_test.len() as f64
        };
        let mut frozen = EnsembleModel::new(&EnsembleConfig::default());
        frozen.set_members(&ls, &[LearnerId(0)], None).unwrap();
        let mut adapted = frozen.clone();
        adapted.set_members(&ls, &[LearnerId(0), LearnerId(1)], None).unwrap();
        let batch: Vec<(&[f64], i64)> = after_train.iter().map(|(p, y)| (p.as_slice(), *y)).collect();
        adapted.dwm_update(&ls, &batch).unwrap();
        let (a, f) = (accuracy(&adapted), accuracy(&frozen));
        assert!(a - f >= 0.10, "adapted {a} frozen {f}");
    }
}

