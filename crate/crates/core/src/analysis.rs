//! Analyses on top of the labelled tangent kernel: pairwise relationship
//! labels, farthest-point clustering, redundancy and pruning, learning
//! difficulty series, and single-step forgetting prediction.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::kernel::{sample_feature, sign_vector, KernelKind, KernelMatrix};
use crate::model::{forward, NetworkSpec, ParamVector, TrainLog};
use crate::numerics::{argmax_tiebreak, dot, mean, pearson, Rng};

/// How one sample's gradient relates to another's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relationship {
    Interchangeable,
    Unrelated,
    Contradictory,
    Mixed,
}

/// Thresholds on the two normalized projections `f_o.f_u / |f_u|^2` and
/// `f_o.f_u / |f_o|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipConfig {
    pub t_pos: f64,
    pub t_neg: f64,
    pub zero_band: f64,
}

impl Default for RelationshipConfig {
    fn default() -> RelationshipConfig {
        RelationshipConfig {
            t_pos: 0.6,
            t_neg: -0.6,
            zero_band: 0.05,
        }
    }
}

impl RelationshipConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_pos > 0.5 && self.t_pos <= 1.0) {
            return Err(Error::invalid("t_pos must lie in (1/2, 1]"));
        }
        if !(self.t_neg >= -1.0 && self.t_neg < -0.5) {
            return Err(Error::invalid("t_neg must lie in [-1, -1/2)"));
        }
        if self.zero_band < 0.0 {
            return Err(Error::invalid("zero_band must be nonnegative"));
        }
        Ok(())
    }
}

/// Classifies the relation of two feature vectors by their mutual
/// projections. A zero vector on either side means unrelated.
pub fn classify_relationship(
    feature_o: &[f64],
    feature_u: &[f64],
    cfg: &RelationshipConfig,
) -> Result<Relationship> {
    cfg.validate()?;
    if feature_o.len() != feature_u.len() {
        return Err(Error::LengthMismatch {
            context: "classify_relationship",
            left: feature_o.len(),
            right: feature_u.len(),
        });
    }
    let norm_o = dot(feature_o, feature_o);
    let norm_u = dot(feature_u, feature_u);
    if norm_o == 0.0 || norm_u == 0.0 {
        return Ok(Relationship::Unrelated);
    }
    let k = dot(feature_o, feature_u);
    let r1 = k / norm_u;
    let r2 = k / norm_o;
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if lo >= cfg.t_pos {
        Ok(Relationship::Interchangeable)
    } else if hi <= cfg.t_neg {
        Ok(Relationship::Contradictory)
    } else if lo.abs() <= cfg.zero_band && hi.abs() <= cfg.zero_band {
        Ok(Relationship::Unrelated)
    } else {
        Ok(Relationship::Mixed)
    }
}

/// Farthest-point clustering result. `members[k]` lists the samples
/// attached to centroid `centroids[k]`, centroid excluded, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpcResult {
    pub centroids: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl FpcResult {
    /// Cluster index of every sample.
    pub fn cluster_of(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (k, &c) in self.centroids.iter().enumerate() {
            out[c] = k;
            for &m in &self.members[k] {
                out[m] = k;
            }
        }
        out
    }

    /// Samples of cluster `k` including its centroid, ascending.
    pub fn cluster_samples(&self, k: usize) -> Vec<usize> {
        let mut v = self.members[k].clone();
        v.push(self.centroids[k]);
        v.sort_unstable();
        v
    }

    /// Index of the largest cluster, centroid counted, lowest index on
    /// ties.
    pub fn largest_cluster(&self) -> usize {
        let mut best = 0;
        for k in 1..self.centroids.len() {
            if self.members[k].len() + 1 > self.members[best].len() + 1 {
                best = k;
            }
        }
        best
    }
}

/// Similarity-based farthest-point clustering. The first centroid is the
/// sample with the largest self-similarity; each round promotes the
/// member least similar to its own centroid (lowest sample index on
/// ties), and members move to the new cluster only when strictly more
/// similar to the new centroid than to their current one.
pub fn fpc(kernel: &KernelMatrix, m: usize) -> Result<FpcResult> {
    let n = kernel.n();
    if n == 0 {
        return Err(Error::EmptyInput("fpc kernel"));
    }
    if m == 0 || m > n {
        return Err(Error::InsufficientSamples {
            context: "fpc cluster count",
            needed: m.max(1),
            available: n,
        });
    }
    let diag: Vec<f64> = (0..n).map(|i| kernel.get(i, i)).collect();
    let first = argmax_tiebreak(&diag)?;
    let mut centroids = vec![first];
    let mut members: Vec<Vec<usize>> = vec![(0..n).filter(|&i| i != first).collect()];
    while centroids.len() < m {
        // globally least similar member, tie broken by lowest sample index
        let mut best: Option<(f64, usize, usize)> = None; // (value, cluster, member)
        for (k, cluster_members) in members.iter().enumerate() {
            let c = centroids[k];
            for &i in cluster_members {
                let v = kernel.get(c, i);
                let better = match best {
                    None => true,
                    Some((bv, _, bi)) => v < bv || (v == bv && i < bi),
                };
                if better {
                    best = Some((v, k, i));
                }
            }
        }
        let (_, from, new_centroid) =
            best.expect("m <= n guarantees a promotable member");
        members[from].retain(|&i| i != new_centroid);
        let mut moved = Vec::new();
        for (k, cluster_members) in members.iter_mut().enumerate() {
            let c = centroids[k];
            let mut kept = Vec::with_capacity(cluster_members.len());
            for &i in cluster_members.iter() {
                if kernel.get(i, new_centroid) > kernel.get(i, c) {
                    moved.push(i);
                } else {
                    kept.push(i);
                }
            }
            *cluster_members = kept;
        }
        moved.sort_unstable();
        centroids.push(new_centroid);
        members.push(moved);
    }
    Ok(FpcResult { centroids, members })
}

/// Cluster sizes in descending order, centroid counted.
pub fn cluster_size_histogram(result: &FpcResult) -> Vec<usize> {
    let mut sizes: Vec<usize> = result.members.iter().map(|m| m.len() + 1).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Samples that have a strictly more self-similar partner: `i` is
/// redundant when some `j != i` has `k(i, j) > k(i, i)`.
pub fn find_redundant(kernel: &KernelMatrix) -> Vec<usize> {
    let n = kernel.n();
    (0..n)
        .filter(|&i| {
            let own = kernel.get(i, i);
            (0..n).any(|j| j != i && kernel.get(i, j) > own)
        })
        .collect()
}

/// Outcome of the three-stage pruning pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneOutcome {
    /// Kernel-order indices kept, ascending.
    pub retained: Vec<usize>,
    pub redundant: Vec<usize>,
    /// Samples of the largest cluster after de-redundancy, ascending.
    pub head_cluster: Vec<usize>,
    /// Members of the head cluster dropped at random, ascending.
    pub pruned: Vec<usize>,
}

/// Removes redundant samples, clusters the rest into `m` groups, then
/// drops a random `frac` share of the largest cluster. The centroid is
/// as droppable as any member, so `frac = 1` clears the whole cluster.
/// Deterministic for a given generator state.
pub fn prune_pipeline(
    kernel: &KernelMatrix,
    m: usize,
    frac: f64,
    rng: &mut Rng,
) -> Result<PruneOutcome> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::invalid("prune frac must lie in [0, 1]"));
    }
    let n = kernel.n();
    let redundant = find_redundant(kernel);
    let redundant_set: BTreeSet<usize> = redundant.iter().copied().collect();
    let kept: Vec<usize> = (0..n).filter(|i| !redundant_set.contains(i)).collect();
    if kept.is_empty() {
        return Err(Error::InsufficientSamples {
            context: "prune_pipeline after de-redundancy",
            needed: 1,
            available: 0,
        });
    }
    let sub = kernel.submatrix(&kept)?;
    let m_eff = m.min(kept.len());
    let clusters = fpc(&sub, m_eff)?;
    let head = clusters.largest_cluster();
    let head_local = clusters.cluster_samples(head);
    let head_cluster: Vec<usize> = head_local.iter().map(|&i| kept[i]).collect();
    let mut eligible = head_cluster.clone();
    // round half up; a positive fraction always removes at least one
    let mut count = libm::round(frac * head_cluster.len() as f64) as usize;
    if frac > 0.0 {
        count = count.max(1);
    }
    let count = count.min(eligible.len());
    rng.shuffle(&mut eligible);
    let mut pruned: Vec<usize> = eligible[..count].to_vec();
    pruned.sort_unstable();
    let pruned_set: BTreeSet<usize> = pruned.iter().copied().collect();
    let retained: Vec<usize> = kept
        .iter()
        .copied()
        .filter(|i| !pruned_set.contains(i))
        .collect();
    Ok(PruneOutcome {
        retained,
        redundant,
        head_cluster,
        pruned,
    })
}

/// Picks `budget` samples preferring large clusters: clusters the kernel
/// into `m` groups, orders them by size descending (creation order on
/// ties), takes whole clusters while they fit, and fills the remainder
/// with a random draw from the next cluster. Ascending result.
pub fn select_from_largest_cluster(
    kernel: &KernelMatrix,
    m: usize,
    budget: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let n = kernel.n();
    if budget > n {
        return Err(Error::InsufficientSamples {
            context: "select_from_largest_cluster budget",
            needed: budget,
            available: n,
        });
    }
    let clusters = fpc(kernel, m)?;
    let mut order: Vec<usize> = (0..clusters.centroids.len()).collect();
    order.sort_by_key(|&k| (core::cmp::Reverse(clusters.members[k].len()), k));
    let mut chosen = Vec::with_capacity(budget);
    for k in order {
        let remaining = budget - chosen.len();
        if remaining == 0 {
            break;
        }
        let mut samples = clusters.cluster_samples(k);
        if samples.len() <= remaining {
            chosen.extend_from_slice(&samples);
        } else {
            rng.shuffle(&mut samples);
            chosen.extend_from_slice(&samples[..remaining]);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// The three disjoint comparison pools around a target sample: most
/// similar within its cluster, least similar within its cluster, and
/// least similar outside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSets {
    pub interchangeable: Vec<usize>,
    pub medium: Vec<usize>,
    pub non_interchangeable: Vec<usize>,
}

/// Builds the comparison pools for a difficulty experiment. `target` is
/// usually the centroid of the largest cluster; pools never contain the
/// target and are pairwise disjoint by construction.
pub fn difficulty_control_sets(
    kernel: &KernelMatrix,
    clusters: &FpcResult,
    target: usize,
    m: usize,
) -> Result<ControlSets> {
    let n = kernel.n();
    if target >= n {
        return Err(Error::invalid("target index out of range"));
    }
    if m == 0 {
        return Ok(ControlSets {
            interchangeable: Vec::new(),
            medium: Vec::new(),
            non_interchangeable: Vec::new(),
        });
    }
    let assignment = clusters.cluster_of(n);
    let home = assignment[target];
    if home == usize::MAX {
        return Err(Error::invalid("target not covered by the clustering"));
    }
    let mut inside: Vec<usize> = clusters
        .cluster_samples(home)
        .into_iter()
        .filter(|&i| i != target)
        .collect();
    let mut outside: Vec<usize> = (0..n)
        .filter(|&i| assignment[i] != home && i != target)
        .collect();
    if inside.len() < 2 * m {
        return Err(Error::InsufficientSamples {
            context: "difficulty_control_sets inside cluster",
            needed: 2 * m,
            available: inside.len(),
        });
    }
    if outside.len() < m {
        return Err(Error::InsufficientSamples {
            context: "difficulty_control_sets outside cluster",
            needed: m,
            available: outside.len(),
        });
    }
    // descending similarity to the target, index ascending on ties
    let by_similarity_desc = |a: &usize, b: &usize| {
        let va = kernel.get(target, *a);
        let vb = kernel.get(target, *b);
        vb.partial_cmp(&va)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    inside.sort_by(by_similarity_desc);
    outside.sort_by(by_similarity_desc);
    let interchangeable = inside[..m].to_vec();
    let medium = inside[inside.len() - m..].to_vec();
    let non_interchangeable = outside[outside.len() - m..].to_vec();
    Ok(ControlSets {
        interchangeable,
        medium,
        non_interchangeable,
    })
}

/// Cumulative training loss of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyRecord {
    pub id: u64,
    pub cumulative_loss: f64,
}

/// Sums every sample's per-epoch losses over the whole run.
pub fn learning_difficulty(log: &TrainLog) -> Result<Vec<DifficultyRecord>> {
    if log.losses.is_empty() {
        return Err(Error::EmptyInput("learning_difficulty needs at least one epoch"));
    }
    let n = log.ids.len();
    let mut totals = vec![0.0; n];
    for epoch in &log.losses {
        for (i, l) in epoch.iter().enumerate() {
            totals[i] += l;
        }
    }
    Ok(log
        .ids
        .iter()
        .zip(totals.iter())
        .map(|(&id, &cumulative_loss)| DifficultyRecord {
            id,
            cumulative_loss,
        })
        .collect())
}

/// Pearson correlation of two difficulty series joined by sample id.
/// The id sets must coincide.
pub fn difficulty_correlation(a: &[DifficultyRecord], b: &[DifficultyRecord]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::IdMismatch {
            context: "difficulty_correlation",
        });
    }
    let mut sorted_a: Vec<&DifficultyRecord> = a.iter().collect();
    let mut sorted_b: Vec<&DifficultyRecord> = b.iter().collect();
    sorted_a.sort_by_key(|r| r.id);
    sorted_b.sort_by_key(|r| r.id);
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (ra, rb) in sorted_a.iter().zip(sorted_b.iter()) {
        if ra.id != rb.id {
            return Err(Error::IdMismatch {
                context: "difficulty_correlation",
            });
        }
        xs.push(ra.cumulative_loss);
        ys.push(rb.cumulative_loss);
    }
    pearson(&xs, &ys)
}

/// A sample that flipped from correct to wrong one update later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ForgettingEvent {
    pub id: u64,
    pub iteration: usize,
}

fn check_log_dataset(log: &TrainLog, ds: &LabeledDataset) -> Result<()> {
    if log.ids != ds.ids() {
        return Err(Error::IdMismatch {
            context: "train log vs dataset",
        });
    }
    Ok(())
}

/// Ground-truth forgetting events from a step-tracked run: sample in
/// batch `t` predicted correctly right after its own update and wrongly
/// after the next one. The event is stamped with iteration `t+1`.
pub fn detect_forgetting(log: &TrainLog, ds: &LabeledDataset) -> Result<Vec<ForgettingEvent>> {
    check_log_dataset(log, ds)?;
    let iters = &log.iterations;
    let mut events = Vec::new();
    for t in 0..iters.len().saturating_sub(1) {
        let now = &iters[t];
        let next = &iters[t + 1];
        if next.prev_preds_after.len() != now.batch.len() {
            return Err(Error::LengthMismatch {
                context: "iteration records out of order",
                left: next.prev_preds_after.len(),
                right: now.batch.len(),
            });
        }
        for (pos, &i) in now.batch.iter().enumerate() {
            let label = ds.label(i);
            if now.preds_after[pos] == label && next.prev_preds_after[pos] != label {
                events.push(ForgettingEvent {
                    id: ds.id(i),
                    iteration: t + 1,
                });
            }
        }
    }
    Ok(events)
}

/// All (id, iteration) slots where a forgetting event could have been
/// observed: the sample was predicted correctly right after its update.
pub fn eligible_slots(log: &TrainLog, ds: &LabeledDataset) -> Result<Vec<(u64, usize)>> {
    check_log_dataset(log, ds)?;
    let iters = &log.iterations;
    let mut slots = Vec::new();
    for t in 0..iters.len().saturating_sub(1) {
        let now = &iters[t];
        for (pos, &i) in now.batch.iter().enumerate() {
            if now.preds_after[pos] == ds.label(i) {
                slots.push((ds.id(i), t + 1));
            }
        }
    }
    Ok(slots)
}

/// Predicts which samples of batch `t` the coming update on batch `t+1`
/// will flip, using the variant-signed kernel at the post-update-`t`
/// parameters: the summed kernel against the next batch scales the sign
/// vector, and the sample is flagged when the adjusted probabilities no
/// longer rank its label first.
pub fn predict_forgetting(
    ds: &LabeledDataset,
    batch_t: &[usize],
    batch_t1: &[usize],
    params_t1: &ParamVector,
    spec: &NetworkSpec,
    lr: f64,
) -> Result<Vec<usize>> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::invalid("predict_forgetting lr must be positive"));
    }
    let mut next_features = Vec::with_capacity(batch_t1.len());
    for &j in batch_t1 {
        next_features.push(sample_feature(
            params_t1,
            spec,
            ds.features(j),
            ds.label(j),
            KernelKind::LpntkVariant,
        )?);
    }
    let mut flagged = Vec::new();
    for &i in batch_t {
        let label = ds.label(i);
        let trace = forward(params_t1, spec, ds.features(i))?;
        if argmax_tiebreak(&trace.probs)? != label {
            continue;
        }
        let f_i = sample_feature(
            params_t1,
            spec,
            ds.features(i),
            label,
            KernelKind::LpntkVariant,
        )?;
        let mut kappa_sum = 0.0;
        for f_j in &next_features {
            kappa_sum += dot(&f_i, f_j);
        }
        let s = sign_vector(label, spec.classes(), true)?;
        let adjusted: Vec<f64> = trace
            .probs
            .iter()
            .zip(s.iter())
            .map(|(q, sv)| q + lr * kappa_sum * sv)
            .collect();
        if argmax_tiebreak(&adjusted)? != label {
            flagged.push(i);
        }
    }
    Ok(flagged)
}

/// Runs the single-step predictor along a whole step-tracked training
/// log. Requires per-iteration parameter snapshots.
pub fn predict_forgetting_log(log: &TrainLog, ds: &LabeledDataset) -> Result<Vec<ForgettingEvent>> {
    check_log_dataset(log, ds)?;
    let iters = &log.iterations;
    let mut events = Vec::new();
    for t in 0..iters.len().saturating_sub(1) {
        let params = iters[t].params_after.as_ref().ok_or_else(|| {
            Error::invalid("predict_forgetting_log needs per-iteration parameter snapshots")
        })?;
        let flagged = predict_forgetting(
            ds,
            &iters[t].batch,
            &iters[t + 1].batch,
            params,
            &log.spec,
            log.config.lr,
        )?;
        for i in flagged {
            events.push(ForgettingEvent {
                id: ds.id(i),
                iteration: t + 1,
            });
        }
    }
    Ok(events)
}

/// Precision, recall and F1 of predicted against observed events,
/// matched exactly on (id, iteration).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a zero denominator forced the corresponding value to 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

pub fn score_predictions(
    predicted: &[ForgettingEvent],
    actual: &[ForgettingEvent],
) -> PredictionReport {
    let predicted_set: BTreeSet<ForgettingEvent> = predicted.iter().copied().collect();
    let actual_set: BTreeSet<ForgettingEvent> = actual.iter().copied().collect();
    let tp = predicted_set.intersection(&actual_set).count();
    let precision_undefined = predicted_set.is_empty();
    let recall_undefined = actual_set.is_empty();
    let precision = if precision_undefined {
        0.0
    } else {
        tp as f64 / predicted_set.len() as f64
    };
    let recall = if recall_undefined {
        0.0
    } else {
        tp as f64 / actual_set.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PredictionReport {
        true_positives: tp,
        predicted: predicted_set.len(),
        actual: actual_set.len(),
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    }
}

/// Mean F1 of placing the same number of predictions uniformly at random
/// over the eligible slots.
pub fn permutation_baseline_f1(
    actual: &[ForgettingEvent],
    slots: &[(u64, usize)],
    predicted_count: usize,
    draws: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::invalid("permutation baseline needs draws > 0"));
    }
    if predicted_count > slots.len() {
        return Err(Error::InsufficientSamples {
            context: "permutation baseline slots",
            needed: predicted_count,
            available: slots.len(),
        });
    }
    let mut f1s = Vec::with_capacity(draws);
    let mut indices: Vec<usize> = (0..slots.len()).collect();
    for _ in 0..draws {
        rng.shuffle(&mut indices);
        let fake: Vec<ForgettingEvent> = indices[..predicted_count]
            .iter()
            .map(|&s| ForgettingEvent {
                id: slots[s].0,
                iteration: slots[s].1,
            })
            .collect();
        f1s.push(score_predictions(&fake, actual).f1);
    }
    Ok(mean(&f1s))
}
