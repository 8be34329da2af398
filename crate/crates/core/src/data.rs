//! Dataset container and synthetic data generation.
//!
//! Features are always `f64` in `[0, 1]`, checked at every construction.
//! Every sample carries a stable id assigned at generation time; subsets
//! and splits keep parent ids, so per-sample series from different runs
//! can be joined by id.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    ids: Vec<u64>,
}

impl LabeledDataset {
    /// Builds a dataset with fresh ids `0..n`. Features are validated to
    /// lie in `[0, 1]` and labels to lie below `classes`.
    pub fn new(
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<LabeledDataset> {
        let n = labels.len();
        let ids = (0..n as u64).collect();
        LabeledDataset::with_ids(dim, classes, features, labels, ids)
    }

    pub fn with_ids(
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        ids: Vec<u64>,
    ) -> Result<LabeledDataset> {
        if dim == 0 {
            return Err(Error::invalid("dataset dim must be positive"));
        }
        if classes < 2 {
            return Err(Error::invalid("dataset needs at least two classes"));
        }
        let n = labels.len();
        if features.len() != n * dim {
            return Err(Error::LengthMismatch {
                context: "dataset features vs labels",
                left: features.len(),
                right: n * dim,
            });
        }
        if ids.len() != n {
            return Err(Error::LengthMismatch {
                context: "dataset ids vs labels",
                left: ids.len(),
                right: n,
            });
        }
        for (i, chunk) in features.chunks(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::FeatureOutOfRange { index: i });
            }
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::LabelOutOfRange {
                    index: i,
                    label: l,
                    classes,
                });
            }
        }
        Ok(LabeledDataset {
            dim,
            classes,
            features,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// New dataset holding the given rows, parent ids preserved.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid("subset index out of range"));
            }
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
            ids.push(self.ids[i]);
        }
        LabeledDataset::with_ids(self.dim, self.classes, features, labels, ids)
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0usize; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Settings for the synthetic blob generator.
///
/// Each class is a Gaussian blob in `[0, 1]^dim` whose means sit one unit
/// apart (Euclidean, before clamping). A `duplicate_rate` fraction of each
/// class is replaced by near-copies of the class prototype (noise 0.01),
/// and a `flip_rate` fraction of all labels is reassigned uniformly to a
/// different class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub n_per_class: usize,
    pub dim: usize,
    pub cluster_std: f64,
    pub duplicate_rate: f64,
    pub flip_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> SyntheticSpec {
        SyntheticSpec {
            classes: 2,
            n_per_class: 128,
            dim: 16,
            cluster_std: 0.1,
            duplicate_rate: 0.0,
            flip_rate: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("synthetic classes must be at least 2"));
        }
        if self.n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if !self.cluster_std.is_finite() || self.cluster_std < 0.0 {
            return Err(Error::invalid("cluster_std must be finite and non-negative"));
        }
        for (name, v) in [
            ("duplicate_rate", self.duplicate_rate),
            ("flip_rate", self.flip_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(alloc::format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Class prototype before clamping: all coordinates equal, consecutive
    /// classes one Euclidean unit apart.
    pub fn prototype(&self, class: usize) -> Vec<f64> {
        let k = self.classes as f64;
        let offset = (class as f64 - (k - 1.0) / 2.0) / libm::sqrt(self.dim as f64);
        let coord = (0.5 + offset).clamp(0.0, 1.0);
        alloc::vec![coord; self.dim]
    }
}

const DUPLICATE_NOISE: f64 = 0.01;

/// Deterministic synthetic dataset for a given spec; the seed fully
/// determines the output.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let n = spec.classes * spec.n_per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.classes {
        let proto = spec.prototype(class);
        let n_dup = libm::round(spec.duplicate_rate * spec.n_per_class as f64) as usize;
        for i in 0..spec.n_per_class {
            let std = if i < n_dup {
                DUPLICATE_NOISE
            } else {
                spec.cluster_std
            };
            for j in 0..spec.dim {
                let v = proto[j] + std * rng.next_normal();
                features.push(v.clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    let n_flip = libm::round(spec.flip_rate * n as f64) as usize;
    if n_flip > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        for &i in order.iter().take(n_flip) {
            let shift = 1 + rng.next_below(spec.classes as u64 - 1) as usize;
            labels[i] = (labels[i] + shift) % spec.classes;
        }
    }
    LabeledDataset::new(spec.dim, spec.classes, features, labels)
}

/// Two-way stratified split. Every class needs at least two samples so
/// both parts stay populated; the per-class train count is the rounded
/// fraction clamped to leave at least one sample on each side.
pub fn split(
    ds: &LabeledDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid("train fraction must lie strictly in (0, 1)"));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..ds.classes() {
        let mut idx = ds.indices_of_class(class);
        if idx.len() < 2 {
            return Err(Error::InsufficientSamples {
                context: "split class population",
                needed: 2,
                available: idx.len(),
            });
        }
        rng.shuffle(&mut idx);
        let n_c = idx.len();
        let n_train = (libm::round(train_frac * n_c as f64) as usize).clamp(1, n_c - 1);
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&val)?))
}

/// Stratified split into train, validation and test parts. Fractions must
/// sum to 1. Ids are preserved, so the parts are provably disjoint.
pub fn split_three(
    ds: &LabeledDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (ft, fv, fe) = fractions;
    for f in [ft, fv, fe] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::invalid("split fractions must lie in [0, 1]"));
        }
    }
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must sum to 1"));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class in 0..ds.classes() {
        let mut idx = ds.indices_of_class(class);
        rng.shuffle(&mut idx);
        let n_c = idx.len();
        let n_train = libm::round(ft * n_c as f64) as usize;
        let n_val = (libm::round(fv * n_c as f64) as usize).min(n_c - n_train);
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
        test.extend_from_slice(&idx[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&val)?, ds.subset(&test)?))
}

/// Class-balanced random subset without replacement, `per_class` samples
/// from every class.
pub fn subset_sample(ds: &LabeledDataset, per_class: usize, rng: &mut Rng) -> Result<LabeledDataset> {
    let mut chosen = Vec::with_capacity(per_class * ds.classes());
    for class in 0..ds.classes() {
        let mut idx = ds.indices_of_class(class);
        if idx.len() < per_class {
            return Err(Error::InsufficientSamples {
                context: "subset_sample",
                needed: per_class,
                available: idx.len(),
            });
        }
        rng.shuffle(&mut idx);
        chosen.extend_from_slice(&idx[..per_class]);
    }
    chosen.sort_unstable();
    ds.subset(&chosen)
}

/// Tiles the dataset into `blocks` disjoint class-balanced parts. Every
/// class count must divide evenly.
pub fn partition_blocks(
    ds: &LabeledDataset,
    blocks: usize,
    rng: &mut Rng,
) -> Result<Vec<LabeledDataset>> {
    if blocks == 0 {
        return Err(Error::invalid("blocks must be positive"));
    }
    let mut per_class_chunks: Vec<Vec<usize>> = Vec::with_capacity(ds.classes());
    for class in 0..ds.classes() {
        let mut idx = ds.indices_of_class(class);
        if idx.len() % blocks != 0 {
            return Err(Error::invalid(alloc::format!(
                "class {class} count {} does not divide into {blocks} blocks",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        per_class_chunks.push(idx);
    }
    let mut out = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let mut chosen = Vec::new();
        for chunks in &per_class_chunks {
            let size = chunks.len() / blocks;
            chosen.extend_from_slice(&chunks[b * size..(b + 1) * size]);
        }
        chosen.sort_unstable();
        out.push(ds.subset(&chosen)?);
    }
    Ok(out)
}
