//! Empirical tangent kernels over trained classifiers.
//!
//! The class-by-class kernel block of two inputs is `J_o J_u^T` with `J`
//! the logit Jacobian. Three scalar summaries of that block are offered:
//! the plain average of all entries (`Pntk`), the label-signed average
//! (`Lpntk`), and a variant whose sign vector carries `K-1` at the label
//! slot (`LpntkVariant`), the form used when predicting single-step label
//! flips. All three collapse to dot products of per-sample feature
//! vectors, which is how full matrices are assembled.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{
    forward, init_params, logit_jacobian, one_hot, softmax_jacobian, NetworkSpec, ParamVector,
};
use crate::numerics::{dot, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Pntk,
    Lpntk,
    LpntkVariant,
}

/// Sign vector for a label: `+1` at the label and `-1` elsewhere. The
/// variant form puts `K-1` at the label instead.
pub fn sign_vector(y: usize, classes: usize, variant: bool) -> Result<Vec<f64>> {
    if y >= classes {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: y,
            classes,
        });
    }
    let mut s = vec![-1.0; classes];
    s[y] = if variant { classes as f64 - 1.0 } else { 1.0 };
    Ok(s)
}

/// Class-by-class tangent block `J_o J_u^T`, `K x K`.
pub fn entk_block(jac_o: &Matrix, jac_u: &Matrix) -> Result<Matrix> {
    jac_o.matmul_nt(jac_u)
}

/// Average of all block entries.
pub fn pntk(block: &Matrix) -> Result<f64> {
    if block.rows() != block.cols() || block.rows() == 0 {
        return Err(Error::ShapeMismatch {
            context: "pntk block",
            left_rows: block.rows(),
            left_cols: block.cols(),
            right_rows: block.rows(),
            right_cols: block.rows(),
        });
    }
    Ok(block.sum() / block.rows() as f64)
}

/// Label-signed average of a block: `(1/K) s(y_o)^T B s(y_u)`, summed in
/// row-major order.
pub fn lpntk_from_block(block: &Matrix, y_o: usize, y_u: usize, variant: bool) -> Result<f64> {
    let k = block.rows();
    if block.cols() != k || k == 0 {
        return Err(Error::ShapeMismatch {
            context: "lpntk block",
            left_rows: block.rows(),
            left_cols: block.cols(),
            right_rows: k,
            right_cols: k,
        });
    }
    let s_o = sign_vector(y_o, k, variant)?;
    let s_u = sign_vector(y_u, k, variant)?;
    let mut acc = 0.0;
    for c in 0..k {
        for d in 0..k {
            acc += s_o[c] * s_u[d] * block.get(c, d);
        }
    }
    Ok(acc / k as f64)
}

/// Per-sample feature vector whose dot products reproduce the chosen
/// kernel: `(1/sqrt(K)) w^T J` with `w` all ones, the sign vector, or its
/// variant.
pub fn feature_from_jacobian(jac: &Matrix, y: usize, kind: KernelKind) -> Result<Vec<f64>> {
    let k = jac.rows();
    if k == 0 {
        return Err(Error::EmptyInput("feature_from_jacobian"));
    }
    let weights = match kind {
        KernelKind::Pntk => vec![1.0; k],
        KernelKind::Lpntk => sign_vector(y, k, false)?,
        KernelKind::LpntkVariant => sign_vector(y, k, true)?,
    };
    let scale = 1.0 / libm::sqrt(k as f64);
    let d = jac.cols();
    let mut f = vec![0.0; d];
    for c in 0..k {
        let w = weights[c] * scale;
        let row = jac.row(c);
        for j in 0..d {
            f[j] += w * row[j];
        }
    }
    Ok(f)
}

/// Label-signed feature of one sample, `(1/sqrt(K)) s(y)^T J`.
pub fn lpntk_feature(jac: &Matrix, y: usize) -> Result<Vec<f64>> {
    feature_from_jacobian(jac, y, KernelKind::Lpntk)
}

/// Kernel value of two samples from their features.
pub fn lpntk_pair(feature_o: &[f64], feature_u: &[f64]) -> Result<f64> {
    if feature_o.len() != feature_u.len() {
        return Err(Error::LengthMismatch {
            context: "lpntk_pair",
            left: feature_o.len(),
            right: feature_u.len(),
        });
    }
    Ok(dot(feature_o, feature_u))
}

/// Feature of one dataset row under the given parameters.
pub fn sample_feature(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &[f64],
    y: usize,
    kind: KernelKind,
) -> Result<Vec<f64>> {
    let jac = logit_jacobian(params, spec, x)?;
    feature_from_jacobian(&jac, y, kind)
}

/// Symmetric kernel matrix stored as the upper triangle in row-major
/// order, tagged with the producing checkpoint's fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    kind: KernelKind,
    classes: usize,
    ids: Vec<u64>,
    upper: Vec<f64>,
    fingerprint: [u8; 32],
}

impl KernelMatrix {
    /// Index of `(i, j)` with `i <= j` in the packed upper triangle.
    pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < n);
        // row r holds n - r entries; row i starts after rows 0..i
        i * (2 * n - i + 1) / 2 + (j - i)
    }

    pub fn from_upper(
        kind: KernelKind,
        classes: usize,
        ids: Vec<u64>,
        upper: Vec<f64>,
    ) -> Result<KernelMatrix> {
        let n = ids.len();
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::LengthMismatch {
                context: "kernel upper triangle",
                left: upper.len(),
                right: n * (n + 1) / 2,
            });
        }
        if let Some(i) = upper.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "kernel entries",
                index: i,
            });
        }
        if classes < 2 {
            return Err(Error::invalid("kernel needs at least two classes"));
        }
        Ok(KernelMatrix {
            kind,
            classes,
            ids,
            upper,
            fingerprint: [0; 32],
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.upper[Self::upper_index(self.n(), a, b)]
    }

    pub fn self_similarity(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn set_fingerprint(&mut self, fp: [u8; 32]) {
        self.fingerprint = fp;
    }

    /// Restriction to `indices`, which must be strictly increasing.
    /// Sample ids and the fingerprint carry over.
    pub fn submatrix(&self, indices: &[usize]) -> Result<KernelMatrix> {
        let n = self.n();
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid("submatrix indices must be strictly increasing"));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::invalid("submatrix index out of range"));
            }
        }
        let mut upper = Vec::with_capacity(indices.len() * (indices.len() + 1) / 2);
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a..] {
                upper.push(self.get(i, j));
            }
        }
        Ok(KernelMatrix {
            kind: self.kind,
            classes: self.classes,
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            upper,
            fingerprint: self.fingerprint,
        })
    }
}

/// Full kernel matrix over a dataset: per-sample features once, then
/// upper-triangle dot products in row-major order.
pub fn kernel_matrix(
    ds: &LabeledDataset,
    params: &ParamVector,
    spec: &NetworkSpec,
    kind: KernelKind,
) -> Result<KernelMatrix> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("kernel_matrix dataset"));
    }
    if ds.classes() != spec.classes() {
        return Err(Error::LengthMismatch {
            context: "dataset classes vs spec",
            left: ds.classes(),
            right: spec.classes(),
        });
    }
    let n = ds.len();
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let f = sample_feature(params, spec, ds.features(i), ds.label(i), kind)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite {
                    context: "kernel feature",
                    index: i,
                },
                other => other,
            })?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "kernel feature",
                index: i,
            });
        }
        features.push(f);
    }
    let mut upper = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            upper.push(dot(&features[i], &features[j]));
        }
    }
    KernelMatrix::from_upper(kind, ds.classes(), ds.ids().to_vec(), upper)
}

/// First-order prediction of how one SGD step on `(x_u, y_u)` moves the
/// class probabilities at `x_o`:
/// `lr * A(x_o) * (J_o J_u^T) * (p_tar - q_u)` with `A` the softmax
/// derivative at `x_o`.
pub fn predict_delta(
    params: &ParamVector,
    spec: &NetworkSpec,
    x_u: &[f64],
    y_u: usize,
    x_o: &[f64],
    lr: f64,
) -> Result<Vec<f64>> {
    if !lr.is_finite() {
        return Err(Error::invalid("predict_delta lr must be finite"));
    }
    let trace_u = forward(params, spec, x_u)?;
    let trace_o = forward(params, spec, x_o)?;
    let jac_u = logit_jacobian(params, spec, x_u)?;
    let jac_o = logit_jacobian(params, spec, x_o)?;
    let block = entk_block(&jac_o, &jac_u)?;
    let p_tar = one_hot(y_u, spec.classes())?;
    let residual: Vec<f64> = p_tar
        .iter()
        .zip(trace_u.probs.iter())
        .map(|(p, q)| p - q)
        .collect();
    let inner = block.matvec(&residual)?;
    let a = softmax_jacobian(&trace_o.probs);
    let outer = a.matvec(&inner)?;
    Ok(outer.iter().map(|v| lr * v).collect())
}

/// Architecture family for the convergence check: a fixed lower network,
/// a final hidden layer of varying width feeding the logits, no biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GapFamily {
    pub input_dim: usize,
    /// Hidden widths before the varying layer; may be empty.
    pub lower_widths: Vec<usize>,
    pub classes: usize,
    pub activation: crate::model::Activation,
}

impl GapFamily {
    pub fn spec_for_width(&self, width: usize) -> Result<NetworkSpec> {
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.lower_widths);
        widths.push(width);
        widths.push(self.classes);
        NetworkSpec::new(widths, self.activation, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTrial {
    /// `||kappa I - Ktilde||_F` without width scaling.
    pub raw_gap: f64,
    /// The same norm scaled by `1/sqrt(width)`.
    pub scaled_gap: f64,
    /// Largest absolute entry of the lower-layer kernel.
    pub alpha: f64,
    /// High-probability bound on the scaled gap at the report's delta.
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapWidthRun {
    pub width: usize,
    pub trials: Vec<GapTrial>,
    pub satisfaction_rate: f64,
    pub mean_scaled_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub delta: f64,
    pub frozen_lower: bool,
    pub runs: Vec<GapWidthRun>,
}

/// Sensitivities of the last hidden output with respect to each lower
/// layer's pre-activations. Returns one matrix per lower layer, ordered
/// by layer; the final entry is the diagonal, stored as a vector.
fn hidden_sensitivities(
    params: &ParamVector,
    spec: &NetworkSpec,
    trace: &crate::model::ForwardTrace,
) -> (Vec<Matrix>, Vec<f64>) {
    let layers = spec.layers();
    debug_assert!(layers >= 2);
    let g_layer = layers - 2;
    let w_l = spec.layer_widths[g_layer + 1];
    let diag: Vec<f64> = trace.pre[g_layer]
        .iter()
        .map(|p| spec.activation.derivative(*p))
        .collect();
    let mut lower: Vec<Matrix> = vec![Matrix::zeros(0, 0); g_layer];
    let w = params.as_slice();
    let mut current: Option<Matrix> = None;
    for l in (0..g_layer).rev() {
        let n_out = spec.layer_widths[l + 1];
        let upper_in = n_out;
        let upper_out = spec.layer_widths[l + 2];
        let off = spec.layer_offset(l + 1);
        let mut d = Matrix::zeros(w_l, n_out);
        for a in 0..w_l {
            for j in 0..n_out {
                // row a of the layer above, propagated down
                let mut acc = 0.0;
                match &current {
                    None => {
                        // layer above is the diagonal one
                        let _ = upper_out;
                        acc = diag[a] * w[off + a * upper_in + j];
                    }
                    Some(m) => {
                        for i in 0..upper_out {
                            acc += m.get(a, i) * w[off + i * upper_in + j];
                        }
                    }
                }
                d.set(a, j, acc * spec.activation.derivative(trace.pre[l][j]));
            }
        }
        lower[l] = d.clone();
        current = Some(d);
    }
    (lower, diag)
}

/// Lower-layer tangent kernel of the last hidden output, `w_L x w_L`:
/// the sum over lower layers of `(a^l . a'^l) D^l D'^l^T`.
pub fn hidden_feature_kernel(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &[f64],
    x2: &[f64],
) -> Result<Matrix> {
    if spec.layers() < 2 {
        return Err(Error::invalid("hidden_feature_kernel needs a hidden layer"));
    }
    let t1 = forward(params, spec, x)?;
    let t2 = forward(params, spec, x2)?;
    let (low1, diag1) = hidden_sensitivities(params, spec, &t1);
    let (low2, diag2) = hidden_sensitivities(params, spec, &t2);
    let g_layer = spec.layers() - 2;
    let w_l = spec.layer_widths[g_layer + 1];
    let mut kg = Matrix::zeros(w_l, w_l);
    for l in 0..g_layer {
        let c = layer_input_product(spec, &t1, &t2, l);
        let prod = low1[l].matmul_nt(&low2[l])?;
        for a in 0..w_l {
            for b in 0..w_l {
                kg.set(a, b, kg.get(a, b) + c * prod.get(a, b));
            }
        }
    }
    let c = layer_input_product(spec, &t1, &t2, g_layer);
    for a in 0..w_l {
        kg.set(a, a, kg.get(a, a) + c * diag1[a] * diag2[a]);
    }
    Ok(kg)
}

fn layer_input_product(
    spec: &NetworkSpec,
    t1: &crate::model::ForwardTrace,
    t2: &crate::model::ForwardTrace,
    l: usize,
) -> f64 {
    let mut c = dot(&t1.post[l], &t2.post[l]);
    if spec.bias {
        c += 1.0;
    }
    c
}

/// Largest absolute entry of the lower-layer kernel, computed row by row
/// so wide layers never materialize the full matrix.
pub fn hidden_kernel_alpha(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &[f64],
    x2: &[f64],
) -> Result<f64> {
    if spec.layers() < 2 {
        return Err(Error::invalid("hidden_kernel_alpha needs a hidden layer"));
    }
    let t1 = forward(params, spec, x)?;
    let t2 = forward(params, spec, x2)?;
    let (low1, diag1) = hidden_sensitivities(params, spec, &t1);
    let (low2, diag2) = hidden_sensitivities(params, spec, &t2);
    let g_layer = spec.layers() - 2;
    let w_l = spec.layer_widths[g_layer + 1];
    let coeffs: Vec<f64> = (0..=g_layer)
        .map(|l| layer_input_product(spec, &t1, &t2, l))
        .collect();
    let mut alpha = 0.0f64;
    let mut row = vec![0.0; w_l];
    for a in 0..w_l {
        for v in row.iter_mut() {
            *v = 0.0;
        }
        for l in 0..g_layer {
            let c = coeffs[l];
            let ra = low1[l].row(a);
            for b in 0..w_l {
                row[b] += c * dot(ra, low2[l].row(b));
            }
        }
        row[a] += coeffs[g_layer] * diag1[a] * diag2[a];
        for v in &row {
            let m = libm::fabs(*v);
            if m > alpha {
                alpha = m;
            }
        }
    }
    Ok(alpha)
}

fn bound_from_alpha(classes: usize, width: usize, alpha: f64, delta: f64) -> f64 {
    let k = classes as f64;
    let log_term = libm::log(8.0 * k * k / delta);
    let tail = {
        let a = 2.0 * libm::sqrt(2.0 * log_term);
        let b = core::f64::consts::SQRT_2 * log_term;
        if a > b {
            a
        } else {
            b
        }
    };
    8.0 * k * alpha / libm::sqrt(width as f64) * tail
}

/// Monte-Carlo check of how fast the class-by-class kernel of a wide last
/// layer concentrates around a multiple of the identity. For each width,
/// fresh LeCun initializations are drawn, the kernel of a fixed same-label
/// input pair is compared against `kappa I`, and the deviation is tested
/// against the high-probability bound. With the lower layers frozen the
/// lower kernel vanishes and the gap must be exactly zero.
pub fn convergence_gap(
    family: &GapFamily,
    widths: &[usize],
    trials: usize,
    delta: f64,
    frozen_lower: bool,
    seed: u64,
) -> Result<GapReport> {
    if widths.is_empty() {
        return Err(Error::EmptyInput("convergence_gap widths"));
    }
    if trials == 0 {
        return Err(Error::invalid("convergence_gap needs at least one trial"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    for &w in widths {
        if w < family.classes {
            return Err(Error::invalid("each width must be at least the class count"));
        }
    }
    let mut rng = Rng::new(seed);
    let x: Vec<f64> = (0..family.input_dim).map(|_| rng.next_f64()).collect();
    let x2: Vec<f64> = (0..family.input_dim).map(|_| rng.next_f64()).collect();
    let k = family.classes;
    let mut runs = Vec::with_capacity(widths.len());
    for &width in widths {
        let spec = family.spec_for_width(width)?;
        let mut trials_out = Vec::with_capacity(trials);
        let mut satisfied = 0usize;
        let mut gap_sum = 0.0;
        for _ in 0..trials {
            let params = init_params(&spec, &mut rng);
            let j1 = logit_jacobian(&params, &spec, &x)?;
            let j2 = logit_jacobian(&params, &spec, &x2)?;
            let ktilde = if frozen_lower {
                last_layer_block(&j1, &j2, &spec)?
            } else {
                entk_block(&j1, &j2)?
            };
            let kappa = lpntk_from_block(&ktilde, 0, 0, false)?;
            let gap_matrix = Matrix::identity_scaled(k, kappa).sub(&ktilde)?;
            let raw_gap = gap_matrix.frobenius_norm();
            let scaled_gap = raw_gap / libm::sqrt(width as f64);
            let alpha = if frozen_lower {
                0.0
            } else {
                hidden_kernel_alpha(&params, &spec, &x, &x2)?
            };
            let bound = bound_from_alpha(k, width, alpha, delta);
            let ok = scaled_gap <= bound;
            if ok {
                satisfied += 1;
            }
            gap_sum += scaled_gap;
            trials_out.push(GapTrial {
                raw_gap,
                scaled_gap,
                alpha,
                bound,
                satisfied: ok,
            });
        }
        runs.push(GapWidthRun {
            width,
            trials: trials_out,
            satisfaction_rate: satisfied as f64 / trials as f64,
            mean_scaled_gap: gap_sum / trials as f64,
        });
    }
    Ok(GapReport {
        delta,
        frozen_lower,
        runs,
    })
}

/// Tangent block restricted to the last layer's parameters.
fn last_layer_block(j1: &Matrix, j2: &Matrix, spec: &NetworkSpec) -> Result<Matrix> {
    let off = spec.layer_offset(spec.layers() - 1);
    let k = spec.classes();
    let mut out = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            out.set(a, b, dot(&j1.row(a)[off..], &j2.row(b)[off..]));
        }
    }
    Ok(out)
}
