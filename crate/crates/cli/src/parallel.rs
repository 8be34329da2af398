//! Threaded kernel-matrix construction with a memory budget. When all
//! per-sample feature vectors fit the budget they are computed once and
//! the upper triangle is filled by row blocks in parallel; otherwise
//! features are recomputed per block pair so memory stays bounded.
//! Every entry is a dot product of deterministic feature vectors, so the
//! result is bit-identical to the serial builder regardless of thread
//! count or budget.

use std::ops::Range;

use lpntk_core::data::LabeledDataset;
use lpntk_core::kernel::{sample_feature, KernelKind, KernelMatrix};
use lpntk_core::model::{NetworkSpec, ParamVector};
use lpntk_core::numerics::dot;

use crate::{CliError, CliResult};

/// Contiguous ranges covering `0..n` with roughly equal per-range work;
/// `weights_decline` balances by upper-triangle row lengths instead of
/// plain counts. At most `threads` ranges.
fn row_chunks(n: usize, threads: usize, weights_decline: bool) -> Vec<Range<usize>> {
    let t = threads.clamp(1, n.max(1));
    let total: usize = if weights_decline {
        n * (n + 1) / 2
    } else {
        n
    };
    let target = total.div_ceil(t);
    let mut out = Vec::new();
    let mut start = 0;
    let mut acc = 0;
    for i in 0..n {
        acc += if weights_decline { n - i } else { 1 };
        if acc >= target || i == n - 1 {
            out.push(start..i + 1);
            start = i + 1;
            acc = 0;
        }
    }
    out
}

/// Feature vectors for a row range, computed across the worker pool in
/// deterministic order.
fn features_for(
    ds: &LabeledDataset,
    params: &ParamVector,
    spec: &NetworkSpec,
    kind: KernelKind,
    rows: Range<usize>,
    threads: usize,
) -> CliResult<Vec<Vec<f64>>> {
    let count = rows.len();
    let chunks = row_chunks(count, threads, false);
    let results: Vec<CliResult<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                let chunk = chunk.clone();
                let base = rows.start;
                scope.spawn(move || {
                    let mut out = Vec::with_capacity(chunk.len());
                    for local in chunk {
                        let i = base + local;
                        let f =
                            sample_feature(params, spec, ds.features(i), ds.label(i), kind)?;
                        if f.iter().any(|v| !v.is_finite()) {
                            return Err(CliError::runtime(format!(
                                "non-finite kernel feature at sample {i}"
                            )));
                        }
                        out.push(f);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("kernel worker panicked"))
            .collect()
    });
    let mut features = Vec::with_capacity(count);
    for r in results {
        features.extend(r?);
    }
    Ok(features)
}

fn fill_all_features(
    features: &[Vec<f64>],
    n: usize,
    threads: usize,
    upper: &mut [f64],
) {
    // carve the packed triangle into per-row slices, then hand each
    // worker a contiguous group of rows
    let mut slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
    let mut rest = upper;
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(n - i);
        slices.push((i, head));
        rest = tail;
    }
    let chunks = row_chunks(n, threads, true);
    let mut grouped: Vec<Vec<(usize, &mut [f64])>> =
        chunks.iter().map(|c| Vec::with_capacity(c.len())).collect();
    for (i, slice) in slices {
        let c = chunks.iter().position(|r| r.contains(&i)).expect("row covered");
        grouped[c].push((i, slice));
    }
    std::thread::scope(|scope| {
        for group in grouped {
            scope.spawn(move || {
                for (i, row) in group {
                    for (off, j) in (i..n).enumerate() {
                        row[off] = dot(&features[i], &features[j]);
                    }
                }
            });
        }
    });
}

pub fn kernel_matrix_parallel(
    ds: &LabeledDataset,
    params: &ParamVector,
    spec: &NetworkSpec,
    kind: KernelKind,
    threads: usize,
    cache_bytes: u64,
) -> CliResult<KernelMatrix> {
    if threads == 0 {
        return Err(CliError::config("threads must be at least 1"));
    }
    if ds.is_empty() {
        return Err(CliError::config("kernel needs a non-empty dataset"));
    }
    if ds.classes() != spec.classes() {
        return Err(CliError::config(format!(
            "dataset has {} classes but the network outputs {}",
            ds.classes(),
            spec.classes()
        )));
    }
    let n = ds.len();
    let d = spec.param_count();
    let mut upper = vec![0.0; n * (n + 1) / 2];
    let full_bytes = (n as u64)
        .saturating_mul(d as u64)
        .saturating_mul(8);
    if full_bytes <= cache_bytes {
        let features = features_for(ds, params, spec, kind, 0..n, threads)?;
        fill_all_features(&features, n, threads, &mut upper);
    } else {
        // two blocks resident at a time
        let per_row = (d as u64).saturating_mul(8).max(1);
        let block = ((cache_bytes / 2) / per_row).max(1) as usize;
        let starts: Vec<usize> = (0..n).step_by(block).collect();
        for &si in &starts {
            let rows_i = si..(si + block).min(n);
            let feats_i = features_for(ds, params, spec, kind, rows_i.clone(), threads)?;
            for &sj in &starts {
                if sj < si {
                    continue;
                }
                let rows_j = sj..(sj + block).min(n);
                let feats_j = if sj == si {
                    None
                } else {
                    Some(features_for(ds, params, spec, kind, rows_j.clone(), threads)?)
                };
                for i in rows_i.clone() {
                    for j in rows_j.clone() {
                        if j < i {
                            continue;
                        }
                        let fj = match &feats_j {
                            None => &feats_i[j - si],
                            Some(f) => &f[j - sj],
                        };
                        upper[KernelMatrix::upper_index(n, i, j)] =
                            dot(&feats_i[i - si], fj);
                    }
                }
            }
        }
    }
    KernelMatrix::from_upper(kind, ds.classes(), ds.ids().to_vec(), upper)
        .map_err(CliError::from)
}
