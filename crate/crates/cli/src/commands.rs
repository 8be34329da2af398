//! One function per subcommand. Every command resolves the experiment
//! config, runs the work, and leaves three kinds of files in the output
//! directory: the artifacts themselves, an echo of the effective config,
//! and a run manifest stamping all inputs and outputs. Numeric artifacts
//! depend only on config + seed, never on wall clock or thread count.

use std::fs;
use std::path::{Path, PathBuf};

use lpntk_core::analysis::{
    cluster_size_histogram, detect_forgetting, difficulty_correlation, eligible_slots,
    find_redundant, fpc, learning_difficulty, permutation_baseline_f1, predict_forgetting_log,
    prune_pipeline, score_predictions,
};
use lpntk_core::data::partition_blocks;
use lpntk_core::kernel::{convergence_gap, GapFamily, KernelMatrix};
use lpntk_core::model::{accuracy, train, TrainConfig};
use lpntk_core::numerics::Rng;
use lpntk_core::rl::{random_baseline, run_training, GridWorld, Strategy};
use serde::{Deserialize, Serialize};

use crate::config::{parse_kind, ExperimentConfig};
use crate::formats::{
    kernel_csv, read_checkpoint, read_kernel, sha256_file, write_checkpoint, write_kernel,
};
use crate::manifest::{DatasetManifest, Manifest};
use crate::parallel::kernel_matrix_parallel;
use crate::{CliError, CliResult};

/// Learning-difficulty correlations are always reported against these
/// subset divisors.
pub const DIFFICULTY_DIVISORS: [usize; 3] = [4, 16, 64];

const BASELINE_DRAWS: usize = 200;

/// Resolved invocation state shared by all commands.
pub struct Ctx {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub hash: String,
    pub threads: usize,
}

impl Ctx {
    pub fn prepare(
        config_path: &Path,
        seed: Option<u64>,
        threads: usize,
        out: Option<&Path>,
    ) -> CliResult<Ctx> {
        if threads == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        let mut config = ExperimentConfig::load(config_path)?;
        config.apply_overrides(seed, out);
        let hash = config.hash();
        Ok(Ctx {
            config,
            config_path: config_path.to_owned(),
            hash,
            threads,
        })
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        let dir = self.config.out_dir();
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// The effective config next to the outputs; its compact
    /// serialization is what the config hash covers.
    fn echo_config(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(&self.config).expect("config serializes");
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, &self.hash, self.config.seed, self.threads)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{} is malformed: {e}", path.display())))
}

/// Checks an artifact's embedded config hash against the running config.
fn check_hash(what: &Path, embedded: &str, expected: &str) -> CliResult<()> {
    if embedded != expected {
        return Err(CliError::config(format!(
            "{} was produced by a different config (hash {} vs {})",
            what.display(),
            &embedded[..12.min(embedded.len())],
            &expected[..12]
        )));
    }
    Ok(())
}

/// Binary artifacts cannot embed the config hash, so they get a sidecar
/// `<file>.meta.json` carrying it plus the file digest. Verification is
/// skipped when no sidecar exists (hand-built fixtures stay usable) but
/// a present sidecar must match both the file and the running config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub config_hash: String,
    pub sha256: String,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    path.with_file_name(name)
}

pub fn write_file_meta(path: &Path, config_hash: &str) -> CliResult<()> {
    let meta = FileMeta {
        config_hash: config_hash.to_owned(),
        sha256: hex::encode(sha256_file(path)?),
    };
    write_json(&meta_path(path), &meta)
}

pub fn verify_file_meta(path: &Path, config_hash: &str) -> CliResult<()> {
    let sidecar = meta_path(path);
    if !sidecar.exists() {
        return Ok(());
    }
    let meta: FileMeta = read_json(&sidecar)?;
    let actual = hex::encode(sha256_file(path)?);
    if meta.sha256 != actual {
        return Err(CliError::config(format!(
            "{} does not match its sidecar digest; the file changed since it was written",
            path.display()
        )));
    }
    check_hash(path, &meta.config_hash, config_hash)
}

// ---------------------------------------------------------------- train

pub fn cmd_train(ctx: &Ctx) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let ds = ctx.config.build_dataset()?;
    let spec = ctx.config.network_spec()?;
    if ds.dim() != spec.input_dim() || ds.classes() != spec.classes() {
        return Err(CliError::config(format!(
            "dataset ({} features, {} classes) does not fit the network ({} in, {} out)",
            ds.dim(),
            ds.classes(),
            spec.input_dim(),
            spec.classes()
        )));
    }
    let cfg = ctx.config.train_config();
    let (params, log) = train(&ds, None, &spec, &cfg)?;

    let ckpt_path = dir.join("checkpoint.lpw");
    write_checkpoint(&ckpt_path, &spec, &params)?;
    write_file_meta(&ckpt_path, &ctx.hash)?;

    let losses_path = dir.join("losses.csv");
    let mut csv = format!("# config_hash={}\n", ctx.hash);
    csv.push_str("epoch");
    for id in &log.ids {
        csv.push_str(&format!(",{id}"));
    }
    csv.push('\n');
    for (e, row) in log.losses.iter().enumerate() {
        csv.push_str(&format!("{e}"));
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    fs::write(&losses_path, csv)?;

    let acc_path = dir.join("accuracy.csv");
    let mut csv = format!("# config_hash={}\nepoch,train_accuracy\n", ctx.hash);
    for (e, ckpt) in log.checkpoints.iter().enumerate() {
        csv.push_str(&format!("{e},{}\n", accuracy(ckpt, &spec, &ds)?));
    }
    fs::write(&acc_path, csv)?;

    let ds_path = dir.join("dataset.json");
    write_json(&ds_path, &DatasetManifest::describe(&ctx.config, &ds))?;

    let echoed = ctx.echo_config(&dir)?;
    let mut m = ctx.manifest("train");
    m.add_input(&ctx.config_path)?;
    for p in [&ckpt_path, &losses_path, &acc_path, &ds_path, &echoed] {
        m.add_output(p)?;
    }
    m.write(&dir, "train")
}

// --------------------------------------------------------------- kernel

pub fn cmd_kernel(
    ctx: &Ctx,
    ckpt: &Path,
    data: Option<&Path>,
    kind_flag: Option<&str>,
    out: Option<&Path>,
) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    verify_file_meta(ckpt, &ctx.hash)?;
    let (spec, params) = read_checkpoint(ckpt)?;
    let ds = ctx.config.build_dataset()?;
    if let Some(manifest_path) = data {
        let described = DatasetManifest::describe(&ctx.config, &ds);
        let recorded: DatasetManifest = read_json(manifest_path)?;
        if recorded != described {
            return Err(CliError::config(format!(
                "{} does not describe the config's dataset",
                manifest_path.display()
            )));
        }
    }
    if ds.dim() != spec.input_dim() || ds.classes() != spec.classes() {
        return Err(CliError::config(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            spec.input_dim(),
            spec.classes(),
            ds.dim(),
            ds.classes()
        )));
    }
    let kind = match kind_flag {
        Some(s) => parse_kind(s)?,
        None => ctx.config.kernel_kind()?,
    };
    let mut kernel = kernel_matrix_parallel(
        &ds,
        &params,
        &spec,
        kind,
        ctx.threads,
        ctx.config.cache_bytes()?,
    )?;
    kernel.set_fingerprint(sha256_file(ckpt)?);

    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("kernel.lpk"));
    write_kernel(&out_path, &kernel)?;
    write_file_meta(&out_path, &ctx.hash)?;
    let csv_path = out_path.with_extension("csv");
    fs::write(&csv_path, kernel_csv(&kernel, &ctx.hash))?;

    let echoed = ctx.echo_config(&dir)?;
    let mut m = ctx.manifest("kernel");
    m.add_input(&ctx.config_path)?;
    m.add_input(ckpt)?;
    for p in [&out_path, &csv_path, &echoed] {
        m.add_output(p)?;
    }
    m.write(&dir, "kernel")
}

// -------------------------------------------------------------- cluster

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub config_hash: String,
    pub kernel_fingerprint: String,
    pub m: usize,
    /// Centroid sample ids, in creation order.
    pub centroids: Vec<u64>,
    /// Cluster member ids including the centroid, ascending.
    pub clusters: Vec<Vec<u64>>,
    /// Cluster sizes, descending.
    pub histogram: Vec<usize>,
}

fn load_kernel_input(ctx: &Ctx, path: &Path, ckpt: Option<&Path>) -> CliResult<KernelMatrix> {
    verify_file_meta(path, &ctx.hash)?;
    let kernel = read_kernel(path)?;
    if let Some(c) = ckpt {
        let fp = sha256_file(c)?;
        if &fp != kernel.fingerprint() {
            return Err(CliError::config(format!(
                "kernel {} was not computed from checkpoint {}",
                path.display(),
                c.display()
            )));
        }
    }
    Ok(kernel)
}

fn ids_of(kernel: &KernelMatrix, indices: &[usize]) -> Vec<u64> {
    indices.iter().map(|&i| kernel.ids()[i]).collect()
}

pub fn cmd_cluster(
    ctx: &Ctx,
    kernel_path: &Path,
    m_flag: Option<usize>,
    ckpt: Option<&Path>,
) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let kernel = load_kernel_input(ctx, kernel_path, ckpt)?;
    let m = m_flag.unwrap_or_else(|| ctx.config.cluster_count(kernel.n()));
    let result = fpc(&kernel, m).map_err(|e| CliError::config(e.to_string()))?;
    let clusters: Vec<Vec<u64>> = (0..result.centroids.len())
        .map(|k| ids_of(&kernel, &result.cluster_samples(k)))
        .collect();
    let artifact = ClusterArtifact {
        config_hash: ctx.hash.clone(),
        kernel_fingerprint: hex::encode(kernel.fingerprint()),
        m,
        centroids: ids_of(&kernel, &result.centroids),
        clusters,
        histogram: cluster_size_histogram(&result),
    };
    let out_path = dir.join("clusters.json");
    write_json(&out_path, &artifact)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("cluster");
    man.add_input(&ctx.config_path)?;
    man.add_input(kernel_path)?;
    man.add_output(&out_path)?;
    man.add_output(&echoed)?;
    man.write(&dir, "cluster")
}

// ------------------------------------------------------------ redundant

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundantArtifact {
    pub config_hash: String,
    pub kernel_fingerprint: String,
    pub n: usize,
    pub count: usize,
    pub redundant: Vec<u64>,
}

pub fn cmd_redundant(ctx: &Ctx, kernel_path: &Path) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let kernel = load_kernel_input(ctx, kernel_path, None)?;
    let redundant = find_redundant(&kernel);
    let artifact = RedundantArtifact {
        config_hash: ctx.hash.clone(),
        kernel_fingerprint: hex::encode(kernel.fingerprint()),
        n: kernel.n(),
        count: redundant.len(),
        redundant: ids_of(&kernel, &redundant),
    };
    let out_path = dir.join("redundant.json");
    write_json(&out_path, &artifact)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("redundant");
    man.add_input(&ctx.config_path)?;
    man.add_input(kernel_path)?;
    man.add_output(&out_path)?;
    man.add_output(&echoed)?;
    man.write(&dir, "redundant")
}

// ---------------------------------------------------------------- prune

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneArtifact {
    pub config_hash: String,
    pub kernel_fingerprint: String,
    pub m: usize,
    pub frac: f64,
    pub redundant: Vec<u64>,
    pub head_cluster: Vec<u64>,
    pub pruned: Vec<u64>,
    pub retained: Vec<u64>,
}

pub fn cmd_prune(
    ctx: &Ctx,
    kernel_path: &Path,
    frac_flag: Option<f64>,
    m_flag: Option<usize>,
) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let kernel = load_kernel_input(ctx, kernel_path, None)?;
    let frac = frac_flag.unwrap_or(ctx.config.analysis.frac);
    let m = m_flag.unwrap_or_else(|| ctx.config.cluster_count(kernel.n()));
    let mut rng = Rng::new(ctx.config.seed);
    let outcome = prune_pipeline(&kernel, m, frac, &mut rng)
        .map_err(|e| CliError::config(e.to_string()))?;
    let artifact = PruneArtifact {
        config_hash: ctx.hash.clone(),
        kernel_fingerprint: hex::encode(kernel.fingerprint()),
        m,
        frac,
        redundant: ids_of(&kernel, &outcome.redundant),
        head_cluster: ids_of(&kernel, &outcome.head_cluster),
        pruned: ids_of(&kernel, &outcome.pruned),
        retained: ids_of(&kernel, &outcome.retained),
    };
    let out_path = dir.join("prune.json");
    write_json(&out_path, &artifact)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("prune");
    man.add_input(&ctx.config_path)?;
    man.add_input(kernel_path)?;
    man.add_output(&out_path)?;
    man.add_output(&echoed)?;
    man.write(&dir, "prune")
}

// ----------------------------------------------------------- difficulty

pub fn cmd_difficulty(ctx: &Ctx) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let ds = ctx.config.build_dataset()?;
    let spec = ctx.config.network_spec()?;
    let base_cfg = ctx.config.train_config();
    let (_, full_log) = train(&ds, None, &spec, &base_cfg)?;
    let full = learning_difficulty(&full_log)?;

    let mut rng = Rng::new(ctx.config.seed);
    let mut rows = Vec::new();
    for &divisor in &DIFFICULTY_DIVISORS {
        let blocks = partition_blocks(&ds, divisor, &mut rng)
            .map_err(|e| CliError::config(e.to_string()))?;
        let mut records = Vec::new();
        for block in &blocks {
            let sub_cfg = TrainConfig {
                seed: rng.next_u64(),
                ..base_cfg.clone()
            };
            let (_, log) = train(block, None, &spec, &sub_cfg)?;
            records.extend(learning_difficulty(&log)?);
        }
        let rho = difficulty_correlation(&full, &records)?;
        rows.push((divisor, rho));
    }

    let rho_path = dir.join("difficulty.csv");
    let mut csv = format!("# config_hash={}\ndivisor,rho\n", ctx.hash);
    for (divisor, rho) in &rows {
        csv.push_str(&format!("{divisor},{rho}\n"));
    }
    fs::write(&rho_path, csv)?;

    let full_path = dir.join("difficulty_full.csv");
    let mut csv = format!("# config_hash={}\nid,cumulative_loss\n", ctx.hash);
    for rec in &full {
        csv.push_str(&format!("{},{}\n", rec.id, rec.cumulative_loss));
    }
    fs::write(&full_path, csv)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("difficulty");
    man.add_input(&ctx.config_path)?;
    for p in [&rho_path, &full_path, &echoed] {
        man.add_output(p)?;
    }
    man.write(&dir, "difficulty")
}

// --------------------------------------------------------------- forget

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgetArtifact {
    pub config_hash: String,
    pub actual_events: usize,
    pub predicted_events: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub baseline_f1: f64,
    /// Absent when the baseline is exactly zero.
    pub f1_over_baseline: Option<f64>,
}

pub fn cmd_forget(ctx: &Ctx) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let ds = ctx.config.build_dataset()?;
    let spec = ctx.config.network_spec()?;
    let mut cfg = ctx.config.train_config();
    cfg.record_iteration_params = true;
    let (_, log) = train(&ds, None, &spec, &cfg)?;

    let actual = detect_forgetting(&log, &ds)?;
    let predicted = predict_forgetting_log(&log, &ds)?;
    let report = score_predictions(&predicted, &actual);
    let slots = eligible_slots(&log, &ds)?;
    let mut rng = Rng::new(ctx.config.seed);
    let baseline = permutation_baseline_f1(
        &actual,
        &slots,
        report.predicted,
        BASELINE_DRAWS,
        &mut rng,
    )?;
    let artifact = ForgetArtifact {
        config_hash: ctx.hash.clone(),
        actual_events: report.actual,
        predicted_events: report.predicted,
        true_positives: report.true_positives,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
        baseline_f1: baseline,
        f1_over_baseline: (baseline > 0.0).then(|| report.f1 / baseline),
    };
    let out_path = dir.join("forget.json");
    write_json(&out_path, &artifact)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("forget");
    man.add_input(&ctx.config_path)?;
    man.add_output(&out_path)?;
    man.add_output(&echoed)?;
    man.write(&dir, "forget")
}

// ------------------------------------------------------------------ gap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapWidthArtifact {
    pub width: usize,
    pub satisfaction_rate: f64,
    pub mean_scaled_gap: f64,
    pub max_scaled_gap: f64,
    pub mean_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapArtifact {
    pub config_hash: String,
    pub delta: f64,
    pub frozen_lower: bool,
    pub trials: usize,
    pub widths: Vec<GapWidthArtifact>,
}

/// The model section doubles as the architecture family: its hidden
/// stack forms the fixed lower network and the varying layer is appended
/// before the logits.
pub fn cmd_gap(
    ctx: &Ctx,
    widths: &[usize],
    trials: usize,
    delta: f64,
    frozen: bool,
) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let model = ctx.config.network_spec()?;
    let family = GapFamily {
        input_dim: model.input_dim(),
        lower_widths: model.layer_widths[1..model.layer_widths.len() - 1].to_vec(),
        classes: model.classes(),
        activation: model.activation,
    };
    let report = convergence_gap(&family, widths, trials, delta, frozen, ctx.config.seed)
        .map_err(|e| CliError::config(e.to_string()))?;

    let widths_out: Vec<GapWidthArtifact> = report
        .runs
        .iter()
        .map(|run| {
            let mut max_gap = 0.0;
            let mut bound_sum = 0.0;
            for t in &run.trials {
                if t.scaled_gap > max_gap {
                    max_gap = t.scaled_gap;
                }
                bound_sum += t.bound;
            }
            GapWidthArtifact {
                width: run.width,
                satisfaction_rate: run.satisfaction_rate,
                mean_scaled_gap: run.mean_scaled_gap,
                max_scaled_gap: max_gap,
                mean_bound: bound_sum / run.trials.len() as f64,
            }
        })
        .collect();
    let artifact = GapArtifact {
        config_hash: ctx.hash.clone(),
        delta,
        frozen_lower: frozen,
        trials,
        widths: widths_out,
    };
    let json_path = dir.join("gap.json");
    write_json(&json_path, &artifact)?;

    let csv_path = dir.join("gap.csv");
    let mut csv = format!(
        "# config_hash={}\nwidth,satisfaction_rate,mean_scaled_gap,max_scaled_gap,mean_bound\n",
        ctx.hash
    );
    for w in &artifact.widths {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            w.width, w.satisfaction_rate, w.mean_scaled_gap, w.max_scaled_gap, w.mean_bound
        ));
    }
    fs::write(&csv_path, csv)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("gap");
    man.add_input(&ctx.config_path)?;
    for p in [&json_path, &csv_path, &echoed] {
        man.add_output(p)?;
    }
    man.write(&dir, "gap")
}

// ------------------------------------------------------------------- rl

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlArtifact {
    pub config_hash: String,
    pub strategy: String,
    pub final_mean: f64,
    pub final_std: f64,
    pub random_mean: f64,
    pub random_std: f64,
}

pub fn cmd_rl(ctx: &Ctx, strategy_flag: Option<&str>) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let strategy = match strategy_flag {
        Some("eps_greedy") => Some(Strategy::EpsGreedy),
        Some("lpntk_max") => Some(Strategy::LpntkMax),
        Some(other) => {
            return Err(CliError::config(format!(
                "unknown strategy {other:?}; use eps_greedy or lpntk_max"
            )));
        }
        None => None,
    };
    let cfg = ctx.config.rl_config(strategy)?;
    let env = GridWorld::default();
    let (_, curve) = run_training(&env, &cfg)?;
    let mut rng = Rng::new(cfg.seed);
    let (random_mean, random_std) = random_baseline(&env, cfg.eval_episodes, &mut rng)?;
    let last = curve.last().ok_or_else(|| {
        CliError::runtime("training produced no evaluation points")
    })?;

    let curve_path = dir.join("returns.csv");
    let mut csv = format!("# config_hash={}\nstep,eval_mean,eval_std\n", ctx.hash);
    for p in &curve {
        csv.push_str(&format!("{},{},{}\n", p.step, p.mean, p.std));
    }
    fs::write(&curve_path, csv)?;

    let artifact = RlArtifact {
        config_hash: ctx.hash.clone(),
        strategy: match cfg.strategy {
            Strategy::EpsGreedy => "eps_greedy".to_owned(),
            Strategy::LpntkMax => "lpntk_max".to_owned(),
        },
        final_mean: last.mean,
        final_std: last.std,
        random_mean,
        random_std,
    };
    let json_path = dir.join("rl.json");
    write_json(&json_path, &artifact)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("rl");
    man.add_input(&ctx.config_path)?;
    for p in [&curve_path, &json_path, &echoed] {
        man.add_output(p)?;
    }
    man.write(&dir, "rl")
}

// --------------------------------------------------------------- report

/// Rechecks the config hash of every known artifact in the output
/// directory and condenses their head numbers into one CSV.
pub fn cmd_report(ctx: &Ctx) -> CliResult<()> {
    let dir = ctx.out_dir()?;
    let mut rows: Vec<(String, String, String)> = Vec::new();

    let clusters_path = dir.join("clusters.json");
    if clusters_path.exists() {
        let a: ClusterArtifact = read_json(&clusters_path)?;
        check_hash(&clusters_path, &a.config_hash, &ctx.hash)?;
        rows.push(("clusters".into(), "m".into(), a.m.to_string()));
        rows.push((
            "clusters".into(),
            "largest".into(),
            a.histogram.first().copied().unwrap_or(0).to_string(),
        ));
    }
    let redundant_path = dir.join("redundant.json");
    if redundant_path.exists() {
        let a: RedundantArtifact = read_json(&redundant_path)?;
        check_hash(&redundant_path, &a.config_hash, &ctx.hash)?;
        rows.push(("redundant".into(), "count".into(), a.count.to_string()));
        rows.push(("redundant".into(), "n".into(), a.n.to_string()));
    }
    let prune_path = dir.join("prune.json");
    if prune_path.exists() {
        let a: PruneArtifact = read_json(&prune_path)?;
        check_hash(&prune_path, &a.config_hash, &ctx.hash)?;
        rows.push(("prune".into(), "pruned".into(), a.pruned.len().to_string()));
        rows.push((
            "prune".into(),
            "retained".into(),
            a.retained.len().to_string(),
        ));
    }
    let forget_path = dir.join("forget.json");
    if forget_path.exists() {
        let a: ForgetArtifact = read_json(&forget_path)?;
        check_hash(&forget_path, &a.config_hash, &ctx.hash)?;
        rows.push(("forget".into(), "f1".into(), a.f1.to_string()));
        rows.push((
            "forget".into(),
            "baseline_f1".into(),
            a.baseline_f1.to_string(),
        ));
    }
    let gap_path = dir.join("gap.json");
    if gap_path.exists() {
        let a: GapArtifact = read_json(&gap_path)?;
        check_hash(&gap_path, &a.config_hash, &ctx.hash)?;
        for w in &a.widths {
            rows.push((
                "gap".into(),
                format!("satisfaction_{}", w.width),
                w.satisfaction_rate.to_string(),
            ));
        }
    }
    let rl_path = dir.join("rl.json");
    if rl_path.exists() {
        let a: RlArtifact = read_json(&rl_path)?;
        check_hash(&rl_path, &a.config_hash, &ctx.hash)?;
        rows.push(("rl".into(), "final_mean".into(), a.final_mean.to_string()));
        rows.push(("rl".into(), "random_mean".into(), a.random_mean.to_string()));
    }
    let difficulty_path = dir.join("difficulty.csv");
    if difficulty_path.exists() {
        let text = fs::read_to_string(&difficulty_path)?;
        let mut lines = text.lines();
        let head = lines.next().unwrap_or_default();
        let embedded = head.strip_prefix("# config_hash=").unwrap_or_default();
        check_hash(&difficulty_path, embedded, &ctx.hash)?;
        for line in lines.skip(1) {
            if let Some((divisor, rho)) = line.split_once(',') {
                rows.push(("difficulty".into(), format!("rho_{divisor}"), rho.into()));
            }
        }
    }

    let report_path = dir.join("report.csv");
    let mut csv = format!("# config_hash={}\nartifact,key,value\n", ctx.hash);
    for (artifact, key, value) in &rows {
        csv.push_str(&format!("{artifact},{key},{value}\n"));
    }
    fs::write(&report_path, csv)?;

    let echoed = ctx.echo_config(&dir)?;
    let mut man = ctx.manifest("report");
    man.add_input(&ctx.config_path)?;
    man.add_output(&report_path)?;
    man.add_output(&echoed)?;
    man.write(&dir, "report")
}
